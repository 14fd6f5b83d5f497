// Copyright 2026-present the rankpipe project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rankpipe/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include "json.hpp"

namespace rankpipe {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw Error("cannot open file: " + path);
  return in;
}

std::string location(const std::string& path, size_t line_no) {
  return path + ":" + std::to_string(line_no);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

// TREC qrels/run files are whitespace-delimited, so ids must stay atomic.
void check_id(const std::string& id, const std::string& where) {
  for (char c : id) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      throw Error(where + ": id '" + id + "' contains whitespace");
    }
  }
}

}  // namespace

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "jsonl") return CorpusFormat::jsonl;
  if (name == "tsv") return CorpusFormat::tsv;
  throw UsageError("unknown corpus format '" + name + "' (expected jsonl or tsv)");
}

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
  if (query_id.empty() || doc_id.empty()) throw Error("qrels: empty query or doc id");
  if (grade < 0) throw Error("qrels: negative grade for (" + query_id + ", " + doc_id + ")");
  judgments_[query_id][doc_id] = grade;
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
  auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return 0;
  auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

std::vector<std::string> Qrels::relevant_docs(const std::string& query_id) const {
  std::vector<std::string> docs;
  auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return docs;
  for (const auto& [doc_id, grade] : q->second) {
    if (grade > 0) docs.push_back(doc_id);
  }
  return docs;
}

bool Qrels::has_query(const std::string& query_id) const {
  return judgments_.count(query_id) > 0;
}

size_t Qrels::size() const {
  size_t n = 0;
  for (const auto& [qid, docs] : judgments_) n += docs.size();
  return n;
}

void RunList::sort_entries() {
  std::stable_sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
}

void RunList::validate() const {
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (!seen.insert(entries[i].doc_id).second) {
      throw Error("run for query '" + query_id + "': duplicate doc '" + entries[i].doc_id + "'");
    }
    if (i > 0) {
      const RunEntry& prev = entries[i - 1];
      const RunEntry& cur = entries[i];
      bool ordered = prev.score > cur.score ||
                     (prev.score == cur.score && prev.doc_id < cur.doc_id);
      if (!ordered) {
        throw Error("run for query '" + query_id + "': entries out of order at position " +
                    std::to_string(i + 1));
      }
    }
  }
}

std::vector<Document> load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in = open_input(path);
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    Document doc;
    if (format == CorpusFormat::tsv) {
      size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw Error(location(path, line_no) + ": expected id<TAB>text");
      }
      doc.id = line.substr(0, tab);
      doc.text = line.substr(tab + 1);
    } else {
      nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
      if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
          !record.contains("text") || !record["id"].is_string() || !record["text"].is_string()) {
        throw Error(location(path, line_no) +
                    ": expected a JSON object with string fields \"id\" and \"text\"");
      }
      doc.id = record["id"].get<std::string>();
      doc.text = record["text"].get<std::string>();
    }
    if (doc.id.empty()) throw Error(location(path, line_no) + ": empty doc id");
    check_id(doc.id, location(path, line_no));
    if (!ids.insert(doc.id).second) {
      throw Error(location(path, line_no) + ": duplicate doc id '" + doc.id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Query> load_queries(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<Query> queries;
  std::unordered_set<std::string> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(location(path, line_no) + ": expected qid<TAB>text");
    }
    Query q{line.substr(0, tab), line.substr(tab + 1)};
    if (q.id.empty()) throw Error(location(path, line_no) + ": empty query id");
    check_id(q.id, location(path, line_no));
    if (!ids.insert(q.id).second) {
      throw Error(location(path, line_no) + ": duplicate query id '" + q.id + "'");
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

Qrels load_qrels(const std::string& path) {
  std::ifstream in = open_input(path);
  Qrels qrels;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    std::vector<std::string> fields = split_whitespace(line);
    if (fields.size() != 4) {
      throw Error(location(path, line_no) + ": expected 'qid 0 docid grade'");
    }
    long grade = parse_long(fields[3], location(path, line_no));
    if (grade < 0) throw Error(location(path, line_no) + ": negative relevance grade");
    qrels.set(fields[0], fields[2], static_cast<int>(grade));
  }
  return qrels;
}

void write_run(const std::vector<RunList>& runs, const std::string& path) {
  for (const RunList& run : runs) run.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  for (const RunList& run : runs) {
    for (size_t i = 0; i < run.entries.size(); ++i) {
      out << run.query_id << " Q0 " << run.entries[i].doc_id << ' ' << (i + 1) << ' '
          << format_score(run.entries[i].score) << ' ' << run.tag << '\n';
    }
  }
  if (!out.good()) throw Error("failed while writing " + path);
}

std::vector<RunList> read_run(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<RunList> runs;
  std::unordered_set<std::string> finished_queries;
  std::unordered_set<std::string> seen_docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    std::vector<std::string> fields = split_whitespace(line);
    if (fields.size() != 6) {
      throw Error(location(path, line_no) + ": expected 'qid Q0 docid rank score tag'");
    }
    const std::string& qid = fields[0];
    long rank = parse_long(fields[3], location(path, line_no));
    double score = 0.0;
    try {
      size_t used = 0;
      score = std::stod(fields[4], &used);
      if (used != fields[4].size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw Error(location(path, line_no) + ": bad score '" + fields[4] + "'");
    }

    if (runs.empty() || runs.back().query_id != qid) {
      if (finished_queries.count(qid)) {
        throw Error(location(path, line_no) + ": non-contiguous entries for query '" + qid + "'");
      }
      if (!runs.empty()) finished_queries.insert(runs.back().query_id);
      runs.push_back(RunList{qid, {}, fields[5]});
      seen_docs.clear();
    }
    RunList& run = runs.back();
    if (rank != static_cast<long>(run.entries.size()) + 1) {
      throw Error(location(path, line_no) + ": rank " + std::to_string(rank) +
                  " inconsistent with position " + std::to_string(run.entries.size() + 1));
    }
    if (!run.entries.empty() && run.entries.back().score < score) {
      throw Error(location(path, line_no) + ": scores increase within query '" + qid + "'");
    }
    if (!seen_docs.insert(fields[2]).second) {
      throw Error(location(path, line_no) + ": duplicate doc '" + fields[2] + "' for query '" +
                  qid + "'");
    }
    run.entries.push_back(RunEntry{fields[2], score});
  }
  return runs;
}

}  // namespace rankpipe
