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

#include "rankpipe/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace rankpipe {

namespace {

bool is_special(TokenId id) { return id < Vocabulary::kNumSpecials; }

/// Distinct content token ids of a query that occur in the collection.
std::vector<TokenId> collection_terms(const InvertedIndex& index,
                                      const std::vector<TokenId>& query_ids) {
  std::set<TokenId> distinct(query_ids.begin(), query_ids.end());
  std::vector<TokenId> terms;
  for (TokenId t : distinct) {
    if (!is_special(t) && index.doc_frequency(t) > 0) terms.push_back(t);
  }
  return terms;
}

double idf_bm25(int32_t n_docs, int32_t df) {
  return std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
}

double idf_tfidf(int32_t n_docs, int32_t df) {
  return std::log(static_cast<double>(n_docs) / df);
}

double log_tf(int32_t tf) { return 1.0 + std::log(static_cast<double>(tf)); }

}  // namespace

void Bm25Params::validate() const {
  if (!(k1 >= 0.0)) throw Error("bm25: k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw Error("bm25: b must be in [0,1]");
  if (!(delta >= 0.0)) throw Error("bm25: delta must be >= 0");
}

int32_t InvertedIndex::doc_frequency(TokenId token) const {
  auto it = postings.find(token);
  return it == postings.end() ? 0 : static_cast<int32_t>(it->second.size());
}

int32_t InvertedIndex::term_frequency(TokenId token, int32_t doc_index) const {
  auto it = postings.find(token);
  if (it == postings.end()) return 0;
  const std::vector<Posting>& list = it->second;
  auto pos = std::lower_bound(list.begin(), list.end(), doc_index,
                              [](const Posting& p, int32_t d) { return p.doc_index < d; });
  if (pos == list.end() || pos->doc_index != doc_index) return 0;
  return pos->term_frequency;
}

InvertedIndex build_index(const std::vector<Document>& docs, const Vocabulary& vocab) {
  InvertedIndex index;
  index.vocab = vocab;
  index.doc_ids.reserve(docs.size());
  index.doc_lengths.reserve(docs.size());

  int64_t total_length = 0;
  for (const Document& doc : docs) {
    int32_t doc_index = static_cast<int32_t>(index.doc_ids.size());
    index.doc_ids.push_back(doc.id);
    std::map<TokenId, int32_t> counts;
    for (TokenId id : encode_ids(doc.text, vocab)) {
      if (!is_special(id)) counts[id] += 1;
    }
    int32_t length = 0;
    for (auto [token, tf] : counts) {
      index.postings[token].push_back(Posting{doc_index, tf});
      length += tf;
    }
    index.doc_lengths.push_back(length);
    total_length += length;
  }
  index.avg_doc_length =
      docs.empty() ? 0.0 : static_cast<double>(total_length) / static_cast<double>(docs.size());

  // Document norms for tf-idf cosine, derivable once all df values are known.
  index.tfidf_doc_norms.assign(docs.size(), 0.0);
  int32_t n = index.doc_count();
  for (const auto& [token, list] : index.postings) {
    double idf = idf_tfidf(n, static_cast<int32_t>(list.size()));
    for (const Posting& p : list) {
      double w = log_tf(p.term_frequency) * idf;
      index.tfidf_doc_norms[p.doc_index] += w * w;
    }
  }
  for (double& norm : index.tfidf_doc_norms) norm = std::sqrt(norm);
  return index;
}

double bm25plus_score(const InvertedIndex& index, const std::vector<TokenId>& query_ids,
                      int32_t doc_index, const Bm25Params& params) {
  params.validate();
  if (doc_index < 0 || doc_index >= index.doc_count()) {
    throw Error("bm25plus_score: doc_index out of range");
  }
  double dl = index.doc_lengths[doc_index];
  double norm = index.avg_doc_length > 0.0
                    ? params.k1 * (1.0 - params.b + params.b * dl / index.avg_doc_length)
                    : params.k1;
  double score = 0.0;
  for (TokenId t : collection_terms(index, query_ids)) {
    double idf = idf_bm25(index.doc_count(), index.doc_frequency(t));
    int32_t tf = index.term_frequency(t, doc_index);
    double tf_part = tf > 0 ? ((params.k1 + 1.0) * tf) / (norm + tf) : 0.0;
    score += idf * (tf_part + params.delta);
  }
  return score;
}

double tfidf_score(const InvertedIndex& index, const std::vector<TokenId>& query_ids,
                   int32_t doc_index) {
  if (doc_index < 0 || doc_index >= index.doc_count()) {
    throw Error("tfidf_score: doc_index out of range");
  }
  std::map<TokenId, int32_t> query_tf;
  for (TokenId t : query_ids) {
    if (!is_special(t)) query_tf[t] += 1;
  }
  double dot = 0.0;
  double query_norm_sq = 0.0;
  for (auto [t, qtf] : query_tf) {
    int32_t df = index.doc_frequency(t);
    if (df == 0) continue;
    double idf = idf_tfidf(index.doc_count(), df);
    double wq = log_tf(qtf) * idf;
    query_norm_sq += wq * wq;
    int32_t tf = index.term_frequency(t, doc_index);
    if (tf > 0) dot += wq * log_tf(tf) * idf;
  }
  double doc_norm = index.tfidf_doc_norms[doc_index];
  if (query_norm_sq <= 0.0 || doc_norm <= 0.0) return 0.0;
  return dot / (std::sqrt(query_norm_sq) * doc_norm);
}

RunList sparse_retrieve(const InvertedIndex& index, const Query& query,
                        const SparseScorer& scorer, int k) {
  if (k < 1) throw Error("sparse_retrieve: k must be >= 1");
  if (index.doc_count() == 0) throw Error("empty index");
  std::vector<TokenId> query_ids = encode_ids(query.text, index.vocab);

  RunList run;
  run.query_id = query.id;
  run.tag = scorer.tag();
  run.entries.reserve(index.doc_ids.size());
  for (int32_t d = 0; d < index.doc_count(); ++d) {
    double score = scorer.kind == SparseScorer::Kind::tfidf
                       ? tfidf_score(index, query_ids, d)
                       : bm25plus_score(index, query_ids, d, scorer.params);
    run.entries.push_back(RunEntry{index.doc_ids[d], score});
  }
  run.sort_entries();
  if (run.entries.size() > static_cast<size_t>(k)) run.entries.resize(k);
  return run;
}

// --- persistence -------------------------------------------------------------

void save_index(const InvertedIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  out << "rankpipe-index v1 scheme=" << index.vocab.scheme.to_string() << '\n';
  out << "vocab " << index.vocab.size() << '\n';
  for (const std::string& token : index.vocab.id_to_token) out << token << '\n';
  out << "docs " << index.doc_count() << '\n';
  for (int32_t d = 0; d < index.doc_count(); ++d) {
    out << index.doc_ids[d] << ' ' << index.doc_lengths[d] << '\n';
  }
  out << "postings " << index.postings.size() << '\n';
  for (const auto& [token, list] : index.postings) {
    out << token << ' ' << list.size();
    for (const Posting& p : list) out << ' ' << p.doc_index << ':' << p.term_frequency;
    out << '\n';
  }
  if (!out.good()) throw Error("failed while writing " + path);
}

InvertedIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw Error("cannot open file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw Error(path + ": empty index file");
  const std::string prefix = "rankpipe-index v1 scheme=";
  if (header.rfind(prefix, 0) != 0) throw Error(path + ": bad index header");

  InvertedIndex index;
  index.vocab.scheme = TokenizerScheme::parse(header.substr(prefix.size()));

  auto expect = [&](const std::string& keyword) -> long {
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": truncated index");
    std::vector<std::string> fields = split_whitespace(line);
    if (fields.size() != 2 || fields[0] != keyword) {
      throw Error(path + ": expected '" + keyword + " <count>'");
    }
    return parse_long(fields[1], path);
  };

  long vocab_size = expect("vocab");
  index.vocab.id_to_token.reserve(vocab_size);
  for (long i = 0; i < vocab_size; ++i) {
    std::string token;
    if (!std::getline(in, token)) throw Error(path + ": truncated vocabulary section");
    index.vocab.id_to_token.push_back(token);
    if (i >= Vocabulary::kNumSpecials) {
      index.vocab.token_to_id.emplace(token, static_cast<TokenId>(i));
    }
  }

  long n_docs = expect("docs");
  int64_t total_length = 0;
  for (long i = 0; i < n_docs; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": truncated docs section");
    std::vector<std::string> fields = split_whitespace(line);
    if (fields.size() != 2) throw Error(path + ": expected 'doc_id length'");
    index.doc_ids.push_back(fields[0]);
    index.doc_lengths.push_back(static_cast<int32_t>(parse_long(fields[1], path)));
    total_length += index.doc_lengths.back();
  }
  index.avg_doc_length =
      n_docs == 0 ? 0.0 : static_cast<double>(total_length) / static_cast<double>(n_docs);

  long n_postings = expect("postings");
  for (long i = 0; i < n_postings; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": truncated postings section");
    std::vector<std::string> fields = split_whitespace(line);
    if (fields.size() < 2) throw Error(path + ": malformed posting line");
    TokenId token = static_cast<TokenId>(parse_long(fields[0], path));
    long count = parse_long(fields[1], path);
    if (static_cast<long>(fields.size()) != count + 2) {
      throw Error(path + ": posting count mismatch for token " + fields[0]);
    }
    std::vector<Posting>& list = index.postings[token];
    list.reserve(count);
    for (long j = 0; j < count; ++j) {
      const std::string& pair = fields[2 + j];
      size_t colon = pair.find(':');
      if (colon == std::string::npos) throw Error(path + ": malformed posting '" + pair + "'");
      Posting p;
      p.doc_index = static_cast<int32_t>(parse_long(pair.substr(0, colon), path));
      p.term_frequency = static_cast<int32_t>(parse_long(pair.substr(colon + 1), path));
      if (!list.empty() && list.back().doc_index >= p.doc_index) {
        throw Error(path + ": posting list for token " + fields[0] + " not sorted");
      }
      list.push_back(p);
    }
  }

  // Norms are derived data; recompute rather than trust the file.
  index.tfidf_doc_norms.assign(index.doc_ids.size(), 0.0);
  for (const auto& [token, list] : index.postings) {
    double idf = idf_tfidf(index.doc_count(), static_cast<int32_t>(list.size()));
    for (const Posting& p : list) {
      if (p.doc_index < 0 || p.doc_index >= index.doc_count()) {
        throw Error(path + ": posting references unknown document");
      }
      double w = log_tf(p.term_frequency) * idf;
      index.tfidf_doc_norms[p.doc_index] += w * w;
    }
  }
  for (double& norm : index.tfidf_doc_norms) norm = std::sqrt(norm);
  return index;
}

}  // namespace rankpipe
