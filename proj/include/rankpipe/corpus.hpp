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

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "rankpipe/util.hpp"

namespace rankpipe {

struct Document {
  std::string id;
  std::string text;  // may be empty; such documents rank last everywhere
};

struct Query {
  std::string id;
  std::string text;
};

enum class CorpusFormat { jsonl, tsv };

CorpusFormat parse_corpus_format(const std::string& name);

/// Graded relevance judgments keyed by (query_id, doc_id). Absent pairs read
/// as grade 0; grade > 0 means relevant.
class Qrels {
 public:
  void set(const std::string& query_id, const std::string& doc_id, int grade);
  int grade(const std::string& query_id, const std::string& doc_id) const;
  bool is_relevant(const std::string& query_id, const std::string& doc_id) const {
    return grade(query_id, doc_id) > 0;
  }
  /// Relevant doc ids for a query, in ascending doc_id order (deterministic).
  std::vector<std::string> relevant_docs(const std::string& query_id) const;
  bool has_query(const std::string& query_id) const;
  size_t size() const;
  const std::map<std::string, std::map<std::string, int>>& judgments() const {
    return judgments_;
  }

 private:
  std::map<std::string, std::map<std::string, int>> judgments_;
};

struct RunEntry {
  std::string doc_id;
  double score = 0.0;
};

/// One ranked result list. Entries are kept sorted by score descending;
/// equal scores order by ascending doc_id so rankings are reproducible.
struct RunList {
  std::string query_id;
  std::vector<RunEntry> entries;
  std::string tag;

  /// Applies the canonical ordering (score desc, doc_id asc).
  void sort_entries();
  /// Throws Error if entries are unsorted or contain a duplicate doc_id.
  void validate() const;
};

// --- loaders ---------------------------------------------------------------

/// Reads a corpus file. JSONL lines look like {"id": "...", "text": "..."};
/// TSV lines are id<TAB>text. Blank lines are skipped. Throws Error naming
/// the offending line for malformed input and the offending id for
/// duplicates. Output order equals file order.
std::vector<Document> load_corpus(const std::string& path, CorpusFormat format);

/// Queries are TSV: qid<TAB>text.
std::vector<Query> load_queries(const std::string& path);

/// TREC qrels: "qid 0 docid grade", whitespace separated. A later line for
/// the same (qid, docid) overwrites an earlier one.
Qrels load_qrels(const std::string& path);

// --- run files --------------------------------------------------------------

/// TREC run format: "qid Q0 docid rank score tag" with scores printed to
/// exactly 6 decimal digits. Runs must satisfy RunList invariants.
void write_run(const std::vector<RunList>& runs, const std::string& path);

/// Inverse of write_run. Validates that ranks are 1-based and consecutive
/// within each query block, scores are non-increasing, queries are
/// contiguous, and no doc_id repeats. Tie order is not revalidated: rounding
/// to 6 decimals can surface ties the writer ordered at full precision.
std::vector<RunList> read_run(const std::string& path);

}  // namespace rankpipe
