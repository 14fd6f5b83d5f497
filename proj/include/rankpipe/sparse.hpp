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
#include <string>
#include <vector>

#include "rankpipe/corpus.hpp"
#include "rankpipe/tokenizer.hpp"

namespace rankpipe {

/// BM25+ parameters (Lv–Zhai lower bounding). delta = 0 gives plain BM25.
struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double delta = 1.0;

  void validate() const;
};

struct Posting {
  int32_t doc_index = 0;
  int32_t term_frequency = 0;
};

/// Term statistics over a fixed corpus. Reserved token ids (PAD/MASK/UNK)
/// are never indexed, so rare tokens collapsed to UNK by a pruned vocabulary
/// cannot act as match-everything wildcards; doc_lengths counts indexed
/// tokens only, keeping sum(tf) == doc_length exact.
struct InvertedIndex {
  Vocabulary vocab;
  std::vector<std::string> doc_ids;
  std::vector<int32_t> doc_lengths;
  double avg_doc_length = 0.0;
  std::map<TokenId, std::vector<Posting>> postings;  // lists sorted by doc_index
  std::vector<double> tfidf_doc_norms;  // L2 norm of each doc's (1+ln tf)·ln(N/df) vector

  int32_t doc_count() const { return static_cast<int32_t>(doc_ids.size()); }
  int32_t doc_frequency(TokenId token) const;
  int32_t term_frequency(TokenId token, int32_t doc_index) const;
};

InvertedIndex build_index(const std::vector<Document>& docs, const Vocabulary& vocab);

/// BM25+ score of one document for the given query token ids. Sums over
/// distinct query terms present in the collection:
///   idf(t) * ( (k1+1)·tf / (k1·(1−b+b·dl/avgdl) + tf) + delta )
/// with idf(t) = ln((N − df + 0.5)/(df + 0.5) + 1). Terms the document lacks
/// still earn idf·delta; terms absent from the whole collection earn nothing.
double bm25plus_score(const InvertedIndex& index, const std::vector<TokenId>& query_ids,
                      int32_t doc_index, const Bm25Params& params);

/// Cosine similarity between log-tf·idf vectors of query and document, with
/// idf = ln(N/df). Returns 0 when either vector is all-zero.
double tfidf_score(const InvertedIndex& index, const std::vector<TokenId>& query_ids,
                   int32_t doc_index);

struct SparseScorer {
  enum class Kind { tfidf, bm25plus };
  Kind kind = Kind::bm25plus;
  Bm25Params params;

  static SparseScorer tfidf() { return {Kind::tfidf, {}}; }
  static SparseScorer bm25plus(Bm25Params p = {}) { return {Kind::bm25plus, p}; }
  std::string tag() const { return kind == Kind::tfidf ? "tfidf" : "bm25plus"; }
};

/// Exhaustively scores every document (the corpus is desk-scale by design,
/// so exact scoring is also the oracle) and returns the top-k with the
/// corpus tie-break: score descending, then doc_id ascending.
RunList sparse_retrieve(const InvertedIndex& index, const Query& query,
                        const SparseScorer& scorer, int k);

/// Versioned single-file persistence; embeds the vocabulary so the artifact
/// is self-contained and the scheme can be checked at query time.
void save_index(const InvertedIndex& index, const std::string& path);
InvertedIndex load_index(const std::string& path);

}  // namespace rankpipe
