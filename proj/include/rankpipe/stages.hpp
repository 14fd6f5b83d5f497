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

#include <string>
#include <vector>

#include "rankpipe/corpus.hpp"
#include "rankpipe/encoder.hpp"
#include "rankpipe/sparse.hpp"

namespace rankpipe {

/// Where Stage 1 candidates come from: a BM25+ index, a randomly
/// initialized encoder, or the MLM-pretrained encoder from Phase 1.
enum class CandidateSource { bm25plus, lms_random_init, lms_mlm_pretrained };

CandidateSource parse_candidate_source(const std::string& name);
std::string candidate_source_name(CandidateSource source);

struct PipelineVariant {
  CandidateSource source = CandidateSource::lms_random_init;
  int rounds = 1;  // 1 = Stages 1-2; 2 = adds Stage 3 hard-negative retraining

  void validate() const;
  std::string name() const;  // e.g. "lms-mlm_r2"
};

/// A labeled (query, document) pair by id. Token encoding happens at
/// training time so the label audit trail stays readable.
struct PairRecord {
  std::string query_id;
  std::string doc_id;
  int label = 1;  // 1 relevant, 0 non-relevant
};

enum class PairProvenance { stage1, stage3 };

struct PairSet {
  std::vector<PairRecord> records;
  PairProvenance provenance = PairProvenance::stage1;
  int top_n = 0;
  int negatives_per_query = 0;       // requested cap
  int positive_count = 0;
  int negative_count = 0;
  int skipped_no_relevant = 0;       // queries with no relevant docs in qrels
  int queries_without_negatives = 0; // all top_n candidates were relevant
};

/// Labels candidate rankings against the qrels: every relevant document
/// becomes a positive (retrieved or not); the highest-ranked non-relevant
/// candidates within the top_n become negatives, capped per query.
PairSet stage1_label(const std::vector<RunList>& candidates, const Qrels& qrels, int top_n,
                     int neg_per_query);

/// Token-id views of the corpus and query set, shared across stages.
struct EncodedTexts {
  std::vector<EncodedDoc> docs;              // corpus order
  std::vector<std::string> query_ids;        // query-set order
  std::vector<std::vector<TokenId>> queries; // aligned with query_ids
};

EncodedTexts encode_texts(const std::vector<Document>& docs, const std::vector<Query>& queries,
                          const Vocabulary& vocab);

/// Contrastive fine-tuning on a labeled pair set. Throws "no training
/// pairs" on an empty set; stamps provenance into the checkpoint metadata.
EncoderParams stage2_train(const EncoderParams& base, const PairSet& pairs,
                           const EncodedTexts& texts, const TrainConfig& cfg,
                           TrainStats* stats = nullptr);

/// Re-retrieves with the Stage 2 model and relabels: what the fine-tuned
/// model still ranks highly but the qrels reject becomes a hard negative.
PairSet stage3_mine(const EncoderParams& model, const EncodedTexts& texts, const Qrels& qrels,
                    int top_n, int neg_per_query, int jobs = 1);

/// Pair-set file format: "rankpipe-pairs v1 ..." header, then
/// "query_id doc_id label" lines.
void write_pairs(const PairSet& pairs, const std::string& path);
PairSet read_pairs(const std::string& path);

// --- full pipeline -----------------------------------------------------------

struct PipelineConfig {
  TokenizerScheme scheme = TokenizerScheme::whitespace();
  int min_count = 1;
  int dim = 32;
  TrainConfig train;        // contrastive stages
  int mlm_epochs = 5;       // Phase 1 epochs (lms_mlm_pretrained only)
  int top_n = 100;
  int neg_per_query = 8;
  int eval_k = 100;
  Bm25Params bm25;
  bool mix_stage1_pairs = false;  // Stage 2' trains on stage3 + stage1 pairs
  uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct PipelineResult {
  EncoderParams model;
  std::vector<RunList> eval_runs;
  std::string run_dir;               // artifacts directory for this run
  std::vector<std::string> manifest; // one line per executed stage
};

/// Executes Phase 1 (optional MLM) and Phase 2 Stages 1-2(-3), then ranks
/// the evaluation queries with the final model. All artifacts (vocabulary,
/// pair sets, checkpoints, run files, manifest) are written under
/// out_dir/<variant>_seed<seed>/. Deterministic for a fixed seed.
PipelineResult run_pipeline(const PipelineVariant& variant, const std::vector<Document>& corpus,
                            const std::vector<Query>& train_queries,
                            const std::vector<Query>& eval_queries, const Qrels& qrels,
                            const PipelineConfig& cfg, const std::string& out_dir);

}  // namespace rankpipe
