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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rankpipe/tokenizer.hpp"

namespace rankpipe {

/// The trainable model: one embedding row per vocabulary entry. A text
/// encodes as the L2-normalized mean of its token rows; query and document
/// share the table (tied towers).
struct EncoderParams {
  int32_t dim = 0;
  int32_t vocab_size = 0;
  TokenizerScheme scheme;
  uint64_t vocab_fingerprint = 0;
  std::string provenance;  // free-form training lineage, stored in checkpoints
  std::vector<double> embeddings;  // row-major vocab_size x dim

  std::span<const double> row(TokenId t) const;
  std::span<double> row(TokenId t);
};

/// label = 1 marks a (query, document) pair that should embed close
/// together; label = 0 a pair that should sit at least `margin` apart in
/// cosine distance.
struct TrainingPair {
  std::vector<TokenId> query_ids;
  std::vector<TokenId> doc_ids;
  int label = 1;
};

struct TrainConfig {
  double margin = 0.5;         // in (0, 1]
  double learning_rate = 0.1;  // > 0
  int epochs = 10;             // >= 1
  int batch_size = 32;         // >= 1
  uint64_t seed = 0;
  double mask_rate = 0.15;     // in (0, 1), MLM only
  // Compatibility switch: treat the cosine similarity itself as the
  // distance instead of 1 - cosine. Off by default; with it on, similar
  // pairs are driven toward cosine 0 rather than cosine 1.
  bool literal_cosine_distance = false;

  void validate() const;
};

/// Per-run training diagnostics.
struct TrainStats {
  std::vector<double> epoch_mean_loss;
  int skipped_docs = 0;  // MLM documents skipped because every token was masked
};

/// Uniform init in [-0.5/dim, +0.5/dim], fully determined by the seed.
EncoderParams init_encoder(const Vocabulary& vocab, int dim, uint64_t seed);

/// Mean of the token rows, L2-normalized. An empty sequence embeds as the
/// zero vector (degenerate texts stay rankable, always last).
std::vector<double> embed(const EncoderParams& params, std::span<const TokenId> token_ids);

/// dot(u,v) / (|u||v|); 0 if either norm is 0.
double cosine(std::span<const double> u, std::span<const double> v);

/// With d = 1 - sim: 0.5 * (label * d^2 + (1-label) * max(0, m-d)^2).
double contrastive_loss(double sim, int label, double margin);

// --- batch loss/gradient (exposed so tests can finite-difference them) ------

/// Dense gradient accumulator, same shape as the embedding table.
struct GradientBuffer {
  std::vector<double> values;
  void reset(size_t size) { values.assign(size, 0.0); }
};

/// Mean contrastive loss of a batch (forward only).
double contrastive_batch_loss(const EncoderParams& params, std::span<const TrainingPair> batch,
                              const TrainConfig& cfg);

/// Mean loss plus its gradient w.r.t. every embedding entry.
double contrastive_batch_gradient(const EncoderParams& params, std::span<const TrainingPair> batch,
                                  const TrainConfig& cfg, GradientBuffer& grad);

/// A document with a fixed mask choice; the MLM objective predicts the
/// token at each masked position from the mean of the unmasked rows,
/// scoring every vocabulary row with tied weights.
struct MaskedDoc {
  std::vector<TokenId> tokens;
  std::vector<int32_t> masked_positions;  // strictly increasing, non-empty, not all positions
};

double mlm_batch_loss(const EncoderParams& params, std::span<const MaskedDoc> batch);
double mlm_batch_gradient(const EncoderParams& params, std::span<const MaskedDoc> batch,
                          GradientBuffer& grad);

// --- training loops ----------------------------------------------------------

/// Mini-batch gradient descent on the mean batch loss. Deterministic for a
/// fixed seed; throws Error naming the batch if the loss turns non-finite.
EncoderParams train_contrastive(const EncoderParams& params, std::span<const TrainingPair> pairs,
                                const TrainConfig& cfg, TrainStats* stats = nullptr);

/// Masked-token pretraining over encoded documents. Each position is masked
/// independently at cfg.mask_rate with at least one mask forced; documents
/// that end up fully masked are skipped and counted.
EncoderParams mlm_pretrain(const EncoderParams& params,
                           const std::vector<std::vector<TokenId>>& docs, const TrainConfig& cfg,
                           TrainStats* stats = nullptr);

// --- retrieval ---------------------------------------------------------------

struct EncodedDoc {
  std::string doc_id;
  std::vector<TokenId> token_ids;
};

/// Exact top-k by cosine between the query embedding and every document
/// embedding (score desc, doc_id asc). Throws on an empty document set.
RunList dense_retrieve(const EncoderParams& params, const std::vector<EncodedDoc>& docs,
                       std::span<const TokenId> query_ids, int k,
                       const std::string& tag = "dense");

/// Precomputed document embeddings for repeated retrieval with a frozen model.
struct DocEmbeddings {
  std::vector<std::string> doc_ids;
  std::vector<std::vector<double>> vectors;
};

DocEmbeddings embed_docs(const EncoderParams& params, const std::vector<EncodedDoc>& docs);
RunList dense_retrieve_embedded(const EncoderParams& params, const DocEmbeddings& embeddings,
                                std::span<const TokenId> query_ids, int k,
                                const std::string& tag = "dense");

// --- checkpoints -------------------------------------------------------------

/// Binary checkpoint: header (format version, dim, vocabulary fingerprint,
/// scheme, provenance) followed by the row-major table. Little-endian host.
void save_encoder(const EncoderParams& params, const std::string& path);
EncoderParams load_encoder(const std::string& path);
/// Loads and rejects a checkpoint whose fingerprint or scheme does not
/// match the given vocabulary.
EncoderParams load_encoder(const std::string& path, const Vocabulary& vocab);

}  // namespace rankpipe
