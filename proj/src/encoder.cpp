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

#include "rankpipe/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace rankpipe {

namespace {

// Hand-rolled uniform draw and shuffle so that training trajectories do not
// depend on standard-library distribution internals.
double next_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

uint64_t next_below(std::mt19937_64& rng, uint64_t bound) {
  // Rejection sampling over the top multiple of bound; unbiased.
  uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % bound;
  uint64_t value;
  do {
    value = rng();
  } while (value >= limit);
  return value % bound;
}

void shuffle_indices(std::vector<size_t>& indices, std::mt19937_64& rng) {
  for (size_t i = indices.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(next_below(rng, i));
    std::swap(indices[i - 1], indices[j]);
  }
}

void check_token(const EncoderParams& params, TokenId t) {
  if (t < 0 || t >= params.vocab_size) {
    throw Error("encoder: token id " + std::to_string(t) + " out of range [0, " +
                std::to_string(params.vocab_size) + ")");
  }
}

/// Mean of token rows, without normalization. Returns false for an empty
/// sequence (vector left zeroed).
bool mean_rows(const EncoderParams& params, std::span<const TokenId> ids,
               std::vector<double>& out) {
  out.assign(params.dim, 0.0);
  if (ids.empty()) return false;
  for (TokenId t : ids) {
    check_token(params, t);
    std::span<const double> row = params.row(t);
    for (int32_t i = 0; i < params.dim; ++i) out[i] += row[i];
  }
  double inv = 1.0 / static_cast<double>(ids.size());
  for (double& x : out) x *= inv;
  return true;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

struct PairForward {
  std::vector<double> query_mean, doc_mean;
  double query_norm = 0.0, doc_norm = 0.0;
  double sim = 0.0;
  double loss = 0.0;
};

PairForward forward_pair(const EncoderParams& params, const TrainingPair& pair,
                         const TrainConfig& cfg) {
  PairForward f;
  mean_rows(params, pair.query_ids, f.query_mean);
  mean_rows(params, pair.doc_ids, f.doc_mean);
  f.query_norm = norm2(f.query_mean);
  f.doc_norm = norm2(f.doc_mean);
  if (f.query_norm > 0.0 && f.doc_norm > 0.0) {
    double dot = 0.0;
    for (size_t i = 0; i < f.query_mean.size(); ++i) dot += f.query_mean[i] * f.doc_mean[i];
    f.sim = dot / (f.query_norm * f.doc_norm);
  }
  double d = cfg.literal_cosine_distance ? f.sim : 1.0 - f.sim;
  f.loss = 0.5 * (pair.label * d * d + (1 - pair.label) * relu(cfg.margin - d) * relu(cfg.margin - d));
  return f;
}

/// Accumulates d(pair loss)/dW into grad, scaled by `weight`.
void backward_pair(const EncoderParams& params, const TrainingPair& pair, const TrainConfig& cfg,
                   const PairForward& f, double weight, GradientBuffer& grad) {
  if (f.query_norm <= 0.0 || f.doc_norm <= 0.0) return;  // sim pinned at 0
  double d = cfg.literal_cosine_distance ? f.sim : 1.0 - f.sim;
  double dloss_dd = pair.label * d - (1 - pair.label) * relu(cfg.margin - d);
  double dloss_dsim = dloss_dd * (cfg.literal_cosine_distance ? 1.0 : -1.0);
  if (dloss_dsim == 0.0) return;

  int32_t dim = params.dim;
  // d sim / d mean = (other_unit - sim * own_unit) / own_norm
  std::vector<double> dquery(dim), ddoc(dim);
  for (int32_t i = 0; i < dim; ++i) {
    double qu = f.query_mean[i] / f.query_norm;
    double du = f.doc_mean[i] / f.doc_norm;
    dquery[i] = weight * dloss_dsim * (du - f.sim * qu) / f.query_norm;
    ddoc[i] = weight * dloss_dsim * (qu - f.sim * du) / f.doc_norm;
  }
  double inv_q = 1.0 / static_cast<double>(pair.query_ids.size());
  for (TokenId t : pair.query_ids) {
    double* g = grad.values.data() + static_cast<size_t>(t) * dim;
    for (int32_t i = 0; i < dim; ++i) g[i] += dquery[i] * inv_q;
  }
  double inv_d = 1.0 / static_cast<double>(pair.doc_ids.size());
  for (TokenId t : pair.doc_ids) {
    double* g = grad.values.data() + static_cast<size_t>(t) * dim;
    for (int32_t i = 0; i < dim; ++i) g[i] += ddoc[i] * inv_d;
  }
}

struct MaskedForward {
  std::vector<double> context;       // mean of unmasked rows
  std::vector<double> probs;         // softmax over the vocabulary
  double loss = 0.0;                 // mean over masked positions
  int32_t unmasked_count = 0;
};

MaskedForward forward_masked(const EncoderParams& params, const MaskedDoc& doc) {
  MaskedForward f;
  int32_t dim = params.dim;
  f.context.assign(dim, 0.0);

  size_t next_masked = 0;
  for (size_t p = 0; p < doc.tokens.size(); ++p) {
    if (next_masked < doc.masked_positions.size() &&
        static_cast<size_t>(doc.masked_positions[next_masked]) == p) {
      ++next_masked;
      continue;
    }
    check_token(params, doc.tokens[p]);
    std::span<const double> row = params.row(doc.tokens[p]);
    for (int32_t i = 0; i < dim; ++i) f.context[i] += row[i];
    ++f.unmasked_count;
  }
  if (f.unmasked_count == 0) throw Error("mlm: document with every token masked");
  for (double& x : f.context) x /= static_cast<double>(f.unmasked_count);

  // Tied-weight logits: one dot product per vocabulary row; identical for
  // every masked position of the document, only the target differs.
  std::vector<double> logits(params.vocab_size);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int32_t j = 0; j < params.vocab_size; ++j) {
    std::span<const double> row = params.row(j);
    double z = 0.0;
    for (int32_t i = 0; i < dim; ++i) z += f.context[i] * row[i];
    logits[j] = z;
    max_logit = std::max(max_logit, z);
  }
  double sum_exp = 0.0;
  for (double z : logits) sum_exp += std::exp(z - max_logit);
  double log_sum = std::log(sum_exp) + max_logit;

  f.probs.resize(params.vocab_size);
  for (int32_t j = 0; j < params.vocab_size; ++j) {
    f.probs[j] = std::exp(logits[j] - log_sum);
  }
  for (int32_t p : doc.masked_positions) {
    check_token(params, doc.tokens[p]);
    f.loss += log_sum - logits[doc.tokens[p]];
  }
  f.loss /= static_cast<double>(doc.masked_positions.size());
  return f;
}

void backward_masked(const EncoderParams& params, const MaskedDoc& doc, const MaskedForward& f,
                     double weight, GradientBuffer& grad) {
  int32_t dim = params.dim;
  double inv_masked = 1.0 / static_cast<double>(doc.masked_positions.size());

  // Mean softmax error over the masked positions: probs - empirical target.
  std::vector<double> err = f.probs;
  for (int32_t p : doc.masked_positions) err[doc.tokens[p]] -= inv_masked;

  // Output side: dL/dW[j] += err_j * context. Context side: dL/dc = W^T err.
  std::vector<double> dcontext(dim, 0.0);
  for (int32_t j = 0; j < params.vocab_size; ++j) {
    if (err[j] == 0.0) continue;
    std::span<const double> row = params.row(j);
    double* g = grad.values.data() + static_cast<size_t>(j) * dim;
    double e = weight * err[j];
    for (int32_t i = 0; i < dim; ++i) {
      g[i] += e * f.context[i];
      dcontext[i] += e * row[i];
    }
  }
  double inv_unmasked = 1.0 / static_cast<double>(f.unmasked_count);
  size_t next_masked = 0;
  for (size_t p = 0; p < doc.tokens.size(); ++p) {
    if (next_masked < doc.masked_positions.size() &&
        static_cast<size_t>(doc.masked_positions[next_masked]) == p) {
      ++next_masked;
      continue;
    }
    double* g = grad.values.data() + static_cast<size_t>(doc.tokens[p]) * dim;
    for (int32_t i = 0; i < dim; ++i) g[i] += dcontext[i] * inv_unmasked;
  }
}

void apply_gradient(EncoderParams& params, const GradientBuffer& grad, double learning_rate) {
  for (size_t i = 0; i < params.embeddings.size(); ++i) {
    params.embeddings[i] -= learning_rate * grad.values[i];
  }
}

}  // namespace

std::span<const double> EncoderParams::row(TokenId t) const {
  return {embeddings.data() + static_cast<size_t>(t) * dim, static_cast<size_t>(dim)};
}

std::span<double> EncoderParams::row(TokenId t) {
  return {embeddings.data() + static_cast<size_t>(t) * dim, static_cast<size_t>(dim)};
}

void TrainConfig::validate() const {
  if (!(margin > 0.0 && margin <= 1.0)) throw Error("train config: margin must be in (0, 1]");
  if (!(learning_rate > 0.0)) throw Error("train config: learning rate must be > 0");
  if (epochs < 1) throw Error("train config: epochs must be >= 1");
  if (batch_size < 1) throw Error("train config: batch size must be >= 1");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw Error("train config: mask rate must be in (0, 1)");
}

EncoderParams init_encoder(const Vocabulary& vocab, int dim, uint64_t seed) {
  if (dim < 2) throw Error("encoder: dim must be >= 2");
  EncoderParams params;
  params.dim = dim;
  params.vocab_size = vocab.size();
  params.scheme = vocab.scheme;
  params.vocab_fingerprint = vocab.fingerprint();
  params.provenance = "init";
  params.embeddings.resize(static_cast<size_t>(params.vocab_size) * dim);
  std::mt19937_64 rng(seed);
  double scale = 1.0 / static_cast<double>(dim);
  for (double& x : params.embeddings) x = (next_unit(rng) - 0.5) * scale;
  return params;
}

std::vector<double> embed(const EncoderParams& params, std::span<const TokenId> token_ids) {
  std::vector<double> v;
  if (!mean_rows(params, token_ids, v)) return v;  // zero vector for empty input
  double n = norm2(v);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return v;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("cosine: dimension mismatch");
  double dot = 0.0;
  for (size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
  double nu = norm2(u);
  double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (nu * nv);
}

double contrastive_loss(double sim, int label, double margin) {
  if (label != 0 && label != 1) throw Error("contrastive_loss: label must be 0 or 1");
  double d = 1.0 - sim;
  return 0.5 * (label * d * d + (1 - label) * relu(margin - d) * relu(margin - d));
}

double contrastive_batch_loss(const EncoderParams& params, std::span<const TrainingPair> batch,
                              const TrainConfig& cfg) {
  if (batch.empty()) throw Error("contrastive batch: empty");
  double sum = 0.0;
  for (const TrainingPair& pair : batch) sum += forward_pair(params, pair, cfg).loss;
  return sum / static_cast<double>(batch.size());
}

double contrastive_batch_gradient(const EncoderParams& params, std::span<const TrainingPair> batch,
                                  const TrainConfig& cfg, GradientBuffer& grad) {
  if (batch.empty()) throw Error("contrastive batch: empty");
  grad.reset(params.embeddings.size());
  double weight = 1.0 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const TrainingPair& pair : batch) {
    PairForward f = forward_pair(params, pair, cfg);
    sum += f.loss;
    backward_pair(params, pair, cfg, f, weight, grad);
  }
  return sum / static_cast<double>(batch.size());
}

double mlm_batch_loss(const EncoderParams& params, std::span<const MaskedDoc> batch) {
  if (batch.empty()) throw Error("mlm batch: empty");
  double sum = 0.0;
  for (const MaskedDoc& doc : batch) sum += forward_masked(params, doc).loss;
  return sum / static_cast<double>(batch.size());
}

double mlm_batch_gradient(const EncoderParams& params, std::span<const MaskedDoc> batch,
                          GradientBuffer& grad) {
  if (batch.empty()) throw Error("mlm batch: empty");
  grad.reset(params.embeddings.size());
  double weight = 1.0 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const MaskedDoc& doc : batch) {
    MaskedForward f = forward_masked(params, doc);
    sum += f.loss;
    backward_masked(params, doc, f, weight, grad);
  }
  return sum / static_cast<double>(batch.size());
}

EncoderParams train_contrastive(const EncoderParams& params, std::span<const TrainingPair> pairs,
                                const TrainConfig& cfg, TrainStats* stats) {
  cfg.validate();
  if (pairs.empty()) throw Error("train_contrastive: empty pair set");
  for (const TrainingPair& pair : pairs) {
    if (pair.label != 0 && pair.label != 1) throw Error("train_contrastive: label must be 0 or 1");
  }

  EncoderParams model = params;
  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  GradientBuffer grad;
  std::vector<TrainingPair> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    size_t batch_index = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);
      double loss = contrastive_batch_gradient(model, batch, cfg, grad);
      if (!std::isfinite(loss)) {
        throw Error("train_contrastive: non-finite loss in epoch " + std::to_string(epoch + 1) +
                    ", batch " + std::to_string(batch_index + 1));
      }
      apply_gradient(model, grad, cfg.learning_rate);
      epoch_loss += loss * static_cast<double>(batch.size());
    }
    if (stats) stats->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  return model;
}

EncoderParams mlm_pretrain(const EncoderParams& params,
                           const std::vector<std::vector<TokenId>>& docs, const TrainConfig& cfg,
                           TrainStats* stats) {
  cfg.validate();
  if (docs.empty()) throw Error("mlm_pretrain: empty document set");

  EncoderParams model = params;
  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(docs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  GradientBuffer grad;
  std::vector<MaskedDoc> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);

    // Draw this epoch's masks up front, in traversal order.
    std::vector<MaskedDoc> masked;
    masked.reserve(docs.size());
    for (size_t idx : order) {
      const std::vector<TokenId>& tokens = docs[idx];
      MaskedDoc doc;
      doc.tokens = tokens;
      for (size_t p = 0; p < tokens.size(); ++p) {
        if (next_unit(rng) < cfg.mask_rate) doc.masked_positions.push_back(static_cast<int32_t>(p));
      }
      if (doc.masked_positions.empty() && !tokens.empty()) {
        doc.masked_positions.push_back(static_cast<int32_t>(next_below(rng, tokens.size())));
      }
      if (doc.masked_positions.size() >= tokens.size()) {
        if (stats) ++stats->skipped_docs;
        continue;
      }
      masked.push_back(std::move(doc));
    }

    double epoch_loss = 0.0;
    size_t scored = 0;
    size_t batch_index = 0;
    for (size_t start = 0; start < masked.size(); start += cfg.batch_size, ++batch_index) {
      size_t end = std::min(masked.size(), start + cfg.batch_size);
      batch.assign(masked.begin() + start, masked.begin() + end);
      double loss = mlm_batch_gradient(model, batch, grad);
      if (!std::isfinite(loss)) {
        throw Error("mlm_pretrain: non-finite loss in epoch " + std::to_string(epoch + 1) +
                    ", batch " + std::to_string(batch_index + 1));
      }
      apply_gradient(model, grad, cfg.learning_rate);
      epoch_loss += loss * static_cast<double>(batch.size());
      scored += batch.size();
    }
    if (stats) {
      stats->epoch_mean_loss.push_back(scored > 0 ? epoch_loss / static_cast<double>(scored) : 0.0);
    }
  }
  return model;
}

DocEmbeddings embed_docs(const EncoderParams& params, const std::vector<EncodedDoc>& docs) {
  DocEmbeddings out;
  out.doc_ids.reserve(docs.size());
  out.vectors.reserve(docs.size());
  for (const EncodedDoc& doc : docs) {
    out.doc_ids.push_back(doc.doc_id);
    out.vectors.push_back(embed(params, doc.token_ids));
  }
  return out;
}

RunList dense_retrieve_embedded(const EncoderParams& params, const DocEmbeddings& embeddings,
                                std::span<const TokenId> query_ids, int k,
                                const std::string& tag) {
  if (k < 1) throw Error("dense_retrieve: k must be >= 1");
  if (embeddings.doc_ids.empty()) throw Error("dense_retrieve: empty document set");
  std::vector<double> query_vec = embed(params, query_ids);

  RunList run;
  run.tag = tag;
  run.entries.reserve(embeddings.doc_ids.size());
  for (size_t d = 0; d < embeddings.doc_ids.size(); ++d) {
    // Embeddings are unit or zero vectors, so the dot product is the cosine.
    double score = 0.0;
    const std::vector<double>& doc_vec = embeddings.vectors[d];
    for (size_t i = 0; i < doc_vec.size(); ++i) score += query_vec[i] * doc_vec[i];
    run.entries.push_back(RunEntry{embeddings.doc_ids[d], score});
  }
  run.sort_entries();
  if (run.entries.size() > static_cast<size_t>(k)) run.entries.resize(k);
  return run;
}

RunList dense_retrieve(const EncoderParams& params, const std::vector<EncodedDoc>& docs,
                       std::span<const TokenId> query_ids, int k, const std::string& tag) {
  return dense_retrieve_embedded(params, embed_docs(params, docs), query_ids, k, tag);
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'P', 'E', 'N', 'C', 'K', '1', '\0'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in.good()) throw Error(path + ": truncated checkpoint");
  return value;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
  uint32_t len = read_pod<uint32_t>(in, path);
  if (len > (1u << 20)) throw Error(path + ": implausible string length in checkpoint");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in.good()) throw Error(path + ": truncated checkpoint");
  return s;
}

}  // namespace

void save_encoder(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, static_cast<uint32_t>(params.dim));
  write_pod<uint32_t>(out, static_cast<uint32_t>(params.vocab_size));
  write_pod<uint64_t>(out, params.vocab_fingerprint);
  write_string(out, params.scheme.to_string());
  write_string(out, params.provenance);
  out.write(reinterpret_cast<const char*>(params.embeddings.data()),
            static_cast<std::streamsize>(params.embeddings.size() * sizeof(double)));
  if (!out.good()) throw Error("failed while writing " + path);
}

EncoderParams load_encoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw Error("cannot open file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in.good() || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(path + ": not a rankpipe encoder checkpoint");
  }
  EncoderParams params;
  params.dim = static_cast<int32_t>(read_pod<uint32_t>(in, path));
  params.vocab_size = static_cast<int32_t>(read_pod<uint32_t>(in, path));
  params.vocab_fingerprint = read_pod<uint64_t>(in, path);
  params.scheme = TokenizerScheme::parse(read_string(in, path));
  params.provenance = read_string(in, path);
  if (params.dim < 2 || params.vocab_size < Vocabulary::kNumSpecials) {
    throw Error(path + ": implausible checkpoint header");
  }
  size_t count = static_cast<size_t>(params.vocab_size) * static_cast<size_t>(params.dim);
  params.embeddings.resize(count);
  in.read(reinterpret_cast<char*>(params.embeddings.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in.good()) throw Error(path + ": truncated checkpoint");
  for (double x : params.embeddings) {
    if (!std::isfinite(x)) throw Error(path + ": checkpoint contains non-finite values");
  }
  return params;
}

EncoderParams load_encoder(const std::string& path, const Vocabulary& vocab) {
  EncoderParams params = load_encoder(path);
  if (params.vocab_fingerprint != vocab.fingerprint()) {
    throw Error(path + ": checkpoint fingerprint does not match the vocabulary");
  }
  if (!(params.scheme == vocab.scheme) || params.vocab_size != vocab.size()) {
    throw Error(path + ": checkpoint tokenizer scheme does not match the vocabulary");
  }
  return params;
}

}  // namespace rankpipe
