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

#include "rankpipe/stages.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <unordered_map>

namespace rankpipe {

CandidateSource parse_candidate_source(const std::string& name) {
  if (name == "bm25plus") return CandidateSource::bm25plus;
  if (name == "lms") return CandidateSource::lms_random_init;
  if (name == "lms-mlm") return CandidateSource::lms_mlm_pretrained;
  throw UsageError("unknown pipeline variant '" + name + "' (expected bm25plus, lms or lms-mlm)");
}

std::string candidate_source_name(CandidateSource source) {
  switch (source) {
    case CandidateSource::bm25plus: return "bm25plus";
    case CandidateSource::lms_random_init: return "lms";
    case CandidateSource::lms_mlm_pretrained: return "lms-mlm";
  }
  throw Error("unreachable candidate source");
}

void PipelineVariant::validate() const {
  if (rounds != 1 && rounds != 2) throw Error("pipeline variant: rounds must be 1 or 2");
}

std::string PipelineVariant::name() const {
  return candidate_source_name(source) + "_r" + std::to_string(rounds);
}

void PipelineConfig::validate() const {
  train.validate();
  if (min_count < 1) throw Error("pipeline config: min_count must be >= 1");
  if (dim < 2) throw Error("pipeline config: dim must be >= 2");
  if (mlm_epochs < 1) throw Error("pipeline config: mlm_epochs must be >= 1");
  if (top_n < 1) throw Error("pipeline config: top_n must be >= 1");
  if (neg_per_query < 1) throw Error("pipeline config: neg_per_query must be >= 1");
  if (eval_k < 1) throw Error("pipeline config: eval_k must be >= 1");
  if (jobs < 1) throw Error("pipeline config: jobs must be >= 1");
  bm25.validate();
}

PairSet stage1_label(const std::vector<RunList>& candidates, const Qrels& qrels, int top_n,
                     int neg_per_query) {
  if (top_n < 1) throw Error("stage1_label: top_n must be >= 1");
  if (neg_per_query < 1) throw Error("stage1_label: neg_per_query must be >= 1");

  PairSet out;
  out.provenance = PairProvenance::stage1;
  out.top_n = top_n;
  out.negatives_per_query = neg_per_query;
  for (const RunList& run : candidates) {
    std::vector<std::string> relevant = qrels.relevant_docs(run.query_id);
    if (relevant.empty()) {
      ++out.skipped_no_relevant;
      continue;
    }
    // Positives: every judged-relevant document, retrieved or not.
    for (const std::string& doc_id : relevant) {
      out.records.push_back(PairRecord{run.query_id, doc_id, 1});
      ++out.positive_count;
    }
    // Negatives: best-ranked candidates the judgments reject.
    int taken = 0;
    size_t limit = std::min(run.entries.size(), static_cast<size_t>(top_n));
    for (size_t i = 0; i < limit && taken < neg_per_query; ++i) {
      const std::string& doc_id = run.entries[i].doc_id;
      if (!qrels.is_relevant(run.query_id, doc_id)) {
        out.records.push_back(PairRecord{run.query_id, doc_id, 0});
        ++out.negative_count;
        ++taken;
      }
    }
    if (taken == 0) ++out.queries_without_negatives;
  }
  return out;
}

EncodedTexts encode_texts(const std::vector<Document>& docs, const std::vector<Query>& queries,
                          const Vocabulary& vocab) {
  EncodedTexts texts;
  texts.docs.reserve(docs.size());
  for (const Document& doc : docs) {
    texts.docs.push_back(EncodedDoc{doc.id, encode_ids(doc.text, vocab)});
  }
  texts.query_ids.reserve(queries.size());
  texts.queries.reserve(queries.size());
  for (const Query& query : queries) {
    texts.query_ids.push_back(query.id);
    texts.queries.push_back(encode_ids(query.text, vocab));
  }
  return texts;
}

namespace {

std::vector<TrainingPair> encode_pairs(const PairSet& pairs, const EncodedTexts& texts) {
  std::unordered_map<std::string, const std::vector<TokenId>*> doc_tokens;
  for (const EncodedDoc& doc : texts.docs) doc_tokens.emplace(doc.doc_id, &doc.token_ids);
  std::unordered_map<std::string, const std::vector<TokenId>*> query_tokens;
  for (size_t i = 0; i < texts.query_ids.size(); ++i) {
    query_tokens.emplace(texts.query_ids[i], &texts.queries[i]);
  }

  std::vector<TrainingPair> encoded;
  encoded.reserve(pairs.records.size());
  for (const PairRecord& record : pairs.records) {
    auto q = query_tokens.find(record.query_id);
    if (q == query_tokens.end()) {
      throw Error("training pairs reference unknown query '" + record.query_id + "'");
    }
    auto d = doc_tokens.find(record.doc_id);
    if (d == doc_tokens.end()) {
      throw Error("training pairs reference unknown document '" + record.doc_id + "'");
    }
    encoded.push_back(TrainingPair{*q->second, *d->second, record.label});
  }
  return encoded;
}

}  // namespace

EncoderParams stage2_train(const EncoderParams& base, const PairSet& pairs,
                           const EncodedTexts& texts, const TrainConfig& cfg, TrainStats* stats) {
  if (pairs.records.empty()) throw Error("no training pairs");
  std::vector<TrainingPair> encoded = encode_pairs(pairs, texts);
  EncoderParams model = train_contrastive(base, encoded, cfg, stats);
  model.provenance = base.provenance + " > stage2(" +
                     (pairs.provenance == PairProvenance::stage1 ? "stage1" : "stage3") +
                     " pairs)";
  return model;
}

PairSet stage3_mine(const EncoderParams& model, const EncodedTexts& texts, const Qrels& qrels,
                    int top_n, int neg_per_query, int jobs) {
  DocEmbeddings embeddings = embed_docs(model, texts.docs);
  std::vector<RunList> candidates(texts.queries.size());
  parallel_for(texts.queries.size(), jobs, [&](size_t i) {
    candidates[i] = dense_retrieve_embedded(model, embeddings, texts.queries[i], top_n, "stage3");
    candidates[i].query_id = texts.query_ids[i];
  });
  PairSet mined = stage1_label(candidates, qrels, top_n, neg_per_query);
  mined.provenance = PairProvenance::stage3;
  return mined;
}

void write_pairs(const PairSet& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  out << "rankpipe-pairs v1 provenance="
      << (pairs.provenance == PairProvenance::stage1 ? "stage1" : "stage3")
      << " top_n=" << pairs.top_n << " neg_per_query=" << pairs.negatives_per_query << '\n';
  for (const PairRecord& record : pairs.records) {
    out << record.query_id << ' ' << record.doc_id << ' ' << record.label << '\n';
  }
  if (!out.good()) throw Error("failed while writing " + path);
}

PairSet read_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw Error("cannot open file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw Error(path + ": empty pairs file");
  if (header.rfind("rankpipe-pairs v1 ", 0) != 0) throw Error(path + ": bad pairs header");

  PairSet pairs;
  for (const std::string& field : split_whitespace(header)) {
    size_t eq = field.find('=');
    if (eq == std::string::npos) continue;
    std::string key = field.substr(0, eq);
    std::string value = field.substr(eq + 1);
    if (key == "provenance") {
      if (value == "stage1") {
        pairs.provenance = PairProvenance::stage1;
      } else if (value == "stage3") {
        pairs.provenance = PairProvenance::stage3;
      } else {
        throw Error(path + ": unknown provenance '" + value + "'");
      }
    } else if (key == "top_n") {
      pairs.top_n = static_cast<int>(parse_long(value, path));
    } else if (key == "neg_per_query") {
      pairs.negatives_per_query = static_cast<int>(parse_long(value, path));
    }
  }

  std::string line;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_whitespace(line);
    if (fields.size() != 3) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected 'query_id doc_id label'");
    }
    long label = parse_long(fields[2], path + ":" + std::to_string(line_no));
    if (label != 0 && label != 1) {
      throw Error(path + ":" + std::to_string(line_no) + ": label must be 0 or 1");
    }
    pairs.records.push_back(PairRecord{fields[0], fields[1], static_cast<int>(label)});
    if (label == 1) {
      ++pairs.positive_count;
    } else {
      ++pairs.negative_count;
    }
  }
  return pairs;
}

// --- full pipeline -----------------------------------------------------------

namespace {

class Manifest {
 public:
  Manifest(std::string path, const std::string& header) : path_(std::move(path)) {
    append_raw(header);
  }

  void stage(const std::string& name, const std::string& inputs, const std::string& outputs,
             uint64_t seed, double wall_ms) {
    append_raw("stage=" + name + " in=" + inputs + " out=" + outputs +
               " seed=" + std::to_string(seed) + " wall_ms=" + format_score(wall_ms));
  }

  const std::vector<std::string>& lines() const { return lines_; }

 private:
  void append_raw(const std::string& line) {
    lines_.push_back(line);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out.is_open()) throw Error("cannot write file: " + path_);
    out << line << '\n';
  }

  std::string path_;
  std::vector<std::string> lines_;
};

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(now - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::vector<RunList> dense_candidates(const EncoderParams& model, const EncodedTexts& texts,
                                      int top_n, int jobs, const std::string& tag) {
  DocEmbeddings embeddings = embed_docs(model, texts.docs);
  std::vector<RunList> runs(texts.queries.size());
  parallel_for(texts.queries.size(), jobs, [&](size_t i) {
    runs[i] = dense_retrieve_embedded(model, embeddings, texts.queries[i], top_n, tag);
    runs[i].query_id = texts.query_ids[i];
  });
  return runs;
}

}  // namespace

PipelineResult run_pipeline(const PipelineVariant& variant, const std::vector<Document>& corpus,
                            const std::vector<Query>& train_queries,
                            const std::vector<Query>& eval_queries, const Qrels& qrels,
                            const PipelineConfig& cfg, const std::string& out_dir) {
  variant.validate();
  cfg.validate();
  if (corpus.empty()) throw Error("run_pipeline: empty corpus");
  if (train_queries.empty()) throw Error("run_pipeline: no training queries");

  namespace fs = std::filesystem;
  fs::path run_dir = fs::path(out_dir) / (variant.name() + "_seed" + std::to_string(cfg.seed));
  fs::create_directories(run_dir);
  auto artifact = [&run_dir](const std::string& name) { return (run_dir / name).string(); };

  Manifest manifest(artifact("manifest.txt"),
                    std::string("rankpipe ") + kVersion + " variant=" + variant.name() +
                        " seed=" + std::to_string(cfg.seed));

  // Shared preprocessing: vocabulary and token-id views.
  Vocabulary vocab = build_vocabulary(corpus, cfg.scheme, cfg.min_count);
  save_vocabulary(vocab, artifact("vocab.txt"));
  EncodedTexts train_texts = encode_texts(corpus, train_queries, vocab);
  EncodedTexts eval_texts = encode_texts(corpus, eval_queries, vocab);

  EncoderParams model = init_encoder(vocab, cfg.dim, derive_seed(cfg.seed, "init"));
  model.provenance = "variant=" + candidate_source_name(variant.source) + " init";

  // Phase 1: masked-token pretraining, for the variant that asks for it.
  if (variant.source == CandidateSource::lms_mlm_pretrained) {
    StageTimer timer;
    TrainConfig mlm_cfg = cfg.train;
    mlm_cfg.epochs = cfg.mlm_epochs;
    mlm_cfg.seed = derive_seed(cfg.seed, "mlm");
    std::vector<std::vector<TokenId>> token_docs;
    token_docs.reserve(train_texts.docs.size());
    for (const EncodedDoc& doc : train_texts.docs) {
      if (doc.token_ids.size() >= 2) token_docs.push_back(doc.token_ids);
    }
    if (token_docs.empty()) throw Error("run_pipeline: no documents long enough for MLM");
    TrainStats stats;
    model = mlm_pretrain(model, token_docs, mlm_cfg, &stats);
    model.provenance += " > phase1(mlm)";
    save_encoder(model, artifact("checkpoint_phase1.rpck"));
    manifest.stage("phase1", "corpus", "checkpoint_phase1.rpck", mlm_cfg.seed, timer.elapsed_ms());
  }

  // Stage 1: candidate generation + labeling against the judgments.
  PairSet stage1_pairs;
  {
    StageTimer timer;
    std::vector<RunList> candidates;
    if (variant.source == CandidateSource::bm25plus) {
      InvertedIndex index = build_index(corpus, vocab);
      candidates.resize(train_queries.size());
      parallel_for(train_queries.size(), cfg.jobs, [&](size_t i) {
        candidates[i] = sparse_retrieve(index, train_queries[i],
                                        SparseScorer::bm25plus(cfg.bm25), cfg.top_n);
      });
    } else {
      candidates = dense_candidates(model, train_texts, cfg.top_n, cfg.jobs, "stage1");
    }
    write_run(candidates, artifact("candidates_stage1.txt"));
    stage1_pairs = stage1_label(candidates, qrels, cfg.top_n, cfg.neg_per_query);
    write_pairs(stage1_pairs, artifact("pairs_stage1.txt"));
    manifest.stage("stage1", "corpus,queries,qrels", "candidates_stage1.txt,pairs_stage1.txt",
                   cfg.seed, timer.elapsed_ms());
  }

  // Stage 2: contrastive fine-tuning on the Stage 1 pairs.
  {
    StageTimer timer;
    TrainConfig stage2_cfg = cfg.train;
    stage2_cfg.seed = derive_seed(cfg.seed, "stage2");
    model = stage2_train(model, stage1_pairs, train_texts, stage2_cfg);
    save_encoder(model, artifact("checkpoint_stage2.rpck"));
    manifest.stage("stage2", "pairs_stage1.txt", "checkpoint_stage2.rpck", stage2_cfg.seed,
                   timer.elapsed_ms());
  }

  // Stage 3 (rounds = 2): mine hard negatives with the Stage 2 model and
  // continue training from its checkpoint.
  if (variant.rounds == 2) {
    StageTimer mine_timer;
    PairSet stage3_pairs =
        stage3_mine(model, train_texts, qrels, cfg.top_n, cfg.neg_per_query, cfg.jobs);
    write_pairs(stage3_pairs, artifact("pairs_stage3.txt"));
    manifest.stage("stage3", "checkpoint_stage2.rpck,qrels", "pairs_stage3.txt", cfg.seed,
                   mine_timer.elapsed_ms());

    StageTimer retrain_timer;
    if (cfg.mix_stage1_pairs) {
      stage3_pairs.records.insert(stage3_pairs.records.end(), stage1_pairs.records.begin(),
                                  stage1_pairs.records.end());
    }
    TrainConfig stage2b_cfg = cfg.train;
    stage2b_cfg.seed = derive_seed(cfg.seed, "stage2b");
    model = stage2_train(model, stage3_pairs, train_texts, stage2b_cfg);
    save_encoder(model, artifact("checkpoint_stage2b.rpck"));
    manifest.stage("stage2b", "pairs_stage3.txt", "checkpoint_stage2b.rpck", stage2b_cfg.seed,
                   retrain_timer.elapsed_ms());
  }

  // Final ranking of the evaluation queries with the trained model.
  PipelineResult result;
  {
    StageTimer timer;
    result.eval_runs =
        dense_candidates(model, eval_texts, cfg.eval_k, cfg.jobs, variant.name());
    write_run(result.eval_runs, artifact("run_eval.txt"));
    manifest.stage("final", "eval-queries", "run_eval.txt", cfg.seed, timer.elapsed_ms());
  }
  result.model = std::move(model);
  result.run_dir = run_dir.string();
  result.manifest = manifest.lines();
  return result;
}

}  // namespace rankpipe
