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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "rankpipe/metrics.hpp"
#include "rankpipe/stages.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace rankpipe;
using rankpipe::testing::TempDir;
using rankpipe::testing::make_cluster_corpus;
using rankpipe::testing::SyntheticSpec;

namespace {

RunList candidates_of(const std::string& qid, const std::vector<std::string>& docs) {
  RunList run;
  run.query_id = qid;
  run.tag = "cand";
  double score = static_cast<double>(docs.size());
  for (const std::string& d : docs) run.entries.push_back(RunEntry{d, score--});
  return run;
}

std::set<std::pair<std::string, std::string>> negatives_of(const PairSet& pairs) {
  std::set<std::pair<std::string, std::string>> out;
  for (const PairRecord& r : pairs.records) {
    if (r.label == 0) out.insert({r.query_id, r.doc_id});
  }
  return out;
}

}  // namespace

TEST_CASE("stage1_label follows the documented labeling rule") {
  Qrels qrels;
  qrels.set("q1", "d5", 1);
  PairSet pairs = stage1_label({candidates_of("q1", {"d5", "d9", "d2", "d7", "d1"})}, qrels,
                               /*top_n=*/5, /*neg_per_query=*/2);
  REQUIRE(pairs.records.size() == 3);
  CHECK(pairs.records[0].query_id == "q1");
  CHECK(pairs.records[0].doc_id == "d5");
  CHECK(pairs.records[0].label == 1);
  CHECK(negatives_of(pairs) ==
        std::set<std::pair<std::string, std::string>>{{"q1", "d9"}, {"q1", "d2"}});
  CHECK(pairs.positive_count == 1);
  CHECK(pairs.negative_count == 2);
}

TEST_CASE("stage1_label: all-relevant candidates yield zero negatives, counted") {
  Qrels qrels;
  qrels.set("q1", "a", 1);
  qrels.set("q1", "b", 1);
  PairSet pairs = stage1_label({candidates_of("q1", {"a", "b"})}, qrels, 5, 3);
  CHECK(pairs.negative_count == 0);
  CHECK(pairs.queries_without_negatives == 1);
  CHECK(pairs.positive_count == 2);
}

TEST_CASE("stage1_label: unretrieved relevant docs still become positives") {
  Qrels qrels;
  qrels.set("q1", "missing", 1);
  qrels.set("q1", "found", 1);
  PairSet pairs = stage1_label({candidates_of("q1", {"found", "x"})}, qrels, 5, 2);
  bool has_missing = false;
  for (const PairRecord& r : pairs.records) {
    if (r.doc_id == "missing" && r.label == 1) has_missing = true;
  }
  CHECK(has_missing);
}

TEST_CASE("stage1_label: queries without relevant docs are skipped and counted") {
  Qrels qrels;
  qrels.set("other", "d", 1);
  PairSet pairs = stage1_label({candidates_of("q1", {"a", "b"})}, qrels, 5, 2);
  CHECK(pairs.records.empty());
  CHECK(pairs.skipped_no_relevant == 1);
}

TEST_CASE("stage1_label honors the top_n window") {
  Qrels qrels;
  qrels.set("q1", "rel", 1);
  // Negatives may come only from the first top_n candidates.
  PairSet pairs = stage1_label({candidates_of("q1", {"x1", "x2", "x3", "x4"})}, qrels,
                               /*top_n=*/2, /*neg_per_query=*/10);
  CHECK(negatives_of(pairs) ==
        std::set<std::pair<std::string, std::string>>{{"q1", "x1"}, {"q1", "x2"}});
}

TEST_CASE("property: no pair ever contradicts the qrels") {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 20; ++trial) {
    Qrels qrels;
    std::vector<RunList> candidates;
    int n_queries = 1 + static_cast<int>(rng() % 6);
    for (int q = 0; q < n_queries; ++q) {
      std::string qid = "q" + std::to_string(q);
      int n_rel = static_cast<int>(rng() % 4);
      for (int r = 0; r < n_rel; ++r) qrels.set(qid, "d" + std::to_string(rng() % 12), 1);
      std::vector<std::string> docs;
      for (int d = 0; d < 12; ++d) docs.push_back("d" + std::to_string(d));
      std::shuffle(docs.begin(), docs.end(), rng);
      docs.resize(1 + rng() % 12);
      candidates.push_back(candidates_of(qid, docs));
    }
    int top_n = 1 + static_cast<int>(rng() % 12);
    int neg = 1 + static_cast<int>(rng() % 5);
    PairSet pairs = stage1_label(candidates, qrels, top_n, neg);
    for (const PairRecord& r : pairs.records) {
      if (r.label == 1) {
        CHECK(qrels.is_relevant(r.query_id, r.doc_id));
      } else {
        CHECK(!qrels.is_relevant(r.query_id, r.doc_id));
      }
    }
  }
}

TEST_CASE("stage2_train rejects an empty pair set") {
  std::vector<Document> docs = {{"d1", "a b"}};
  std::vector<Query> queries = {{"q1", "a"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  EncodedTexts texts = encode_texts(docs, queries, vocab);
  EncoderParams base = init_encoder(vocab, 4, 1);
  PairSet empty;
  TrainConfig cfg;
  CHECK_THROWS_WITH_AS(stage2_train(base, empty, texts, cfg), doctest::Contains("no training pairs"),
                       Error);
}

TEST_CASE("stage2_train separates positives from negatives on a planted cluster corpus") {
  SyntheticSpec spec;
  spec.clusters = 4;
  spec.docs_per_cluster = 15;
  spec.subtopics_per_cluster = 3;
  spec.subtopic_docs = 3;
  spec.train_queries = 12;
  spec.eval_queries = 0;
  auto data = make_cluster_corpus(99, spec);
  Vocabulary vocab = build_vocabulary(data.docs, TokenizerScheme::whitespace(), 1);
  EncodedTexts texts = encode_texts(data.docs, data.train_queries, vocab);
  EncoderParams base = init_encoder(vocab, 16, 7);

  // Candidates from the untrained model, labeled against the judgments.
  std::vector<RunList> candidates;
  DocEmbeddings embeddings = embed_docs(base, texts.docs);
  for (size_t i = 0; i < texts.queries.size(); ++i) {
    RunList run = dense_retrieve_embedded(base, embeddings, texts.queries[i], 30, "t");
    run.query_id = texts.query_ids[i];
    candidates.push_back(std::move(run));
  }
  PairSet pairs = stage1_label(candidates, data.qrels, 30, 6);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 5;
  EncoderParams trained = stage2_train(base, pairs, texts, cfg);
  CHECK(trained.provenance.find("stage2") != std::string::npos);

  double pos_sim = 0.0, neg_sim = 0.0;
  int pos_n = 0, neg_n = 0;
  std::map<std::string, std::vector<double>> query_vec;
  for (size_t i = 0; i < texts.queries.size(); ++i) {
    query_vec[texts.query_ids[i]] = embed(trained, texts.queries[i]);
  }
  std::map<std::string, std::vector<double>> doc_vec;
  for (const EncodedDoc& doc : texts.docs) doc_vec[doc.doc_id] = embed(trained, doc.token_ids);
  for (const PairRecord& r : pairs.records) {
    double sim = cosine(query_vec.at(r.query_id), doc_vec.at(r.doc_id));
    if (r.label == 1) {
      pos_sim += sim;
      ++pos_n;
    } else {
      neg_sim += sim;
      ++neg_n;
    }
  }
  REQUIRE(pos_n > 0);
  REQUIRE(neg_n > 0);
  CHECK(pos_sim / pos_n > neg_sim / neg_n);

  // Determinism: the same inputs and seed give an identical checkpoint.
  EncoderParams again = stage2_train(base, pairs, texts, cfg);
  CHECK(again.embeddings == trained.embeddings);
}

TEST_CASE("stage3_mine turns the model's top false positives into hard negatives") {
  // Vocabulary from two mini-documents; embeddings arranged so that the
  // model loves "optimistic" but the judgments reject it.
  std::vector<Document> docs = {{"good", "signal signal"}, {"optimistic", "noise noise"}};
  std::vector<Query> queries = {{"q1", "noise"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  EncodedTexts texts = encode_texts(docs, queries, vocab);
  EncoderParams model = init_encoder(vocab, 4, 3);
  Qrels qrels;
  qrels.set("q1", "good", 1);

  PairSet mined = stage3_mine(model, texts, qrels, 2, 1);
  CHECK(mined.provenance == PairProvenance::stage3);
  // The query is literally the "noise" token: the non-relevant doc wins
  // rank 1 and must be the first hard negative.
  auto negs = negatives_of(mined);
  REQUIRE(negs.size() == 1);
  CHECK(negs.count({"q1", "optimistic"}) == 1);
}

TEST_CASE("stage3_mine yields no negatives when the model already ranks perfectly") {
  std::vector<Document> docs = {{"good", "signal"}, {"bad", "noise"}};
  std::vector<Query> queries = {{"q1", "signal"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  EncodedTexts texts = encode_texts(docs, queries, vocab);
  EncoderParams model = init_encoder(vocab, 4, 3);
  Qrels qrels;
  qrels.set("q1", "good", 1);
  // top_n = 1: only the top candidate is eligible, and it is the relevant doc.
  PairSet mined = stage3_mine(model, texts, qrels, 1, 3);
  CHECK(mined.negative_count == 0);
  CHECK(mined.queries_without_negatives == 1);
}

TEST_CASE("hard negatives differ from stage 1 negatives when the ranking moved") {
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.docs_per_cluster = 12;
  spec.subtopics_per_cluster = 3;
  spec.subtopic_docs = 3;
  spec.train_queries = 9;
  spec.eval_queries = 0;
  auto data = make_cluster_corpus(4242, spec);
  Vocabulary vocab = build_vocabulary(data.docs, TokenizerScheme::whitespace(), 1);
  EncodedTexts texts = encode_texts(data.docs, data.train_queries, vocab);
  EncoderParams base = init_encoder(vocab, 12, 17);

  std::vector<RunList> candidates;
  DocEmbeddings embeddings = embed_docs(base, texts.docs);
  for (size_t i = 0; i < texts.queries.size(); ++i) {
    RunList run = dense_retrieve_embedded(base, embeddings, texts.queries[i], 20, "t");
    run.query_id = texts.query_ids[i];
    candidates.push_back(std::move(run));
  }
  PairSet stage1 = stage1_label(candidates, data.qrels, 20, 5);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 23;
  EncoderParams tuned = stage2_train(base, stage1, texts, cfg);
  PairSet stage3 = stage3_mine(tuned, texts, data.qrels, 20, 5);
  CHECK(negatives_of(stage1) != negatives_of(stage3));
}

TEST_CASE("pair sets round-trip through their file format") {
  PairSet pairs;
  pairs.provenance = PairProvenance::stage3;
  pairs.top_n = 50;
  pairs.negatives_per_query = 4;
  pairs.records = {{"q1", "d1", 1}, {"q1", "d2", 0}, {"q2", "d9", 1}};
  pairs.positive_count = 2;
  pairs.negative_count = 1;
  TempDir tmp;
  std::string path = tmp.file("pairs.txt");
  write_pairs(pairs, path);
  PairSet loaded = read_pairs(path);
  CHECK(loaded.provenance == PairProvenance::stage3);
  CHECK(loaded.top_n == 50);
  CHECK(loaded.negatives_per_query == 4);
  REQUIRE(loaded.records.size() == 3);
  CHECK(loaded.records[1].doc_id == "d2");
  CHECK(loaded.records[1].label == 0);
  CHECK(loaded.positive_count == 2);
  CHECK(loaded.negative_count == 1);

  CHECK_THROWS_AS(read_pairs(tmp.write("bad.txt", "rankpipe-pairs v1 provenance=stage1\nq d 7\n")),
                  Error);
}

TEST_CASE("run_pipeline writes artifacts, manifest order and is reproducible") {
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.docs_per_cluster = 10;
  spec.subtopics_per_cluster = 3;
  spec.subtopic_docs = 3;
  spec.train_queries = 9;
  spec.eval_queries = 3;
  auto data = make_cluster_corpus(7, spec);
  PipelineConfig cfg;
  cfg.dim = 8;
  cfg.train.epochs = 3;
  cfg.mlm_epochs = 2;
  cfg.top_n = 15;
  cfg.neg_per_query = 3;
  cfg.eval_k = 10;
  cfg.seed = 31;
  cfg.train.seed = 31;

  TempDir tmp;
  PipelineVariant variant{CandidateSource::lms_mlm_pretrained, 2};
  PipelineResult result = run_pipeline(variant, data.docs, data.train_queries, data.eval_queries,
                                       data.qrels, cfg, tmp.dir());
  REQUIRE(result.manifest.size() == 7);  // header + phase1,stage1,stage2,stage3,stage2b,final
  CHECK(result.manifest[1].rfind("stage=phase1", 0) == 0);
  CHECK(result.manifest[2].rfind("stage=stage1", 0) == 0);
  CHECK(result.manifest[3].rfind("stage=stage2", 0) == 0);
  CHECK(result.manifest[4].rfind("stage=stage3", 0) == 0);
  CHECK(result.manifest[5].rfind("stage=stage2b", 0) == 0);
  CHECK(result.manifest[6].rfind("stage=final", 0) == 0);
  CHECK(result.eval_runs.size() == 3);

  namespace fs = std::filesystem;
  for (const char* name : {"vocab.txt", "checkpoint_phase1.rpck", "candidates_stage1.txt",
                           "pairs_stage1.txt", "checkpoint_stage2.rpck", "pairs_stage3.txt",
                           "checkpoint_stage2b.rpck", "run_eval.txt", "manifest.txt"}) {
    CHECK(fs::exists(fs::path(result.run_dir) / name));
  }

  // Same seed, fresh output directory: byte-identical checkpoints and runs.
  TempDir tmp2;
  PipelineResult again = run_pipeline(variant, data.docs, data.train_queries, data.eval_queries,
                                      data.qrels, cfg, tmp2.dir());
  for (const char* name : {"checkpoint_stage2.rpck", "checkpoint_stage2b.rpck", "run_eval.txt"}) {
    CHECK(rankpipe::testing::slurp((fs::path(result.run_dir) / name).string()) ==
          rankpipe::testing::slurp((fs::path(again.run_dir) / name).string()));
  }
}

TEST_CASE("rounds=1 checkpoint matches the rounds=2 intermediate bit for bit") {
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.docs_per_cluster = 10;
  spec.subtopics_per_cluster = 3;
  spec.subtopic_docs = 3;
  spec.train_queries = 9;
  spec.eval_queries = 2;
  auto data = make_cluster_corpus(19, spec);
  PipelineConfig cfg;
  cfg.dim = 8;
  cfg.train.epochs = 3;
  cfg.top_n = 15;
  cfg.neg_per_query = 3;
  cfg.eval_k = 10;
  cfg.seed = 77;
  cfg.train.seed = 77;

  TempDir tmp;
  PipelineResult round1 =
      run_pipeline(PipelineVariant{CandidateSource::lms_random_init, 1}, data.docs,
                   data.train_queries, data.eval_queries, data.qrels, cfg, tmp.dir());
  PipelineResult round2 =
      run_pipeline(PipelineVariant{CandidateSource::lms_random_init, 2}, data.docs,
                   data.train_queries, data.eval_queries, data.qrels, cfg, tmp.dir());

  namespace fs = std::filesystem;
  std::string a = rankpipe::testing::slurp(
      (fs::path(round1.run_dir) / "checkpoint_stage2.rpck").string());
  std::string b = rankpipe::testing::slurp(
      (fs::path(round2.run_dir) / "checkpoint_stage2.rpck").string());
  REQUIRE(!a.empty());
  CHECK(a == b);  // disabling Stage 3 reproduces the rounds=1 checkpoint

  // And the jobs knob must not change any byte of the outputs.
  PipelineConfig parallel_cfg = cfg;
  parallel_cfg.jobs = 4;
  TempDir tmp3;
  PipelineResult parallel =
      run_pipeline(PipelineVariant{CandidateSource::lms_random_init, 2}, data.docs,
                   data.train_queries, data.eval_queries, data.qrels, parallel_cfg, tmp3.dir());
  CHECK(rankpipe::testing::slurp((fs::path(round2.run_dir) / "run_eval.txt").string()) ==
        rankpipe::testing::slurp((fs::path(parallel.run_dir) / "run_eval.txt").string()));
}

TEST_CASE("training beats the untrained encoder on the synthetic corpus") {
  SyntheticSpec spec;
  spec.clusters = 4;
  spec.docs_per_cluster = 20;
  spec.subtopics_per_cluster = 4;
  spec.subtopic_docs = 4;
  spec.train_queries = 16;
  spec.eval_queries = 6;
  auto data = make_cluster_corpus(3, spec);
  PipelineConfig cfg;
  cfg.dim = 16;
  cfg.train.epochs = 10;
  cfg.top_n = 30;
  cfg.neg_per_query = 6;
  cfg.eval_k = 10;
  cfg.seed = 11;
  cfg.train.seed = 11;

  TempDir tmp;
  PipelineResult trained =
      run_pipeline(PipelineVariant{CandidateSource::lms_random_init, 1}, data.docs,
                   data.train_queries, data.eval_queries, data.qrels, cfg, tmp.dir());

  // Untrained baseline: random-init encoder, no Stage 2.
  Vocabulary vocab = build_vocabulary(data.docs, cfg.scheme, cfg.min_count);
  EncodedTexts eval_texts = encode_texts(data.docs, data.eval_queries, vocab);
  EncoderParams raw = init_encoder(vocab, cfg.dim, derive_seed(cfg.seed, "init"));
  std::vector<RunList> untrained_runs;
  DocEmbeddings embeddings = embed_docs(raw, eval_texts.docs);
  for (size_t i = 0; i < eval_texts.queries.size(); ++i) {
    RunList run =
        dense_retrieve_embedded(raw, embeddings, eval_texts.queries[i], cfg.eval_k, "raw");
    run.query_id = eval_texts.query_ids[i];
    untrained_runs.push_back(std::move(run));
  }
  double trained_recall = evaluate_single(trained.eval_runs, data.qrels, "recall@10");
  double untrained_recall = evaluate_single(untrained_runs, data.qrels, "recall@10");
  CHECK(trained_recall > untrained_recall);
}
