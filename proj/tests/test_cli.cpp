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

#include <filesystem>
#include <iostream>
#include <sstream>
#include <vector>

#include "rankpipe/cli_app.hpp"
#include "rankpipe/corpus.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace rankpipe;
using rankpipe::testing::TempDir;
using rankpipe::testing::slurp;

namespace {

struct CliResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "rankpipe");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());

  std::ostringstream captured_out, captured_err;
  std::streambuf* old_out = std::cout.rdbuf(captured_out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(captured_err.rdbuf());
  int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, captured_out.str(), captured_err.str()};
}

/// The metrics fixture as files: one query, one relevant doc at rank 1.
struct EvalFixture {
  TempDir tmp;
  std::string run_path, qrels_path;
  EvalFixture() {
    run_path = tmp.write("run.txt",
                         "q1 Q0 d1 1 1.000000 sys\n"
                         "q1 Q0 d9 2 0.800000 sys\n"
                         "q1 Q0 d2 3 0.600000 sys\n");
    qrels_path = tmp.write("qrels.txt", "q1 0 d1 1\nq1 0 d2 1\n");
  }
};

}  // namespace

TEST_CASE("help and version exit 0") {
  CHECK(run({"--help"}).exit_code == 0);
  CHECK(run({"eval", "--help"}).exit_code == 0);
  CliResult version = run({"--version"});
  CHECK(version.exit_code == 0);
}

TEST_CASE("usage errors exit 2 with a one-line error") {
  CliResult unknown = run({"eval", "--no-such-flag"});
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.err.rfind("error: usage:", 0) == 0);
  CHECK(std::count(unknown.err.begin(), unknown.err.end(), '\n') == 1);

  CHECK(run({"definitely-not-a-command"}).exit_code == 2);
  CHECK(run({}).exit_code == 2);  // a subcommand is required

  TempDir tmp;
  CliResult missing = run({"eval", "--run", tmp.file("absent.txt"), "--qrels",
                           tmp.write("q.txt", "q1 0 d1 1\n")});
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("file not found") != std::string::npos);
}

TEST_CASE("range violations are usage errors") {
  EvalFixture fx;
  CliResult bad = run({"eval", "--run", fx.run_path, "--qrels", fx.qrels_path, "--ks", "0"});
  CHECK(bad.exit_code == 2);
}

TEST_CASE("runtime failures exit 1") {
  TempDir tmp;
  std::string bad_run = tmp.write("bad.txt", "q1 Q0 d1 3 1.000000 sys\n");  // rank != position
  std::string qrels = tmp.write("q.txt", "q1 0 d1 1\n");
  CliResult result = run({"eval", "--run", bad_run, "--qrels", qrels});
  CHECK(result.exit_code == 1);
  CHECK(result.err.rfind("error: runtime:", 0) == 0);
}

TEST_CASE("eval prints the expected metric table") {
  EvalFixture fx;
  CliResult result = run({"eval", "--run", fx.run_path, "--qrels", fx.qrels_path, "--ks", "3,10"});
  REQUIRE(result.exit_code == 0);
  // recall@3: both relevant docs in the top 3; mrr 1.0; map (1 + 2/3)/2.
  CHECK(result.out.find("recall@3   1.000000") != std::string::npos);
  CHECK(result.out.find("mrr@10     1.000000") != std::string::npos);
  CHECK(result.out.find("map@10     0.833333") != std::string::npos);
  CHECK(result.out.find("config: ks=3,10") != std::string::npos);
}

TEST_CASE("eval reproduces the hand-worked 3-query fixture end to end") {
  TempDir tmp;
  std::string run_path = tmp.write("run.txt",
                                   "q1 Q0 d1 1 5.000000 fx\n"
                                   "q1 Q0 d9 2 4.000000 fx\n"
                                   "q1 Q0 d2 3 3.000000 fx\n"
                                   "q1 Q0 d7 4 2.000000 fx\n"
                                   "q1 Q0 d5 5 1.000000 fx\n"
                                   "q2 Q0 x1 1 4.000000 fx\n"
                                   "q2 Q0 x2 2 3.000000 fx\n"
                                   "q2 Q0 x3 3 2.000000 fx\n"
                                   "q2 Q0 d3 4 1.000000 fx\n"
                                   "q3 Q0 d5 1 5.000000 fx\n"
                                   "q3 Q0 y1 2 4.000000 fx\n"
                                   "q3 Q0 y2 3 3.000000 fx\n"
                                   "q3 Q0 y3 4 2.000000 fx\n"
                                   "q3 Q0 d4 5 1.000000 fx\n");
  std::string qrels_path = tmp.write("qrels.txt",
                                     "q1 0 d1 1\nq1 0 d2 1\n"
                                     "q2 0 d3 1\n"
                                     "q3 0 d4 1\nq3 0 d5 1\nq3 0 d6 1\n");
  CliResult result = run({"eval", "--run", run_path, "--qrels", qrels_path, "--ks", "3,10"});
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("recall@3   0.444444") != std::string::npos);
  CHECK(result.out.find("recall@10  0.888889") != std::string::npos);
  CHECK(result.out.find("mrr@10     0.750000") != std::string::npos);
  CHECK(result.out.find("map@10     0.516667") != std::string::npos);
  CHECK(result.out.find("ndcg@10    0.667073") != std::string::npos);
}

TEST_CASE("config file values apply under command-line flags") {
  EvalFixture fx;
  std::string config = fx.tmp.write("cfg.ini",
                                    "# comment line\n"
                                    "ks=5\n");
  CliResult from_file =
      run({"eval", "--run", fx.run_path, "--qrels", fx.qrels_path, "--config", config});
  REQUIRE(from_file.exit_code == 0);
  CHECK(from_file.out.find("config: ks=5") != std::string::npos);
  CHECK(from_file.out.find("recall@5") != std::string::npos);

  // A flag overrides the file.
  CliResult flag_wins = run({"eval", "--run", fx.run_path, "--qrels", fx.qrels_path, "--config",
                             config, "--ks", "7"});
  REQUIRE(flag_wins.exit_code == 0);
  CHECK(flag_wins.out.find("config: ks=7") != std::string::npos);

  // Defaults apply when neither is present.
  CliResult defaults = run({"eval", "--run", fx.run_path, "--qrels", fx.qrels_path});
  REQUIRE(defaults.exit_code == 0);
  CHECK(defaults.out.find("config: ks=3,5,10,20,50,100,200") != std::string::npos);
}

TEST_CASE("unknown config keys are errors naming the key") {
  EvalFixture fx;
  std::string config = fx.tmp.write("typo.ini", "lerning_rate=0.5\n");
  CliResult result =
      run({"eval", "--run", fx.run_path, "--qrels", fx.qrels_path, "--config", config});
  CHECK(result.exit_code == 2);
  CHECK(result.err.find("lerning_rate") != std::string::npos);
}

TEST_CASE("ingest validates and reports counts") {
  TempDir tmp;
  std::string corpus = tmp.write("c.tsv", "d1\thello world\nd2\tmore text\n");
  CliResult result = run({"ingest", "--corpus", corpus, "--format", "tsv"});
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("documents: 2") != std::string::npos);

  // Canonical copies: jsonl in, TSV out.
  std::string jsonl = tmp.write("c.jsonl", "{\"id\": \"j1\", \"text\": \"from json\"}\n");
  std::string queries = tmp.write("q.tsv", "q1\tsome query\n");
  CliResult copied = run({"ingest", "--corpus", jsonl, "--format", "jsonl", "--queries", queries,
                          "--out-dir", tmp.file("canon")});
  REQUIRE(copied.exit_code == 0);
  CHECK(slurp(tmp.file("canon") + "/corpus.tsv") == "j1\tfrom json\n");
  CHECK(slurp(tmp.file("canon") + "/queries.tsv") == "q1\tsome query\n");
}

TEST_CASE("pretrain rejects a corpus with no trainable documents") {
  TempDir tmp;
  std::string corpus = tmp.write("c.tsv", "d1\tsolo\nd2\tword\n");  // all length-1
  CliResult result = run({"pretrain", "--corpus", corpus, "--dim", "4", "--epochs", "1",
                          "--seed", "1", "--out", tmp.file("x.rpck")});
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("error: runtime:") != std::string::npos);
}

TEST_CASE("index, retrieve and eval compose on files") {
  TempDir tmp;
  std::string corpus = tmp.write("c.tsv",
                                 "d1\tapple pie recipe\n"
                                 "d2\tcar engine manual\n"
                                 "d3\tapple orchard tour\n");
  std::string queries = tmp.write("q.tsv", "q1\tapple\n");
  std::string qrels = tmp.write("qrels.txt", "q1 0 d1 1\nq1 0 d3 1\n");
  std::string index_path = tmp.file("idx.txt");
  std::string run_path = tmp.file("run.txt");

  CHECK(run({"index", "--corpus", corpus, "--out", index_path}).exit_code == 0);
  CHECK(run({"retrieve", "--index", index_path, "--queries", queries, "--k", "3", "--out",
             run_path})
            .exit_code == 0);
  std::vector<RunList> runs = read_run(run_path);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].entries.size() == 3);
  CHECK(runs[0].entries[0].score > runs[0].entries[2].score);

  CliResult eval = run({"eval", "--run", run_path, "--qrels", qrels, "--ks", "2"});
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.out.find("recall@2  1.000000") != std::string::npos);

  CliResult both = run({"retrieve", "--index", index_path, "--checkpoint", "x", "--queries",
                        queries, "--out", run_path});
  CHECK(both.exit_code == 2);
}

TEST_CASE("gridsearch reports the grid size and writes the heatmap") {
  TempDir tmp;
  std::string run1 = tmp.write("r1.txt", "q1 Q0 d1 1 1.000000 a\nq1 Q0 d2 2 0.500000 a\n");
  std::string run2 = tmp.write("r2.txt", "q1 Q0 d2 1 1.000000 b\nq1 Q0 d1 2 0.500000 b\n");
  std::string run3 = tmp.write("r3.txt", "q1 Q0 d3 1 1.000000 c\nq1 Q0 d1 2 0.500000 c\n");
  std::string qrels = tmp.write("qrels.txt", "q1 0 d1 1\n");
  std::string heatmap = tmp.file("heat.csv");

  CliResult result = run({"gridsearch", "--runs", run1, run2, run3, "--qrels", qrels,
                          "--objective", "recall@3", "--step", "0.05", "--heatmap", heatmap});
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("evaluated 231 combinations") != std::string::npos);
  std::string csv = slurp(heatmap);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 232);
}

TEST_CASE("fuse writes a normalized weighted union") {
  TempDir tmp;
  std::string run1 = tmp.write("r1.txt", "q1 Q0 d1 1 4.000000 a\nq1 Q0 d2 2 2.000000 a\n");
  std::string run2 = tmp.write("r2.txt", "q1 Q0 d1 1 9.000000 b\nq1 Q0 d3 2 3.000000 b\n");
  std::string run3 = tmp.write("r3.txt", "q1 Q0 d4 1 1.000000 c\n");
  std::string out = tmp.file("fused.txt");
  CliResult result = run({"fuse", "--runs", run1, run2, run3, "--weights", "0.5", "0.25", "0.25",
                          "--k", "10", "--out", out});
  REQUIRE(result.exit_code == 0);
  std::vector<RunList> fused = read_run(out);
  REQUIRE(fused.size() == 1);
  CHECK(fused[0].entries[0].doc_id == "d1");  // top of both contributing runs

  CliResult bad = run({"fuse", "--runs", run1, run2, run3, "--weights", "0.5", "0.4", "0.3",
                       "--k", "10", "--out", out});
  CHECK(bad.exit_code == 2);  // weights violating the sum-to-one invariant are a usage error
}

TEST_CASE("pipeline subcommands compose end to end") {
  using rankpipe::testing::make_cluster_corpus;
  using rankpipe::testing::SyntheticSpec;
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.docs_per_cluster = 8;
  spec.subtopics_per_cluster = 2;
  spec.subtopic_docs = 3;
  spec.train_queries = 6;
  spec.eval_queries = 2;
  auto data = make_cluster_corpus(55, spec);

  TempDir tmp;
  std::string corpus = tmp.write("c.tsv", rankpipe::testing::to_tsv(data.docs));
  std::string train_q = tmp.write("train.tsv", rankpipe::testing::to_tsv(data.train_queries));
  std::string qrels = tmp.write("qrels.txt", rankpipe::testing::to_qrels_text(data.qrels));

  // pretrain -> retrieve candidates -> stage1 -> train -> mine
  std::string ckpt = tmp.file("phase1.rpck");
  CHECK(run({"pretrain", "--corpus", corpus, "--dim", "8", "--epochs", "2", "--seed", "9",
             "--out", ckpt})
            .exit_code == 0);
  std::string cand = tmp.file("cand.txt");
  CHECK(run({"retrieve", "--checkpoint", ckpt, "--vocab", ckpt + ".vocab", "--corpus", corpus,
             "--queries", train_q, "--k", "10", "--out", cand})
            .exit_code == 0);
  std::string pairs = tmp.file("pairs.txt");
  CHECK(run({"stage1", "--candidates", cand, "--qrels", qrels, "--top-n", "10",
             "--neg-per-query", "3", "--out", pairs})
            .exit_code == 0);
  std::string tuned = tmp.file("tuned.rpck");
  CHECK(run({"train", "--pairs", pairs, "--corpus", corpus, "--queries", train_q, "--vocab",
             ckpt + ".vocab", "--checkpoint", ckpt, "--epochs", "3", "--seed", "10", "--out",
             tuned})
            .exit_code == 0);
  std::string mined = tmp.file("mined.txt");
  CHECK(run({"mine", "--checkpoint", tuned, "--vocab", ckpt + ".vocab", "--corpus", corpus,
             "--queries", train_q, "--qrels", qrels, "--top-n", "10", "--neg-per-query", "3",
             "--out", mined})
            .exit_code == 0);
  CHECK(!slurp(mined).empty());
}

TEST_CASE("run-pipeline is reproducible at the CLI surface") {
  using rankpipe::testing::make_cluster_corpus;
  using rankpipe::testing::SyntheticSpec;
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.docs_per_cluster = 8;
  spec.subtopics_per_cluster = 2;
  spec.subtopic_docs = 3;
  spec.train_queries = 6;
  spec.eval_queries = 2;
  auto data = make_cluster_corpus(77, spec);

  TempDir tmp;
  std::string corpus = tmp.write("c.tsv", rankpipe::testing::to_tsv(data.docs));
  std::string train_q = tmp.write("train.tsv", rankpipe::testing::to_tsv(data.train_queries));
  std::string eval_q = tmp.write("eval.tsv", rankpipe::testing::to_tsv(data.eval_queries));
  std::string qrels = tmp.write("qrels.txt", rankpipe::testing::to_qrels_text(data.qrels));

  auto pipeline = [&](const std::string& out_dir) {
    return run({"run-pipeline", "--corpus", corpus, "--train-queries", train_q, "--eval-queries",
                eval_q, "--qrels", qrels, "--variant", "lms", "--rounds", "1", "--dim", "8",
                "--epochs", "2", "--top-n", "10", "--neg-per-query", "3", "--eval-k", "5",
                "--seed", "7", "--out-dir", out_dir});
  };
  CliResult first = pipeline(tmp.file("out1"));
  REQUIRE(first.exit_code == 0);
  CHECK(first.out.find("stage=stage2") != std::string::npos);
  CliResult second = pipeline(tmp.file("out2"));
  REQUIRE(second.exit_code == 0);

  namespace fs = std::filesystem;
  std::string run_a = (fs::path(tmp.file("out1")) / "lms_r1_seed7" / "run_eval.txt").string();
  std::string run_b = (fs::path(tmp.file("out2")) / "lms_r1_seed7" / "run_eval.txt").string();
  CHECK(slurp(run_a) == slurp(run_b));
  CHECK(!slurp(run_a).empty());

  // Seed is mandatory.
  CliResult no_seed = run({"run-pipeline", "--corpus", corpus, "--train-queries", train_q,
                           "--eval-queries", eval_q, "--qrels", qrels});
  CHECK(no_seed.exit_code == 2);
}
