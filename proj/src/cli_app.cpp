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

#include "rankpipe/cli_app.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "rankpipe/corpus.hpp"
#include "rankpipe/encoder.hpp"
#include "rankpipe/fusion.hpp"
#include "rankpipe/metrics.hpp"
#include "rankpipe/sparse.hpp"
#include "rankpipe/stages.hpp"
#include "rankpipe/tokenizer.hpp"
#include "rankpipe/util.hpp"

namespace rankpipe {

namespace {

namespace fs = std::filesystem;

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::exists(path)) throw UsageError(flag + ": file not found: " + path);
}

void echo_config(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) std::cout << "config: " << key << '=' << value << '\n';
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

TokenizerScheme scheme_from_flags(const std::string& scheme, int ngram) {
  if (scheme == "whitespace") return TokenizerScheme::whitespace();
  if (scheme == "char-ngram") return TokenizerScheme::char_ngrams(ngram);
  throw UsageError("--scheme: expected whitespace or char-ngram");
}

std::vector<int> parse_ks(const std::string& spec) {
  std::vector<int> ks;
  for (const std::string& field : split_char(spec, ',')) {
    long k = parse_long(field, "--ks");
    if (k < 1) throw UsageError("--ks: cutoffs must be >= 1");
    ks.push_back(static_cast<int>(k));
  }
  if (ks.empty()) throw UsageError("--ks: expected a comma-separated list of cutoffs");
  return ks;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  out << content;
  if (!out.good()) throw Error("failed while writing " + path);
}

/// Registers the --config option. The file itself is applied by
/// apply_config_file before CLI11 parses, so precedence is
/// defaults < config file < command-line flags.
void attach_config(CLI::App* cmd) {
  cmd->add_option("--config", "flat key=value config file; '#' starts a comment");
}

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

/// Expands `--config <file>` into option arguments appended after the
/// original ones. Keys are option long names without the leading dashes;
/// a key the subcommand does not define is an error, and keys already
/// given on the command line are ignored (flags win over the file).
std::vector<std::string> apply_config_file(CLI::App& app, std::vector<std::string> args) {
  // Locate the subcommand and the --config value.
  const CLI::App* sub = nullptr;
  size_t sub_index = 0;
  for (size_t i = 0; i < args.size(); ++i) {
    for (const CLI::App* candidate : app.get_subcommands(nullptr)) {
      if (candidate->get_name() == args[i]) {
        sub = candidate;
        sub_index = i;
        break;
      }
    }
    if (sub) break;
  }
  if (!sub) return args;

  std::string config_path;
  for (size_t i = sub_index + 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config: expected a file path");
      config_path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      break;
    }
  }
  if (config_path.empty()) return args;
  if (!fs::exists(config_path)) throw UsageError("--config: file not found: " + config_path);

  std::ifstream in(config_path);
  if (!in.is_open()) throw UsageError("--config: cannot open " + config_path);

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(config_path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw UsageError(config_path + ":" + std::to_string(line_no) + ": empty key");
    }
    if (key == "config") {
      throw UsageError(config_path + ": a config file cannot set 'config'");
    }
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw UsageError(config_path + ": unknown config key '" + key + "' for command '" +
                       sub->get_name() + "'");
    }
    // Command line wins: skip keys already present as flags.
    bool on_command_line = false;
    for (size_t i = sub_index + 1; i < args.size(); ++i) {
      if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) {
        on_command_line = true;
        break;
      }
    }
    if (on_command_line) continue;

    if (opt->get_expected_min() == 0) {  // boolean flag
      std::string lowered = value;
      for (char& c : lowered) c = static_cast<char>(std::tolower(c));
      if (lowered == "true" || lowered == "1" || lowered == "yes" || lowered == "on") {
        args.push_back("--" + key);
      } else if (lowered != "false" && lowered != "0" && lowered != "no" && lowered != "off") {
        throw UsageError(config_path + ": flag '" + key + "' expects a boolean, got '" + value +
                         "'");
      }
      continue;
    }
    args.push_back("--" + key);
    if (opt->get_expected_min() > 1) {
      for (const std::string& piece : split_char(value, ',')) args.push_back(trim(piece));
    } else {
      args.push_back(value);
    }
  }
  return args;
}

// Options shared by the commands that tokenize raw text.
struct SchemeOptions {
  std::string scheme = "whitespace";
  int ngram = 2;
  int min_count = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--scheme", scheme, "tokenizer: whitespace or char-ngram")
        ->check(CLI::IsMember({"whitespace", "char-ngram"}))
        ->capture_default_str();
    cmd->add_option("--ngram", ngram, "n-gram width for char-ngram")
        ->check(CLI::Range(1, 16))
        ->capture_default_str();
    cmd->add_option("--min-count", min_count, "minimum corpus frequency kept in the vocabulary")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
  TokenizerScheme resolve() const { return scheme_from_flags(scheme, ngram); }
};

struct TrainOptions {
  double margin = 0.5;
  double learning_rate = 0.1;
  int epochs = 10;
  int batch_size = 32;
  double mask_rate = 0.15;
  uint64_t seed = 0;
  bool literal_cosine_distance = false;

  void attach(CLI::App* cmd, bool with_mask_rate) {
    cmd->add_option("--margin", margin, "contrastive margin, in (0,1]")
        ->check(CLI::Range(1e-9, 1.0))
        ->capture_default_str();
    cmd->add_option("--lr", learning_rate, "learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--epochs", epochs, "training epochs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "mini-batch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    if (with_mask_rate) {
      cmd->add_option("--mask-rate", mask_rate, "MLM masking probability, in (0,1)")
          ->check(CLI::Range(1e-9, 1.0 - 1e-9))
          ->capture_default_str();
    }
    cmd->add_option("--seed", seed, "random seed (required; no wall-clock seeding)")->required();
    cmd->add_flag("--literal-cosine-distance", literal_cosine_distance,
                  "compatibility: use cosine itself as the distance instead of 1-cosine");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    cfg.margin = margin;
    cfg.learning_rate = learning_rate;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.mask_rate = mask_rate;
    cfg.seed = seed;
    cfg.literal_cosine_distance = literal_cosine_distance;
    return cfg;
  }

  void echo(std::map<std::string, std::string>& kv, bool with_mask_rate) const {
    kv["margin"] = format_score(margin);
    kv["lr"] = format_score(learning_rate);
    kv["epochs"] = std::to_string(epochs);
    kv["batch-size"] = std::to_string(batch_size);
    if (with_mask_rate) kv["mask-rate"] = format_score(mask_rate);
    kv["seed"] = std::to_string(seed);
    kv["literal-cosine-distance"] = bool_str(literal_cosine_distance);
  }
};

void print_epoch_losses(const TrainStats& stats) {
  for (size_t e = 0; e < stats.epoch_mean_loss.size(); ++e) {
    std::cout << "epoch " << (e + 1) << " mean loss " << format_score(stats.epoch_mean_loss[e])
              << '\n';
  }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

void add_ingest(CLI::App& app) {
  auto* cmd = app.add_subcommand("ingest", "validate a corpus (and queries) and report stats");
  attach_config(cmd);
  struct Opts {
    std::string corpus, format = "tsv", queries, out_dir;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--corpus", opt->corpus, "corpus file")->required();
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  cmd->add_option("--queries", opt->queries, "optional query TSV to validate");
  cmd->add_option("--out-dir", opt->out_dir, "write canonical TSV copies here");
  cmd->callback([opt]() {
    echo_config({{"corpus", opt->corpus},
                 {"format", opt->format},
                 {"queries", opt->queries},
                 {"out-dir", opt->out_dir}});
    require_file(opt->corpus, "--corpus");
    std::vector<Document> docs = load_corpus(opt->corpus, parse_corpus_format(opt->format));
    std::cout << "documents: " << docs.size() << '\n';
    std::vector<Query> queries;
    if (!opt->queries.empty()) {
      require_file(opt->queries, "--queries");
      queries = load_queries(opt->queries);
      std::cout << "queries: " << queries.size() << '\n';
    }
    if (!opt->out_dir.empty()) {
      fs::create_directories(opt->out_dir);
      std::ofstream out(fs::path(opt->out_dir) / "corpus.tsv", std::ios::binary);
      for (const Document& d : docs) out << d.id << '\t' << d.text << '\n';
      if (!out.good()) throw Error("failed while writing corpus.tsv");
      if (!queries.empty()) {
        std::ofstream qout(fs::path(opt->out_dir) / "queries.tsv", std::ios::binary);
        for (const Query& q : queries) qout << q.id << '\t' << q.text << '\n';
        if (!qout.good()) throw Error("failed while writing queries.tsv");
      }
    }
  });
}

void add_index(CLI::App& app) {
  auto* cmd = app.add_subcommand("index", "build and persist an inverted index");
  attach_config(cmd);
  struct Opts {
    std::string corpus, format = "tsv", out;
    SchemeOptions scheme;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--corpus", opt->corpus, "corpus file")->required();
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  opt->scheme.attach(cmd);
  cmd->add_option("--out", opt->out, "index output path")->required();
  cmd->callback([opt]() {
    echo_config({{"corpus", opt->corpus},
                 {"format", opt->format},
                 {"scheme", opt->scheme.resolve().to_string()},
                 {"min-count", std::to_string(opt->scheme.min_count)},
                 {"out", opt->out}});
    require_file(opt->corpus, "--corpus");
    std::vector<Document> docs = load_corpus(opt->corpus, parse_corpus_format(opt->format));
    Vocabulary vocab = build_vocabulary(docs, opt->scheme.resolve(), opt->scheme.min_count);
    InvertedIndex index = build_index(docs, vocab);
    save_index(index, opt->out);
    std::cout << "indexed " << index.doc_count() << " documents, vocabulary " << vocab.size()
              << '\n';
  });
}

void add_pretrain(CLI::App& app) {
  auto* cmd = app.add_subcommand("pretrain", "masked-token pretraining from scratch");
  attach_config(cmd);
  struct Opts {
    std::string corpus, format = "tsv", out, vocab_out;
    SchemeOptions scheme;
    TrainOptions train;
    int dim = 32;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--corpus", opt->corpus, "corpus file")->required();
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  opt->scheme.attach(cmd);
  cmd->add_option("--dim", opt->dim, "embedding dimension")
      ->check(CLI::Range(2, 4096))
      ->capture_default_str();
  opt->train.attach(cmd, /*with_mask_rate=*/true);
  cmd->add_option("--out", opt->out, "checkpoint output path")->required();
  cmd->add_option("--vocab-out", opt->vocab_out, "vocabulary output path (default: <out>.vocab)");
  cmd->callback([opt]() {
    std::map<std::string, std::string> kv{{"corpus", opt->corpus},
                                          {"format", opt->format},
                                          {"scheme", opt->scheme.resolve().to_string()},
                                          {"min-count", std::to_string(opt->scheme.min_count)},
                                          {"dim", std::to_string(opt->dim)},
                                          {"out", opt->out}};
    opt->train.echo(kv, true);
    echo_config(kv);
    require_file(opt->corpus, "--corpus");
    std::vector<Document> docs = load_corpus(opt->corpus, parse_corpus_format(opt->format));
    Vocabulary vocab = build_vocabulary(docs, opt->scheme.resolve(), opt->scheme.min_count);
    std::vector<std::vector<TokenId>> token_docs;
    for (const Document& doc : docs) {
      std::vector<TokenId> ids = encode_ids(doc.text, vocab);
      if (ids.size() >= 2) token_docs.push_back(std::move(ids));
    }
    if (token_docs.empty()) throw Error("pretrain: no documents with at least 2 tokens");
    EncoderParams params = init_encoder(vocab, opt->dim, derive_seed(opt->train.seed, "init"));
    TrainStats stats;
    TrainConfig cfg = opt->train.resolve();
    params = mlm_pretrain(params, token_docs, cfg, &stats);
    params.provenance = "pretrain(mlm)";
    print_epoch_losses(stats);
    if (stats.skipped_docs > 0) {
      std::cout << "skipped fully-masked documents: " << stats.skipped_docs << '\n';
    }
    save_encoder(params, opt->out);
    std::string vocab_path = opt->vocab_out.empty() ? opt->out + ".vocab" : opt->vocab_out;
    save_vocabulary(vocab, vocab_path);
    std::cout << "checkpoint written: " << opt->out << '\n';
  });
}

void add_stage1(CLI::App& app) {
  auto* cmd = app.add_subcommand("stage1", "label candidate rankings into training pairs");
  attach_config(cmd);
  struct Opts {
    std::string candidates, qrels, out;
    int top_n = 100, neg_per_query = 8;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--candidates", opt->candidates, "candidate run file")->required();
  cmd->add_option("--qrels", opt->qrels, "relevance judgments")->required();
  cmd->add_option("--top-n", opt->top_n, "candidate window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--neg-per-query", opt->neg_per_query, "negatives kept per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", opt->out, "pairs output path")->required();
  cmd->callback([opt]() {
    echo_config({{"candidates", opt->candidates},
                 {"qrels", opt->qrels},
                 {"top-n", std::to_string(opt->top_n)},
                 {"neg-per-query", std::to_string(opt->neg_per_query)},
                 {"out", opt->out}});
    require_file(opt->candidates, "--candidates");
    require_file(opt->qrels, "--qrels");
    std::vector<RunList> candidates = read_run(opt->candidates);
    Qrels qrels = load_qrels(opt->qrels);
    PairSet pairs = stage1_label(candidates, qrels, opt->top_n, opt->neg_per_query);
    write_pairs(pairs, opt->out);
    std::cout << "pairs: " << pairs.positive_count << " positive, " << pairs.negative_count
              << " negative\n";
    if (pairs.skipped_no_relevant > 0) {
      std::cout << "warning: skipped " << pairs.skipped_no_relevant
                << " queries with no relevant docs\n";
    }
    if (pairs.queries_without_negatives > 0) {
      std::cout << "warning: " << pairs.queries_without_negatives
                << " queries yielded no negatives\n";
    }
  });
}

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "contrastive training on labeled pairs");
  attach_config(cmd);
  struct Opts {
    std::string pairs, corpus, format = "tsv", queries, vocab, checkpoint, out;
    TrainOptions train;
    int dim = 32;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--pairs", opt->pairs, "labeled pairs file")->required();
  cmd->add_option("--corpus", opt->corpus, "corpus file")->required();
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  cmd->add_option("--queries", opt->queries, "query TSV")->required();
  cmd->add_option("--vocab", opt->vocab, "vocabulary file")->required();
  cmd->add_option("--checkpoint", opt->checkpoint, "continue from this checkpoint");
  cmd->add_option("--dim", opt->dim, "embedding dimension for fresh initialization")
      ->check(CLI::Range(2, 4096))
      ->capture_default_str();
  opt->train.attach(cmd, /*with_mask_rate=*/false);
  cmd->add_option("--out", opt->out, "checkpoint output path")->required();
  cmd->callback([opt]() {
    std::map<std::string, std::string> kv{{"pairs", opt->pairs},
                                          {"corpus", opt->corpus},
                                          {"format", opt->format},
                                          {"queries", opt->queries},
                                          {"vocab", opt->vocab},
                                          {"checkpoint", opt->checkpoint},
                                          {"dim", std::to_string(opt->dim)},
                                          {"out", opt->out}};
    opt->train.echo(kv, false);
    echo_config(kv);
    require_file(opt->pairs, "--pairs");
    require_file(opt->corpus, "--corpus");
    require_file(opt->queries, "--queries");
    require_file(opt->vocab, "--vocab");
    Vocabulary vocab = load_vocabulary(opt->vocab);
    std::vector<Document> docs = load_corpus(opt->corpus, parse_corpus_format(opt->format));
    std::vector<Query> queries = load_queries(opt->queries);
    EncodedTexts texts = encode_texts(docs, queries, vocab);
    PairSet pairs = read_pairs(opt->pairs);
    EncoderParams base;
    if (!opt->checkpoint.empty()) {
      require_file(opt->checkpoint, "--checkpoint");
      base = load_encoder(opt->checkpoint, vocab);
    } else {
      base = init_encoder(vocab, opt->dim, derive_seed(opt->train.seed, "init"));
    }
    TrainStats stats;
    EncoderParams model = stage2_train(base, pairs, texts, opt->train.resolve(), &stats);
    print_epoch_losses(stats);
    save_encoder(model, opt->out);
    std::cout << "checkpoint written: " << opt->out << '\n';
  });
}

void add_mine(CLI::App& app) {
  auto* cmd = app.add_subcommand("mine", "mine hard negatives with a trained encoder");
  attach_config(cmd);
  struct Opts {
    std::string checkpoint, vocab, corpus, format = "tsv", queries, qrels, out;
    int top_n = 100, neg_per_query = 8, jobs = 1;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--checkpoint", opt->checkpoint, "Stage 2 checkpoint")->required();
  cmd->add_option("--vocab", opt->vocab, "vocabulary file")->required();
  cmd->add_option("--corpus", opt->corpus, "corpus file")->required();
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  cmd->add_option("--queries", opt->queries, "query TSV")->required();
  cmd->add_option("--qrels", opt->qrels, "relevance judgments")->required();
  cmd->add_option("--top-n", opt->top_n, "candidate window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--neg-per-query", opt->neg_per_query, "negatives kept per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--jobs", opt->jobs, "query-level parallelism")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", opt->out, "pairs output path")->required();
  cmd->callback([opt]() {
    echo_config({{"checkpoint", opt->checkpoint},
                 {"vocab", opt->vocab},
                 {"corpus", opt->corpus},
                 {"format", opt->format},
                 {"queries", opt->queries},
                 {"qrels", opt->qrels},
                 {"top-n", std::to_string(opt->top_n)},
                 {"neg-per-query", std::to_string(opt->neg_per_query)},
                 {"jobs", std::to_string(opt->jobs)},
                 {"out", opt->out}});
    require_file(opt->checkpoint, "--checkpoint");
    require_file(opt->vocab, "--vocab");
    require_file(opt->corpus, "--corpus");
    require_file(opt->queries, "--queries");
    require_file(opt->qrels, "--qrels");
    Vocabulary vocab = load_vocabulary(opt->vocab);
    EncoderParams model = load_encoder(opt->checkpoint, vocab);
    std::vector<Document> docs = load_corpus(opt->corpus, parse_corpus_format(opt->format));
    std::vector<Query> queries = load_queries(opt->queries);
    Qrels qrels = load_qrels(opt->qrels);
    EncodedTexts texts = encode_texts(docs, queries, vocab);
    PairSet pairs = stage3_mine(model, texts, qrels, opt->top_n, opt->neg_per_query, opt->jobs);
    write_pairs(pairs, opt->out);
    std::cout << "pairs: " << pairs.positive_count << " positive, " << pairs.negative_count
              << " hard negative\n";
  });
}

void add_retrieve(CLI::App& app) {
  auto* cmd = app.add_subcommand("retrieve", "rank queries with a sparse index or an encoder");
  attach_config(cmd);
  struct Opts {
    std::string index, scorer = "bm25plus", checkpoint, vocab, corpus, format = "tsv";
    std::string queries, out, tag;
    double k1 = 1.2, b = 0.75, delta = 1.0;
    int k = 100, jobs = 1;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--index", opt->index, "inverted index (sparse mode)");
  cmd->add_option("--scorer", opt->scorer, "sparse scorer: tfidf or bm25plus")
      ->check(CLI::IsMember({"tfidf", "bm25plus"}))
      ->capture_default_str();
  cmd->add_option("--k1", opt->k1, "BM25 k1")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--b", opt->b, "BM25 b")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--delta", opt->delta, "BM25+ delta")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--checkpoint", opt->checkpoint, "encoder checkpoint (dense mode)");
  cmd->add_option("--vocab", opt->vocab, "vocabulary file (dense mode)");
  cmd->add_option("--corpus", opt->corpus, "corpus file (dense mode)");
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  cmd->add_option("--queries", opt->queries, "query TSV")->required();
  cmd->add_option("--k", opt->k, "results per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--jobs", opt->jobs, "query-level parallelism")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tag", opt->tag, "run tag (defaults to the scorer / 'dense')");
  cmd->add_option("--out", opt->out, "run file output path")->required();
  cmd->callback([opt]() {
    bool sparse_mode = !opt->index.empty();
    bool dense_mode = !opt->checkpoint.empty();
    if (sparse_mode == dense_mode) {
      throw UsageError("retrieve: pass exactly one of --index or --checkpoint");
    }
    echo_config({{"index", opt->index},
                 {"scorer", opt->scorer},
                 {"checkpoint", opt->checkpoint},
                 {"vocab", opt->vocab},
                 {"corpus", opt->corpus},
                 {"queries", opt->queries},
                 {"k", std::to_string(opt->k)},
                 {"jobs", std::to_string(opt->jobs)},
                 {"tag", opt->tag},
                 {"out", opt->out}});
    require_file(opt->queries, "--queries");
    std::vector<Query> queries = load_queries(opt->queries);
    std::vector<RunList> runs(queries.size());
    if (sparse_mode) {
      require_file(opt->index, "--index");
      InvertedIndex index = load_index(opt->index);
      SparseScorer scorer = opt->scorer == "tfidf"
                                ? SparseScorer::tfidf()
                                : SparseScorer::bm25plus({opt->k1, opt->b, opt->delta});
      parallel_for(queries.size(), opt->jobs, [&](size_t i) {
        runs[i] = sparse_retrieve(index, queries[i], scorer, opt->k);
      });
    } else {
      if (opt->vocab.empty() || opt->corpus.empty()) {
        throw UsageError("retrieve: dense mode needs --vocab and --corpus");
      }
      require_file(opt->checkpoint, "--checkpoint");
      require_file(opt->vocab, "--vocab");
      require_file(opt->corpus, "--corpus");
      Vocabulary vocab = load_vocabulary(opt->vocab);
      EncoderParams model = load_encoder(opt->checkpoint, vocab);
      std::vector<Document> docs = load_corpus(opt->corpus, parse_corpus_format(opt->format));
      EncodedTexts texts = encode_texts(docs, queries, vocab);
      DocEmbeddings embeddings = embed_docs(model, texts.docs);
      parallel_for(queries.size(), opt->jobs, [&](size_t i) {
        runs[i] =
            dense_retrieve_embedded(model, embeddings, texts.queries[i], opt->k, "dense");
        runs[i].query_id = texts.query_ids[i];
      });
    }
    if (!opt->tag.empty()) {
      for (RunList& run : runs) run.tag = opt->tag;
    }
    write_run(runs, opt->out);
    std::cout << "run written: " << opt->out << " (" << runs.size() << " queries)\n";
  });
}

void add_fuse(CLI::App& app) {
  auto* cmd = app.add_subcommand("fuse", "weighted fusion of three run files");
  attach_config(cmd);
  struct Opts {
    std::vector<std::string> runs;
    std::vector<double> weights;
    std::string out;
    int k = 100;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--runs", opt->runs, "three run files")->expected(3)->required();
  cmd->add_option("--weights", opt->weights, "alpha beta theta (must sum to 1)")
      ->expected(3)
      ->required();
  cmd->add_option("--k", opt->k, "fused results per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", opt->out, "fused run output path")->required();
  cmd->callback([opt]() {
    echo_config({{"runs", opt->runs[0] + "," + opt->runs[1] + "," + opt->runs[2]},
                 {"weights", format_score(opt->weights[0]) + "," + format_score(opt->weights[1]) +
                                 "," + format_score(opt->weights[2])},
                 {"k", std::to_string(opt->k)},
                 {"out", opt->out}});
    for (const std::string& path : opt->runs) require_file(path, "--runs");
    WeightTriple w;
    try {
      w = WeightTriple::of(opt->weights[0], opt->weights[1], opt->weights[2]);
    } catch (const Error& e) {
      throw UsageError(e.what());  // bad flag values, not a runtime failure
    }

    std::array<std::map<std::string, RunList>, 3> by_query;
    for (int m = 0; m < 3; ++m) {
      for (RunList& run : read_run(opt->runs[m])) {
        std::string qid = run.query_id;
        if (!by_query[m].emplace(qid, std::move(run)).second) {
          throw Error(opt->runs[m] + ": duplicate run for query '" + qid + "'");
        }
      }
    }
    std::vector<RunList> fused;
    for (const auto& [qid, run1] : by_query[0]) {
      auto it2 = by_query[1].find(qid);
      auto it3 = by_query[2].find(qid);
      if (it2 == by_query[1].end() || it3 == by_query[2].end()) {
        throw Error("fuse: query '" + qid + "' missing from one of the runs");
      }
      fused.push_back(fuse(normalize_per_query(run1), normalize_per_query(it2->second),
                           normalize_per_query(it3->second), w, opt->k));
    }
    if (by_query[1].size() != by_query[0].size() || by_query[2].size() != by_query[0].size()) {
      throw Error("fuse: run files cover different query sets");
    }
    write_run(fused, opt->out);
    std::cout << "fused run written: " << opt->out << " (" << fused.size() << " queries)\n";
  });
}

void add_gridsearch(CLI::App& app) {
  auto* cmd = app.add_subcommand("gridsearch", "grid-search fusion weights on tuning queries");
  attach_config(cmd);
  struct Opts {
    std::vector<std::string> runs;
    std::string qrels, objective = "recall@3", heatmap, report;
    double step = 0.05;
    int jobs = 1;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--runs", opt->runs, "three run files")->expected(3)->required();
  cmd->add_option("--qrels", opt->qrels, "relevance judgments")->required();
  cmd->add_option("--objective", opt->objective, "metric to maximize, e.g. recall@3")
      ->capture_default_str();
  cmd->add_option("--step", opt->step, "grid step (must divide 1 exactly)")
      ->check(CLI::Range(1e-6, 1.0))
      ->capture_default_str();
  cmd->add_option("--heatmap", opt->heatmap, "CSV output: alpha,beta,theta,objective");
  cmd->add_option("--report", opt->report, "text report output path");
  cmd->add_option("--jobs", opt->jobs, "grid-level parallelism")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->callback([opt]() {
    echo_config({{"runs", opt->runs[0] + "," + opt->runs[1] + "," + opt->runs[2]},
                 {"qrels", opt->qrels},
                 {"objective", opt->objective},
                 {"step", format_score(opt->step)},
                 {"heatmap", opt->heatmap},
                 {"report", opt->report},
                 {"jobs", std::to_string(opt->jobs)}});
    for (const std::string& path : opt->runs) require_file(path, "--runs");
    require_file(opt->qrels, "--qrels");
    try {
      enumerate_grid(opt->step);
      evaluate_single({}, Qrels{}, opt->objective);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    Qrels qrels = load_qrels(opt->qrels);
    GridResult result = grid_search(read_run(opt->runs[0]), read_run(opt->runs[1]),
                                    read_run(opt->runs[2]), qrels, opt->objective, opt->step,
                                    opt->jobs);
    std::cout << "evaluated " << result.table.size() << " combinations\n";
    std::string summary = format_grid_summary(result);
    std::cout << summary;
    if (!opt->heatmap.empty()) write_heatmap_csv(result, opt->heatmap);
    if (!opt->report.empty()) write_text_file(opt->report, summary);
  });
}

void add_eval(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "score a run file against qrels");
  attach_config(cmd);
  struct Opts {
    std::string run, qrels, ks = "3,5,10,20,50,100,200", recall_mode = "fraction", csv;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--run", opt->run, "run file")->required();
  cmd->add_option("--qrels", opt->qrels, "relevance judgments")->required();
  cmd->add_option("--ks", opt->ks, "comma-separated recall cutoffs")->capture_default_str();
  cmd->add_option("--recall-mode", opt->recall_mode, "fraction (default) or hit")
      ->check(CLI::IsMember({"fraction", "hit"}))
      ->capture_default_str();
  cmd->add_option("--csv", opt->csv, "also write the report as CSV");
  cmd->callback([opt]() {
    echo_config({{"run", opt->run},
                 {"qrels", opt->qrels},
                 {"ks", opt->ks},
                 {"recall-mode", opt->recall_mode},
                 {"csv", opt->csv}});
    require_file(opt->run, "--run");
    require_file(opt->qrels, "--qrels");
    std::vector<int> ks = parse_ks(opt->ks);
    RecallMode mode = opt->recall_mode == "hit" ? RecallMode::hit : RecallMode::fraction;
    MetricReport report = evaluate(read_run(opt->run), load_qrels(opt->qrels), ks, mode);
    std::cout << format_report_text(report);
    if (!opt->csv.empty()) write_text_file(opt->csv, format_report_csv(report));
  });
}

void add_run_pipeline(CLI::App& app) {
  auto* cmd = app.add_subcommand("run-pipeline", "execute a full staged training pipeline");
  attach_config(cmd);
  struct Opts {
    std::string corpus, format = "tsv", train_queries, eval_queries, qrels, out_dir = "runs";
    std::string variant = "lms";
    int rounds = 1;
    SchemeOptions scheme;
    TrainOptions train;
    int dim = 32, mlm_epochs = 5, top_n = 100, neg_per_query = 8, eval_k = 100, jobs = 1;
    double k1 = 1.2, b = 0.75, delta = 1.0;
    bool mix_stage1_pairs = false;
  };
  auto opt = std::make_shared<Opts>();
  cmd->add_option("--corpus", opt->corpus, "corpus file")->required();
  cmd->add_option("--format", opt->format, "corpus format: jsonl or tsv")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->capture_default_str();
  cmd->add_option("--train-queries", opt->train_queries, "training query TSV")->required();
  cmd->add_option("--eval-queries", opt->eval_queries, "evaluation query TSV")->required();
  cmd->add_option("--qrels", opt->qrels, "relevance judgments for the training queries")
      ->required();
  cmd->add_option("--variant", opt->variant, "candidate source: bm25plus, lms or lms-mlm")
      ->check(CLI::IsMember({"bm25plus", "lms", "lms-mlm"}))
      ->capture_default_str();
  cmd->add_option("--rounds", opt->rounds, "1 = Stages 1-2; 2 = adds Stage 3")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  opt->scheme.attach(cmd);
  cmd->add_option("--dim", opt->dim, "embedding dimension")
      ->check(CLI::Range(2, 4096))
      ->capture_default_str();
  opt->train.attach(cmd, /*with_mask_rate=*/true);
  cmd->add_option("--mlm-epochs", opt->mlm_epochs, "Phase 1 epochs (lms-mlm)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--top-n", opt->top_n, "Stage 1/3 candidate window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--neg-per-query", opt->neg_per_query, "negatives per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--eval-k", opt->eval_k, "depth of the final evaluation runs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--k1", opt->k1, "BM25 k1")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--b", opt->b, "BM25 b")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--delta", opt->delta, "BM25+ delta")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_flag("--mix-stage1-pairs", opt->mix_stage1_pairs,
                "Stage 2' trains on stage3 + stage1 pairs instead of stage3 alone");
  cmd->add_option("--jobs", opt->jobs, "query-level parallelism")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out-dir", opt->out_dir, "artifact root directory")->capture_default_str();
  cmd->callback([opt]() {
    std::map<std::string, std::string> kv{{"corpus", opt->corpus},
                                          {"format", opt->format},
                                          {"train-queries", opt->train_queries},
                                          {"eval-queries", opt->eval_queries},
                                          {"qrels", opt->qrels},
                                          {"variant", opt->variant},
                                          {"rounds", std::to_string(opt->rounds)},
                                          {"scheme", opt->scheme.resolve().to_string()},
                                          {"min-count", std::to_string(opt->scheme.min_count)},
                                          {"dim", std::to_string(opt->dim)},
                                          {"mlm-epochs", std::to_string(opt->mlm_epochs)},
                                          {"top-n", std::to_string(opt->top_n)},
                                          {"neg-per-query", std::to_string(opt->neg_per_query)},
                                          {"eval-k", std::to_string(opt->eval_k)},
                                          {"k1", format_score(opt->k1)},
                                          {"b", format_score(opt->b)},
                                          {"delta", format_score(opt->delta)},
                                          {"mix-stage1-pairs", bool_str(opt->mix_stage1_pairs)},
                                          {"jobs", std::to_string(opt->jobs)},
                                          {"out-dir", opt->out_dir}};
    opt->train.echo(kv, true);
    echo_config(kv);
    require_file(opt->corpus, "--corpus");
    require_file(opt->train_queries, "--train-queries");
    require_file(opt->eval_queries, "--eval-queries");
    require_file(opt->qrels, "--qrels");

    PipelineVariant variant{parse_candidate_source(opt->variant), opt->rounds};
    PipelineConfig cfg;
    cfg.scheme = opt->scheme.resolve();
    cfg.min_count = opt->scheme.min_count;
    cfg.dim = opt->dim;
    cfg.train = opt->train.resolve();
    cfg.train.seed = opt->train.seed;
    cfg.mlm_epochs = opt->mlm_epochs;
    cfg.top_n = opt->top_n;
    cfg.neg_per_query = opt->neg_per_query;
    cfg.eval_k = opt->eval_k;
    cfg.bm25 = Bm25Params{opt->k1, opt->b, opt->delta};
    cfg.mix_stage1_pairs = opt->mix_stage1_pairs;
    cfg.seed = opt->train.seed;
    cfg.jobs = opt->jobs;

    std::vector<Document> corpus = load_corpus(opt->corpus, parse_corpus_format(opt->format));
    std::vector<Query> train_queries = load_queries(opt->train_queries);
    std::vector<Query> eval_queries = load_queries(opt->eval_queries);
    Qrels qrels = load_qrels(opt->qrels);

    PipelineResult result =
        run_pipeline(variant, corpus, train_queries, eval_queries, qrels, cfg, opt->out_dir);
    for (const std::string& line : result.manifest) std::cout << line << '\n';
    std::cout << "artifacts: " << result.run_dir << '\n';
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"rankpipe: staged sparse/dense text retrieval with ensemble fusion"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  add_ingest(app);
  add_index(app);
  add_pretrain(app);
  add_stage1(app);
  add_train(app);
  add_mine(app);
  add_retrieve(app);
  add_fuse(app);
  add_gridsearch(app);
  add_eval(app);
  add_run_pipeline(app);

  try {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    args = apply_config_file(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11's vector parse pops from the back
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << std::endl;
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << std::endl;
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: runtime: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace rankpipe
