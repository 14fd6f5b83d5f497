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

#include "rankpipe/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace rankpipe {

namespace {

const char* kPadMarker = "<pad>";
const char* kMaskMarker = "<mask>";
const char* kUnkMarker = "<unk>";

std::vector<std::string> tokenize_whitespace_lower(const std::string& text) {
  std::vector<std::string> tokens;
  std::vector<uint32_t> word;
  auto flush = [&]() {
    if (word.empty()) return;
    size_t begin = 0;
    size_t end = word.size();
    while (begin < end && is_unicode_punct(word[begin])) ++begin;
    while (end > begin && is_unicode_punct(word[end - 1])) --end;
    if (begin < end) {
      std::string token;
      for (size_t i = begin; i < end; ++i) utf8_append(token, word[i]);
      tokens.push_back(std::move(token));
    }
    word.clear();
  };
  size_t pos = 0;
  while (pos < text.size()) {
    uint32_t cp = utf8_next(text, pos);
    if (is_unicode_space(cp)) {
      flush();
      continue;
    }
    if (cp < 0x80) cp = static_cast<uint32_t>(std::tolower(static_cast<int>(cp)));
    word.push_back(cp);
  }
  flush();
  return tokens;
}

std::vector<std::string> tokenize_char_ngram(const std::string& text, int n) {
  std::vector<uint32_t> stream;
  size_t pos = 0;
  while (pos < text.size()) {
    uint32_t cp = utf8_next(text, pos);
    if (!is_unicode_space(cp)) stream.push_back(cp);
  }
  std::vector<std::string> tokens;
  if (stream.size() < static_cast<size_t>(n)) return tokens;
  tokens.reserve(stream.size() - n + 1);
  for (size_t i = 0; i + n <= stream.size(); ++i) {
    std::string gram;
    for (int j = 0; j < n; ++j) utf8_append(gram, stream[i + j]);
    tokens.push_back(std::move(gram));
  }
  return tokens;
}

}  // namespace

TokenizerScheme TokenizerScheme::whitespace() { return {SchemeKind::whitespace_lower, 1}; }

TokenizerScheme TokenizerScheme::char_ngrams(int n) {
  if (n < 1) throw Error("char_ngram requires n >= 1");
  return {SchemeKind::char_ngram, n};
}

TokenizerScheme TokenizerScheme::parse(const std::string& text) {
  if (text == "whitespace_lower") return whitespace();
  if (text.rfind("char_ngram(", 0) == 0 && text.back() == ')') {
    std::string inner = text.substr(11, text.size() - 12);
    return char_ngrams(static_cast<int>(parse_long(inner, "tokenizer scheme")));
  }
  throw Error("unknown tokenizer scheme '" + text + "'");
}

std::string TokenizerScheme::to_string() const {
  if (kind == SchemeKind::whitespace_lower) return "whitespace_lower";
  return "char_ngram(" + std::to_string(ngram) + ")";
}

uint64_t Vocabulary::fingerprint() const {
  uint64_t h = fnv1a64(scheme.to_string());
  for (const std::string& token : id_to_token) {
    h = fnv1a64(token, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

std::vector<std::string> tokenize(const std::string& text, const TokenizerScheme& scheme) {
  if (scheme.kind == SchemeKind::whitespace_lower) return tokenize_whitespace_lower(text);
  return tokenize_char_ngram(text, scheme.ngram);
}

Vocabulary build_vocabulary(const std::vector<Document>& docs, const TokenizerScheme& scheme,
                            int min_count) {
  if (min_count < 1) throw Error("build_vocabulary: min_count must be >= 1");
  std::map<std::string, int64_t> counts;
  for (const Document& doc : docs) {
    for (std::string& token : tokenize(doc.text, scheme)) counts[std::move(token)] += 1;
  }

  std::vector<std::pair<std::string, int64_t>> kept;
  kept.reserve(counts.size());
  for (auto& [token, count] : counts) {
    if (count >= min_count) kept.emplace_back(token, count);
  }
  // Descending frequency; the map already gave us lexicographic order for ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  vocab.scheme = scheme;
  vocab.id_to_token = {kPadMarker, kMaskMarker, kUnkMarker};
  vocab.id_to_token.reserve(kept.size() + Vocabulary::kNumSpecials);
  for (auto& [token, count] : kept) {
    vocab.token_to_id.emplace(token, static_cast<TokenId>(vocab.id_to_token.size()));
    vocab.id_to_token.push_back(token);
  }
  return vocab;
}

std::vector<TokenId> encode_ids(const std::string& text, const Vocabulary& vocab) {
  std::vector<std::string> tokens = tokenize(text, vocab.scheme);
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const std::string& token : tokens) ids.push_back(vocab.lookup(token));
  return ids;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  out << "rankpipe-vocab v1 scheme=" << vocab.scheme.to_string() << '\n';
  for (const std::string& token : vocab.id_to_token) out << token << '\n';
  if (!out.good()) throw Error("failed while writing " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw Error("cannot open file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw Error(path + ": empty vocabulary file");
  const std::string prefix = "rankpipe-vocab v1 scheme=";
  if (header.rfind(prefix, 0) != 0) throw Error(path + ": bad vocabulary header");

  Vocabulary vocab;
  vocab.scheme = TokenizerScheme::parse(header.substr(prefix.size()));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.id_to_token.push_back(line);
  }
  if (vocab.size() < Vocabulary::kNumSpecials) {
    throw Error(path + ": vocabulary missing the reserved special tokens");
  }
  if (vocab.id_to_token[0] != kPadMarker || vocab.id_to_token[1] != kMaskMarker ||
      vocab.id_to_token[2] != kUnkMarker) {
    throw Error(path + ": reserved token markers out of place");
  }
  for (int32_t id = Vocabulary::kNumSpecials; id < vocab.size(); ++id) {
    vocab.token_to_id.emplace(vocab.id_to_token[id], id);
  }
  return vocab;
}

}  // namespace rankpipe
