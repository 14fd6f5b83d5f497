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
#include <string>
#include <unordered_map>
#include <vector>

#include "rankpipe/corpus.hpp"

namespace rankpipe {

using TokenId = int32_t;

enum class SchemeKind { whitespace_lower, char_ngram };

/// Tokenization is fixed per corpus and recorded in every downstream
/// artifact (vocabulary, index, encoder checkpoint); mixing schemes between
/// index time and query time is rejected at load.
struct TokenizerScheme {
  SchemeKind kind = SchemeKind::whitespace_lower;
  int ngram = 1;  // only meaningful for char_ngram

  static TokenizerScheme whitespace();
  static TokenizerScheme char_ngrams(int n);
  static TokenizerScheme parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const TokenizerScheme&) const = default;
};

/// Token table shared by the sparse index and the encoder.
/// Ids are dense; 0..2 are reserved (never produced by tokenizing raw text):
///   PAD=0, MASK=1, UNK=2.
/// Content ids start at 3, assigned by descending corpus frequency with
/// lexicographic tie-break, so the table depends only on the corpus multiset.
struct Vocabulary {
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr int32_t kNumSpecials = 3;

  TokenizerScheme scheme;
  std::vector<std::string> id_to_token;                   // [0..2] are markers
  std::unordered_map<std::string, TokenId> token_to_id;   // content tokens only

  int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }
  TokenId lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  uint64_t fingerprint() const;
};

/// whitespace_lower: split on unicode whitespace, lowercase (ASCII range),
/// strip leading/trailing punctuation. char_ngram(n): every overlapping
/// n-gram of the whitespace-stripped codepoint stream.
std::vector<std::string> tokenize(const std::string& text, const TokenizerScheme& scheme);

Vocabulary build_vocabulary(const std::vector<Document>& docs, const TokenizerScheme& scheme,
                            int min_count = 1);

/// Tokenize then map through the vocabulary; unknown tokens become UNK.
/// Never emits PAD or MASK.
std::vector<TokenId> encode_ids(const std::string& text, const Vocabulary& vocab);

/// One token per line in id order, after a header naming the scheme.
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

}  // namespace rankpipe
