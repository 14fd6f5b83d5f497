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

#include "rankpipe/tokenizer.hpp"
#include "support/temp_dir.hpp"

using namespace rankpipe;
using rankpipe::testing::TempDir;

TEST_CASE("whitespace_lower splits, lowercases and strips edge punctuation") {
  auto tokens = tokenize("Hello, World", TokenizerScheme::whitespace());
  CHECK(tokens == std::vector<std::string>{"hello", "world"});

  CHECK(tokenize("  (Mixed-CASE)  don't ", TokenizerScheme::whitespace()) ==
        std::vector<std::string>{"mixed-case", "don't"});
  CHECK(tokenize("　 ", TokenizerScheme::whitespace()).empty());  // unicode spaces only
}

TEST_CASE("char_ngram emits every overlapping window") {
  CHECK(tokenize("abcd", TokenizerScheme::char_ngrams(2)) ==
        std::vector<std::string>{"ab", "bc", "cd"});
  CHECK(tokenize("a b cd", TokenizerScheme::char_ngrams(2)) ==
        std::vector<std::string>{"ab", "bc", "cd"});  // whitespace stripped first
  CHECK(tokenize("abc", TokenizerScheme::char_ngrams(1)) ==
        std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("a", TokenizerScheme::char_ngrams(2)).empty());
}

TEST_CASE("char_ngram works on multibyte codepoints") {
  // Japanese text: bigrams over codepoints, not bytes.
  auto tokens = tokenize("日本語処理", TokenizerScheme::char_ngrams(2));
  CHECK(tokens == std::vector<std::string>{"日本", "本語", "語処", "処理"});
}

TEST_CASE("tokenizing empty text yields the empty sequence") {
  CHECK(tokenize("", TokenizerScheme::whitespace()).empty());
  CHECK(tokenize("", TokenizerScheme::char_ngrams(2)).empty());
}

TEST_CASE("scheme strings parse back to themselves") {
  for (const auto& scheme :
       {TokenizerScheme::whitespace(), TokenizerScheme::char_ngrams(2),
        TokenizerScheme::char_ngrams(7)}) {
    CHECK(TokenizerScheme::parse(scheme.to_string()) == scheme);
  }
  CHECK_THROWS_AS(TokenizerScheme::parse("bigrams"), Error);
}

TEST_CASE("build_vocabulary orders content ids by frequency then token") {
  std::vector<Document> docs = {{"d1", "a a b"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  CHECK(vocab.size() == 5);  // 3 specials + a + b
  CHECK(vocab.lookup("a") == 3);
  CHECK(vocab.lookup("b") == 4);

  Vocabulary pruned = build_vocabulary(docs, TokenizerScheme::whitespace(), 2);
  CHECK(pruned.size() == 4);
  CHECK(pruned.lookup("a") == 3);
  CHECK(pruned.lookup("b") == Vocabulary::kUnk);
}

TEST_CASE("build_vocabulary of an empty corpus is exactly the specials") {
  Vocabulary vocab = build_vocabulary({}, TokenizerScheme::whitespace(), 1);
  CHECK(vocab.size() == Vocabulary::kNumSpecials);
}

TEST_CASE("frequency ties break lexicographically") {
  std::vector<Document> docs = {{"d1", "zebra apple zebra apple mango"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  CHECK(vocab.lookup("apple") == 3);  // ties: apple < zebra
  CHECK(vocab.lookup("zebra") == 4);
  CHECK(vocab.lookup("mango") == 5);
}

TEST_CASE("encode_ids maps unknowns to UNK and never emits PAD or MASK") {
  std::vector<Document> docs = {{"d1", "alpha beta gamma alpha"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  std::vector<TokenId> ids = encode_ids("alpha unseen beta", vocab);
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == vocab.lookup("alpha"));
  CHECK(ids[1] == Vocabulary::kUnk);
  CHECK(ids[2] == vocab.lookup("beta"));
  CHECK(encode_ids("", vocab).empty());

  // Raw text that spells the marker strings still cannot produce specials.
  for (TokenId id : encode_ids("<pad> <mask> <unk>", vocab)) {
    CHECK(id != Vocabulary::kPad);
    CHECK(id != Vocabulary::kMask);
  }
}

TEST_CASE("property: vocabulary depends only on the corpus multiset") {
  std::mt19937_64 rng(7);
  std::vector<Document> docs;
  for (int d = 0; d < 30; ++d) {
    std::string text;
    int len = 1 + static_cast<int>(rng() % 10);
    for (int t = 0; t < len; ++t) {
      text += "w" + std::to_string(rng() % 12) + " ";
    }
    docs.push_back({"d" + std::to_string(d), text});
  }
  Vocabulary base = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(docs.begin(), docs.end(), rng);
    Vocabulary shuffled = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
    CHECK(shuffled.id_to_token == base.id_to_token);
    CHECK(shuffled.fingerprint() == base.fingerprint());
  }
}

TEST_CASE("property: identical inputs encode identically") {
  std::vector<Document> docs = {{"d1", "x y z x"}, {"d2", "y y w"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::whitespace(), 1);
  for (const char* text : {"x w q", "", "z z z", "y x w unknown"}) {
    CHECK(encode_ids(text, vocab) == encode_ids(text, vocab));
  }
}

TEST_CASE("vocabulary serialization round-trips tokens, ids and scheme") {
  std::vector<Document> docs = {{"d1", "foo bar baz foo"}};
  Vocabulary vocab = build_vocabulary(docs, TokenizerScheme::char_ngrams(2), 1);
  TempDir tmp;
  std::string path = tmp.file("vocab.txt");
  save_vocabulary(vocab, path);
  Vocabulary loaded = load_vocabulary(path);
  CHECK(loaded.scheme == vocab.scheme);
  CHECK(loaded.id_to_token == vocab.id_to_token);
  CHECK(loaded.fingerprint() == vocab.fingerprint());
  CHECK(loaded.lookup("fo") == vocab.lookup("fo"));
}

TEST_CASE("load_vocabulary rejects files without the reserved markers") {
  TempDir tmp;
  std::string path = tmp.write("bad.txt", "rankpipe-vocab v1 scheme=whitespace_lower\nx\ny\nz\n");
  CHECK_THROWS_AS(load_vocabulary(path), Error);
}
