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
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rankpipe {

inline constexpr const char* kVersion = "0.1.0";

/// Runtime failure inside the library (bad file contents, numeric blow-up,
/// violated precondition). The CLI maps this to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller misuse at the tool boundary (missing file, bad flag combination).
/// The CLI maps this to exit code 2, distinct from runtime failures.
class UsageError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing and seeding
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable per-stage seed derivation. Each pipeline stage draws from its own
/// stream so that inserting or removing a later stage cannot shift the
/// randomness consumed by an earlier one.
inline uint64_t derive_seed(uint64_t base_seed, std::string_view tag) {
  return fnv1a64(tag) ^ (base_seed * 0x9e3779b97f4a7c15ULL + 0x165667b19e3779f9ULL);
}

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

/// Decodes the codepoint starting at byte offset `pos` and advances `pos`
/// past it. Invalid bytes are passed through one at a time as their own
/// codepoints so arbitrary input never throws.
uint32_t utf8_next(std::string_view text, size_t& pos);

void utf8_append(std::string& out, uint32_t codepoint);

std::vector<uint32_t> utf8_decode(std::string_view text);

bool is_unicode_space(uint32_t cp);
bool is_unicode_punct(uint32_t cp);

// ---------------------------------------------------------------------------
// Small string helpers
// ---------------------------------------------------------------------------

std::vector<std::string> split_whitespace(std::string_view line);
std::vector<std::string> split_char(std::string_view line, char sep);

/// Parses a non-negative integer field; throws Error mentioning `context`
/// (typically "<file>:<line>") when the field is not an integer.
long parse_long(std::string_view field, const std::string& context);

/// Formats a score exactly as run files store it: fixed, 6 decimal digits.
std::string format_score(double score);

// ---------------------------------------------------------------------------
// Deterministic parallelism
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Every item is
/// independent, so the result is bit-identical to the jobs=1 serial loop.
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn);

}  // namespace rankpipe
