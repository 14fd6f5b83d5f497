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

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace rankpipe::testing {

// Reference evaluator kept deliberately naive and structurally different
// from the production metrics: prefixes are rescanned, discounts recomputed
// via natural logs, nothing is shared beyond the metric definitions.

inline double ref_recall(const std::vector<std::string>& ranking,
                         const std::set<std::string>& rel, size_t k) {
  size_t found = 0;
  for (const std::string& doc : rel) {
    for (size_t i = 0; i < ranking.size() && i < k; ++i) {
      if (ranking[i] == doc) {
        ++found;
        break;
      }
    }
  }
  return static_cast<double>(found) / static_cast<double>(rel.size());
}

inline double ref_mrr(const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                      size_t k) {
  for (size_t i = 0; i < ranking.size() && i < k; ++i) {
    if (rel.count(ranking[i])) return 1.0 / (i + 1.0);
  }
  return 0.0;
}

inline double ref_map(const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                      size_t k) {
  double sum = 0.0;
  for (size_t i = 0; i < ranking.size() && i < k; ++i) {
    if (!rel.count(ranking[i])) continue;
    size_t hits = 0;  // rescan the prefix
    for (size_t j = 0; j <= i; ++j) {
      if (rel.count(ranking[j])) ++hits;
    }
    sum += static_cast<double>(hits) / (i + 1.0);
  }
  return sum / static_cast<double>(std::min(rel.size(), k));
}

inline double ref_ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                       size_t k) {
  std::vector<double> gains;
  for (size_t i = 0; i < ranking.size() && i < k; ++i) {
    gains.push_back(rel.count(ranking[i]) ? 1.0 : 0.0);
  }
  std::vector<double> ideal(std::min(rel.size(), k), 1.0);
  auto dcg = [](const std::vector<double>& g) {
    double sum = 0.0;
    for (size_t i = 0; i < g.size(); ++i) sum += g[i] / (std::log(i + 2.0) / std::log(2.0));
    return sum;
  };
  double idcg = dcg(ideal);
  return idcg > 0.0 ? dcg(gains) / idcg : 0.0;
}

}  // namespace rankpipe::testing
