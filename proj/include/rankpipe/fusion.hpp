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

#include <array>
#include <string>
#include <vector>

#include "rankpipe/corpus.hpp"
#include "rankpipe/metrics.hpp"

namespace rankpipe {

/// Convex weights (alpha, beta, theta) for three-model score fusion.
/// Grid-constructed triples carry an exact lattice representation
/// (numerators over a common denominator) so the sum-to-one invariant holds
/// in integer arithmetic; free-form triples are validated to 1e-9.
struct WeightTriple {
  double alpha = 0.0;
  double beta = 0.0;
  double theta = 0.0;
  std::array<int64_t, 3> lattice{0, 0, 0};
  int64_t lattice_denominator = 0;  // 0 when not lattice-backed

  bool exact() const { return lattice_denominator > 0; }
  static WeightTriple lattice_point(int64_t i, int64_t j, int64_t denominator);
  static WeightTriple of(double alpha, double beta, double theta);
  /// Throws Error when the convex-combination invariant is violated.
  void validate() const;
};

/// Min–max normalization of scores to [0, 1] within the query. Lists whose
/// scores are all equal (including single-entry lists) map every score to
/// 1.0. Ordering is preserved.
RunList normalize_per_query(const RunList& run);

/// Weighted union fusion of three normalized runs for the same query:
/// Score = alpha*s1 + beta*s2 + theta*s3, a model contributing 0 for
/// documents it did not return. Top-k with the corpus tie-break.
RunList fuse(const RunList& run1, const RunList& run2, const RunList& run3,
             const WeightTriple& weights, int k);

/// All simplex lattice points at the given step: alpha in {0, step, .., 1},
/// beta in {0, step, .., 1-alpha}, theta = 1-alpha-beta. Deterministic order
/// (alpha ascending, then beta). The step must divide 1 exactly.
std::vector<WeightTriple> enumerate_grid(double step = 0.05);

struct GridResult {
  std::vector<std::pair<WeightTriple, double>> table;  // full grid, grid order
  WeightTriple best;
  double best_objective = 0.0;
  std::string objective_name;
};

/// Evaluates fuse + objective for every grid triple over the tuning queries.
/// Inputs are normalized per query up front. Ties at the optimum resolve to
/// the lexicographically smallest (alpha, beta). The three run sets must
/// cover the same query ids.
GridResult grid_search(const std::vector<RunList>& runs1, const std::vector<RunList>& runs2,
                       const std::vector<RunList>& runs3, const Qrels& qrels,
                       const std::string& objective = "recall@3", double step = 0.05,
                       int jobs = 1);

/// CSV with header "alpha,beta,theta,objective" and one data row per triple.
void write_heatmap_csv(const GridResult& result, const std::string& path);

/// Human-readable summary: best triple plus the top 10 of the grid.
std::string format_grid_summary(const GridResult& result);

}  // namespace rankpipe
