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

#include "rankpipe/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace rankpipe {

WeightTriple WeightTriple::lattice_point(int64_t i, int64_t j, int64_t denominator) {
  if (denominator < 1 || i < 0 || j < 0 || i + j > denominator) {
    throw Error("weight triple: lattice point outside the simplex");
  }
  WeightTriple w;
  w.lattice = {i, j, denominator - i - j};
  w.lattice_denominator = denominator;
  w.alpha = static_cast<double>(i) / static_cast<double>(denominator);
  w.beta = static_cast<double>(j) / static_cast<double>(denominator);
  w.theta = static_cast<double>(denominator - i - j) / static_cast<double>(denominator);
  return w;
}

WeightTriple WeightTriple::of(double alpha, double beta, double theta) {
  WeightTriple w;
  w.alpha = alpha;
  w.beta = beta;
  w.theta = theta;
  w.validate();
  return w;
}

void WeightTriple::validate() const {
  if (exact()) {
    if (lattice[0] + lattice[1] + lattice[2] != lattice_denominator || lattice[0] < 0 ||
        lattice[1] < 0 || lattice[2] < 0) {
      throw Error("weight triple: lattice weights do not sum to 1");
    }
    return;
  }
  if (!(alpha >= 0.0 && beta >= 0.0 && theta >= 0.0)) {
    throw Error("weight triple: weights must be non-negative");
  }
  if (std::fabs(alpha + beta + theta - 1.0) > 1e-9) {
    throw Error("weight triple: weights must sum to 1 (within 1e-9)");
  }
}

RunList normalize_per_query(const RunList& run) {
  RunList out = run;
  if (out.entries.empty()) return out;
  double lo = out.entries.front().score;
  double hi = lo;
  for (const RunEntry& e : out.entries) {
    lo = std::min(lo, e.score);
    hi = std::max(hi, e.score);
  }
  if (hi == lo) {
    for (RunEntry& e : out.entries) e.score = 1.0;
  } else {
    for (RunEntry& e : out.entries) e.score = (e.score - lo) / (hi - lo);
  }
  return out;
}

RunList fuse(const RunList& run1, const RunList& run2, const RunList& run3,
             const WeightTriple& weights, int k) {
  weights.validate();
  if (k < 1) throw Error("fuse: k must be >= 1");
  if (run1.query_id != run2.query_id || run1.query_id != run3.query_id) {
    throw Error("fuse: runs must share a query id (got '" + run1.query_id + "', '" +
                run2.query_id + "', '" + run3.query_id + "')");
  }

  std::map<std::string, std::array<double, 3>> pool;
  auto absorb = [&pool](const RunList& run, int slot) {
    for (const RunEntry& e : run.entries) pool[e.doc_id][slot] = e.score;
  };
  absorb(run1, 0);
  absorb(run2, 1);
  absorb(run3, 2);

  RunList fused;
  fused.query_id = run1.query_id;
  fused.tag = "fusion";
  fused.entries.reserve(pool.size());
  for (const auto& [doc_id, s] : pool) {
    double score = weights.alpha * s[0] + weights.beta * s[1] + weights.theta * s[2];
    fused.entries.push_back(RunEntry{doc_id, score});
  }
  fused.sort_entries();
  if (fused.entries.size() > static_cast<size_t>(k)) fused.entries.resize(k);
  return fused;
}

std::vector<WeightTriple> enumerate_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error("enumerate_grid: step must be in (0, 1]");
  int64_t n = std::llround(1.0 / step);
  if (n < 1 || std::fabs(static_cast<double>(n) * step - 1.0) > 1e-9) {
    throw Error("enumerate_grid: step must divide 1 exactly");
  }
  std::vector<WeightTriple> grid;
  grid.reserve(static_cast<size_t>((n + 1) * (n + 2) / 2));
  for (int64_t i = 0; i <= n; ++i) {
    for (int64_t j = 0; j <= n - i; ++j) {
      grid.push_back(WeightTriple::lattice_point(i, j, n));
    }
  }
  return grid;
}

namespace {

/// Per-query aligned triples, keyed by query id.
struct AlignedRuns {
  std::vector<std::array<RunList, 3>> triples;
};

AlignedRuns align_and_normalize(const std::vector<RunList>& runs1,
                                const std::vector<RunList>& runs2,
                                const std::vector<RunList>& runs3) {
  auto index_by_query = [](const std::vector<RunList>& runs) {
    std::map<std::string, const RunList*> by_query;
    for (const RunList& run : runs) {
      if (!by_query.emplace(run.query_id, &run).second) {
        throw Error("grid search: duplicate run for query '" + run.query_id + "'");
      }
    }
    return by_query;
  };
  auto m1 = index_by_query(runs1);
  auto m2 = index_by_query(runs2);
  auto m3 = index_by_query(runs3);
  if (m1.size() != m2.size() || m1.size() != m3.size()) {
    throw Error("grid search: run sets cover different numbers of queries");
  }
  AlignedRuns aligned;
  for (const auto& [query_id, run1] : m1) {
    auto it2 = m2.find(query_id);
    auto it3 = m3.find(query_id);
    if (it2 == m2.end() || it3 == m3.end()) {
      throw Error("grid search: query '" + query_id + "' missing from one of the run sets");
    }
    aligned.triples.push_back({normalize_per_query(*run1), normalize_per_query(*it2->second),
                               normalize_per_query(*it3->second)});
  }
  return aligned;
}

}  // namespace

GridResult grid_search(const std::vector<RunList>& runs1, const std::vector<RunList>& runs2,
                       const std::vector<RunList>& runs3, const Qrels& qrels,
                       const std::string& objective, double step, int jobs) {
  // Fail fast on an unknown objective before doing any work.
  evaluate_single({}, qrels, objective);

  AlignedRuns aligned = align_and_normalize(runs1, runs2, runs3);
  std::vector<WeightTriple> grid = enumerate_grid(step);

  GridResult result;
  result.objective_name = objective;
  result.table.resize(grid.size());

  parallel_for(grid.size(), jobs, [&](size_t g) {
    const WeightTriple& w = grid[g];
    std::vector<RunList> fused;
    fused.reserve(aligned.triples.size());
    for (const auto& triple : aligned.triples) {
      size_t pool_bound = triple[0].entries.size() + triple[1].entries.size() +
                          triple[2].entries.size() + 1;
      fused.push_back(fuse(triple[0], triple[1], triple[2], w, static_cast<int>(pool_bound)));
    }
    result.table[g] = {w, evaluate_single(fused, qrels, objective)};
  });

  size_t best_index = 0;
  for (size_t g = 1; g < result.table.size(); ++g) {
    if (result.table[g].second > result.table[best_index].second) best_index = g;
  }
  result.best = result.table[best_index].first;
  result.best_objective = result.table[best_index].second;
  return result;
}

void write_heatmap_csv(const GridResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw Error("cannot write file: " + path);
  out << "alpha,beta,theta,objective\n";
  for (const auto& [w, value] : result.table) {
    out << format_score(w.alpha) << ',' << format_score(w.beta) << ',' << format_score(w.theta)
        << ',' << format_score(value) << '\n';
  }
  if (!out.good()) throw Error("failed while writing " + path);
}

std::string format_grid_summary(const GridResult& result) {
  std::vector<std::pair<WeightTriple, double>> ranked = result.table;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::ostringstream out;
  out << "grid points evaluated: " << result.table.size() << '\n';
  out << "objective: " << result.objective_name << '\n';
  out << "best: alpha=" << format_score(result.best.alpha)
      << " beta=" << format_score(result.best.beta)
      << " theta=" << format_score(result.best.theta) << "  "
      << format_score(result.best_objective) << '\n';
  out << "top 10:\n";
  size_t limit = std::min<size_t>(10, ranked.size());
  for (size_t i = 0; i < limit; ++i) {
    out << "  " << format_score(ranked[i].first.alpha) << ' '
        << format_score(ranked[i].first.beta) << ' ' << format_score(ranked[i].first.theta)
        << "  " << format_score(ranked[i].second) << '\n';
  }
  return out.str();
}

}  // namespace rankpipe
