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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "rankpipe/corpus.hpp"

namespace rankpipe {

/// How Recall@k averages: per-query fraction of relevant found (standard),
/// or hit rate (1 if any relevant doc appears in the top k).
enum class RecallMode { fraction, hit };

/// |top-k ∩ relevant| / |relevant|. Requires a non-empty relevant set;
/// queries without one are excluded upstream.
double recall_at_k(const RunList& run, const std::set<std::string>& relevant, int k,
                   RecallMode mode = RecallMode::fraction);

/// 1 / rank of the first relevant document within the top k, else 0.
double mrr_at_k(const RunList& run, const std::set<std::string>& relevant, int k);

/// Cut-off MAP: (1/min(|relevant|, k)) * sum of precision@i over relevant
/// ranks i <= k.
double map_at_k(const RunList& run, const std::set<std::string>& relevant, int k);

/// Binary-gain nDCG with log2(i+1) discount (trec_eval convention).
/// Returns 0 when the query has no relevant documents (IDCG = 0).
double ndcg_at_k(const RunList& run, const std::map<std::string, int>& grades, int k);

struct PerQueryMetrics {
  std::string query_id;
  std::map<std::string, double> values;
};

struct MetricReport {
  std::vector<std::string> metric_names;        // display order
  std::map<std::string, double> means;          // arithmetic mean over scored queries
  std::vector<PerQueryMetrics> per_query;
  int query_count = 0;     // queries contributing to the means
  int excluded_count = 0;  // queries with no relevant docs in the qrels
};

/// Computes recall@k for every k in `ks` plus MRR@10, MAP@10 and nDCG@10.
/// Queries with no relevant judgments are excluded from every mean and
/// counted instead.
MetricReport evaluate(const std::vector<RunList>& runs, const Qrels& qrels,
                      const std::vector<int>& ks, RecallMode mode = RecallMode::fraction);

/// A single named metric, "recall@3" style. Used as the grid-search
/// objective. Throws Error for unknown names.
double evaluate_single(const std::vector<RunList>& runs, const Qrels& qrels,
                       const std::string& metric_name);

std::string format_report_text(const MetricReport& report);
std::string format_report_csv(const MetricReport& report);

}  // namespace rankpipe
