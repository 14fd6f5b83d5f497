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

#include "rankpipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rankpipe {

namespace {

size_t cutoff(const RunList& run, int k) {
  return std::min(run.entries.size(), static_cast<size_t>(k));
}

struct ParsedMetric {
  enum class Family { recall, mrr, map, ndcg } family;
  int k;
};

ParsedMetric parse_metric_name(const std::string& name) {
  size_t at = name.find('@');
  if (at == std::string::npos) throw Error("unknown metric '" + name + "'");
  std::string family = name.substr(0, at);
  int k = static_cast<int>(parse_long(name.substr(at + 1), "metric '" + name + "'"));
  if (k < 1) throw Error("metric '" + name + "': k must be >= 1");
  if (family == "recall") return {ParsedMetric::Family::recall, k};
  if (family == "mrr") return {ParsedMetric::Family::mrr, k};
  if (family == "map") return {ParsedMetric::Family::map, k};
  if (family == "ndcg") return {ParsedMetric::Family::ndcg, k};
  throw Error("unknown metric '" + name + "'");
}

std::map<std::string, int> grades_for_query(const Qrels& qrels, const std::string& query_id) {
  std::map<std::string, int> grades;
  auto it = qrels.judgments().find(query_id);
  if (it != qrels.judgments().end()) grades = it->second;
  return grades;
}

}  // namespace

double recall_at_k(const RunList& run, const std::set<std::string>& relevant, int k,
                   RecallMode mode) {
  if (relevant.empty()) throw Error("recall_at_k: empty relevant set");
  if (k < 1) throw Error("recall_at_k: k must be >= 1");
  size_t hits = 0;
  for (size_t i = 0; i < cutoff(run, k); ++i) {
    if (relevant.count(run.entries[i].doc_id)) ++hits;
  }
  if (mode == RecallMode::hit) return hits > 0 ? 1.0 : 0.0;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double mrr_at_k(const RunList& run, const std::set<std::string>& relevant, int k) {
  if (relevant.empty()) throw Error("mrr_at_k: empty relevant set");
  for (size_t i = 0; i < cutoff(run, k); ++i) {
    if (relevant.count(run.entries[i].doc_id)) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double map_at_k(const RunList& run, const std::set<std::string>& relevant, int k) {
  if (relevant.empty()) throw Error("map_at_k: empty relevant set");
  size_t hits = 0;
  double precision_sum = 0.0;
  for (size_t i = 0; i < cutoff(run, k); ++i) {
    if (relevant.count(run.entries[i].doc_id)) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  size_t denom = std::min(relevant.size(), static_cast<size_t>(k));
  return precision_sum / static_cast<double>(denom);
}

double ndcg_at_k(const RunList& run, const std::map<std::string, int>& grades, int k) {
  if (k < 1) throw Error("ndcg_at_k: k must be >= 1");
  size_t n_relevant = 0;
  for (const auto& [doc, grade] : grades) {
    if (grade > 0) ++n_relevant;
  }
  if (n_relevant == 0) return 0.0;

  double dcg = 0.0;
  for (size_t i = 0; i < cutoff(run, k); ++i) {
    auto it = grades.find(run.entries[i].doc_id);
    if (it != grades.end() && it->second > 0) {
      dcg += 1.0 / std::log2(static_cast<double>(i + 2));
    }
  }
  double idcg = 0.0;
  size_t ideal = std::min(n_relevant, static_cast<size_t>(k));
  for (size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i + 2));
  return dcg / idcg;
}

MetricReport evaluate(const std::vector<RunList>& runs, const Qrels& qrels,
                      const std::vector<int>& ks, RecallMode mode) {
  std::vector<int> sorted_ks = ks;
  std::sort(sorted_ks.begin(), sorted_ks.end());
  sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()), sorted_ks.end());

  MetricReport report;
  for (int k : sorted_ks) report.metric_names.push_back("recall@" + std::to_string(k));
  report.metric_names.push_back("mrr@10");
  report.metric_names.push_back("map@10");
  report.metric_names.push_back("ndcg@10");

  std::map<std::string, double> sums;
  for (const RunList& run : runs) {
    std::map<std::string, int> grades = grades_for_query(qrels, run.query_id);
    std::set<std::string> relevant;
    for (const auto& [doc, grade] : grades) {
      if (grade > 0) relevant.insert(doc);
    }
    if (relevant.empty()) {
      ++report.excluded_count;
      continue;
    }
    PerQueryMetrics pq;
    pq.query_id = run.query_id;
    for (int k : sorted_ks) {
      pq.values["recall@" + std::to_string(k)] = recall_at_k(run, relevant, k, mode);
    }
    pq.values["mrr@10"] = mrr_at_k(run, relevant, 10);
    pq.values["map@10"] = map_at_k(run, relevant, 10);
    pq.values["ndcg@10"] = ndcg_at_k(run, grades, 10);
    for (const auto& [name, value] : pq.values) sums[name] += value;
    report.per_query.push_back(std::move(pq));
    ++report.query_count;
  }
  for (const std::string& name : report.metric_names) {
    report.means[name] =
        report.query_count > 0 ? sums[name] / static_cast<double>(report.query_count) : 0.0;
  }
  return report;
}

double evaluate_single(const std::vector<RunList>& runs, const Qrels& qrels,
                       const std::string& metric_name) {
  ParsedMetric metric = parse_metric_name(metric_name);
  double sum = 0.0;
  int counted = 0;
  for (const RunList& run : runs) {
    std::map<std::string, int> grades = grades_for_query(qrels, run.query_id);
    std::set<std::string> relevant;
    for (const auto& [doc, grade] : grades) {
      if (grade > 0) relevant.insert(doc);
    }
    if (relevant.empty()) continue;
    double value = 0.0;
    switch (metric.family) {
      case ParsedMetric::Family::recall:
        value = recall_at_k(run, relevant, metric.k);
        break;
      case ParsedMetric::Family::mrr:
        value = mrr_at_k(run, relevant, metric.k);
        break;
      case ParsedMetric::Family::map:
        value = map_at_k(run, relevant, metric.k);
        break;
      case ParsedMetric::Family::ndcg:
        value = ndcg_at_k(run, grades, metric.k);
        break;
    }
    sum += value;
    ++counted;
  }
  return counted > 0 ? sum / counted : 0.0;
}

std::string format_report_text(const MetricReport& report) {
  std::ostringstream out;
  size_t name_width = 6;
  for (const std::string& name : report.metric_names) {
    name_width = std::max(name_width, name.size());
  }
  out << "queries scored: " << report.query_count
      << "   excluded (no relevant docs): " << report.excluded_count << '\n';
  for (const std::string& name : report.metric_names) {
    out << name << std::string(name_width - name.size(), ' ') << "  "
        << format_score(report.means.at(name)) << '\n';
  }
  return out.str();
}

std::string format_report_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const std::string& name : report.metric_names) {
    out << name << ',' << format_score(report.means.at(name)) << '\n';
  }
  out << "query,metric,value\n";
  for (const PerQueryMetrics& pq : report.per_query) {
    for (const std::string& name : report.metric_names) {
      out << pq.query_id << ',' << name << ',' << format_score(pq.values.at(name)) << '\n';
    }
  }
  return out.str();
}

}  // namespace rankpipe
