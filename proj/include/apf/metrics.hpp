#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apf {

// Labels are 1 for anomalies (positives) and 0 for normals. Higher scores
// mean "more anomalous". Ties in ranked lists are broken by position in the
// input, so results never depend on the sort implementation.

/// P(score_pos > score_neg) + P(tie)/2 via average ranks.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Average precision over the descending ranking.
double auprc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of positives within the top K, K = number of positives.
double rec_at_k(std::span<const double> scores, std::span<const int> labels);

struct MetricTriple {
  double auprc = 0.0;
  double auroc = 0.0;
  double rec_at_k = 0.0;
};

MetricTriple all_metrics(std::span<const double> scores, std::span<const int> labels);

struct QuartileRow {
  std::string name;  // "Q1".."Q4", or "all" in the fallback
  std::size_t anomalies = 0;
  double h_max = 0.0;
  double h_min = 0.0;
  MetricTriple metrics;
  MetricTriple diff_from_q1;  // Q1 minus this row
};

struct QuartileTable {
  std::vector<QuartileRow> rows;
  std::size_t normals = 0;
  std::size_t skipped_anomalies = 0;  // anomalies with undefined homophily
  std::optional<std::string> warning;
};

/// Anomalies sorted by homophily (descending, ties by position) and split by
/// index into four groups whose sizes differ by at most one; each group is
/// scored against every normal. Fewer than four usable anomalies gives a
/// single "all" row and a warning.
QuartileTable quartile_analysis(std::span<const double> scores, std::span<const int> labels,
                                std::span<const std::optional<double>> homophily);

struct EvalReport {
  double auprc = 0.0;
  double auroc = 0.0;
  double rec_at_k = 0.0;
  std::size_t k_used = 0;
  std::optional<QuartileTable> quartiles;
  std::string split_id;
  std::uint64_t seed = 0;
};

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels);

}  // namespace apf
