#include "apf/metrics.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace apf {

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValidationError("scores and labels differ in length");
  Counts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++c.pos;
    } else if (labels[i] == 0) {
      ++c.neg;
    } else {
      throw ValidationError("metric labels must be 0 or 1 (index " + std::to_string(i) + ")");
    }
    if (!std::isfinite(scores[i]))
      throw NumericError("non-finite score at index " + std::to_string(i));
  }
  return c;
}

// Indices by descending score; equal scores keep input order.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_inputs(scores, labels);
  if (c.pos == 0 || c.neg == 0) throw ValidationError("AUROC needs both classes");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(c.pos);
  const double nn = static_cast<double>(c.neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_inputs(scores, labels);
  if (c.pos == 0) throw ValidationError("AUPRC needs at least one positive");
  const auto idx = descending_order(scores);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (labels[idx[r]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(c.pos);
}

double rec_at_k(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_inputs(scores, labels);
  if (c.pos == 0) throw ValidationError("Rec@K needs at least one positive");
  const auto idx = descending_order(scores);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < c.pos; ++r)
    if (labels[idx[r]] == 1) ++hits;
  return static_cast<double>(hits) / static_cast<double>(c.pos);
}

MetricTriple all_metrics(std::span<const double> scores, std::span<const int> labels) {
  return MetricTriple{auprc(scores, labels), auroc(scores, labels), rec_at_k(scores, labels)};
}

QuartileTable quartile_analysis(std::span<const double> scores, std::span<const int> labels,
                                std::span<const std::optional<double>> homophily) {
  const Counts c = check_inputs(scores, labels);
  if (homophily.size() != scores.size())
    throw ValidationError("homophily vector length does not match scores");
  if (c.neg == 0) throw ValidationError("quartile analysis needs normal nodes");

  QuartileTable table;
  table.normals = c.neg;
  std::vector<std::size_t> anomalies, normals;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) {
      normals.push_back(i);
    } else if (homophily[i]) {
      anomalies.push_back(i);
    } else {
      ++table.skipped_anomalies;
    }
  }
  if (anomalies.empty()) throw ValidationError("no anomalies with defined homophily");
  std::stable_sort(anomalies.begin(), anomalies.end(), [&](std::size_t a, std::size_t b) {
    return *homophily[a] > *homophily[b];
  });

  std::size_t groups = 4;
  if (anomalies.size() < 4) {
    groups = 1;
    table.warning = "only " + std::to_string(anomalies.size()) +
                    " anomalies with defined homophily; reporting a single group";
  }

  std::vector<double> sub_scores;
  std::vector<int> sub_labels;
  for (std::size_t q = 0; q < groups; ++q) {
    const std::size_t begin = q * anomalies.size() / groups;
    const std::size_t end = (q + 1) * anomalies.size() / groups;
    sub_scores.clear();
    sub_labels.clear();
    for (std::size_t t = begin; t < end; ++t) {
      sub_scores.push_back(scores[anomalies[t]]);
      sub_labels.push_back(1);
    }
    for (std::size_t i : normals) {
      sub_scores.push_back(scores[i]);
      sub_labels.push_back(0);
    }
    QuartileRow row;
    row.name = groups == 1 ? "all" : "Q" + std::to_string(q + 1);
    row.anomalies = end - begin;
    row.h_max = *homophily[anomalies[begin]];
    row.h_min = *homophily[anomalies[end - 1]];
    row.metrics = all_metrics(sub_scores, sub_labels);
    table.rows.push_back(row);
  }
  const MetricTriple q1 = table.rows.front().metrics;
  for (auto& row : table.rows) {
    row.diff_from_q1 = MetricTriple{q1.auprc - row.metrics.auprc, q1.auroc - row.metrics.auroc,
                                    q1.rec_at_k - row.metrics.rec_at_k};
  }
  return table;
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels) {
  EvalReport r;
  const MetricTriple m = all_metrics(scores, labels);
  r.auprc = m.auprc;
  r.auroc = m.auroc;
  r.rec_at_k = m.rec_at_k;
  r.k_used = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return r;
}

}  // namespace apf
