#pragma once

#include "apf/graph.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace apf {

/// Degree-corrected two-class block model where every node is either
/// homophilic (rates p1 intra / q1 inter) or heterophilic (p2 / q2).
struct AsbmSpec {
  std::size_t n_a = 200;
  std::size_t n_n = 1800;
  Vector mu;  // anomaly feature mean
  Vector nu;  // normal feature mean
  double p1 = 0.05, q1 = 0.01;
  double p2 = 0.01, q2 = 0.05;
  double theta_min = 0.8, theta_max = 1.2;
  double frac_heterophilic = 0.3;
  std::uint64_t seed = 0;

  std::size_t num_nodes() const { return n_a + n_n; }
  double pi_a() const;
  double pi_n() const;
  /// Throws ValidationError when an invariant does not hold.
  void validate() const;

  /// n = n_a + n_n nodes with dimension d, ||mu - nu|| = distance and
  /// mu = -nu along the first axis; the other fields keep their defaults.
  static AsbmSpec reference(std::size_t n, std::size_t d, double anomaly_fraction,
                            double distance, std::uint64_t seed);
};

struct AsbmInstance {
  SparseGraph graph;
  Matrix x;
  LabelVector labels;              // 1 anomaly, 0 normal
  std::vector<bool> heterophilic;  // pattern per node
  Vector theta;
};

/// Labels and patterns are assigned to shuffled node ids; features are drawn
/// from N(mean, I/d). Pair (i, j) links with probability
/// theta_i theta_j (B_i(y_i, y_j) + B_j(y_j, y_i)) / 2.
AsbmInstance generate_asbm(const AsbmSpec& spec);

/// +(S X)_i on homophilic nodes and -(S X)_i on heterophilic ones, S = D^-1 A.
Matrix oracle_filter(const SparseGraph& g, const Matrix& x, const std::vector<bool>& heterophilic);

/// S X for every node.
Matrix uniform_lowpass(const SparseGraph& g, const Matrix& x);

struct SeparatorParams {
  Vector w_star;
  double b_star = 0.0;
  double radius = 1.0;
  double tau_pi = 0.0;
};

/// Direction R (nu - mu)/||mu - nu|| with the prior-corrected midpoint bias.
/// A positive value <x, w*> + b* predicts "normal".
SeparatorParams build_separator(const AsbmSpec& spec, double radius = 1.0);

/// min over the four class/pattern connectivities pi_a p + pi_n q etc.
double kappa_eff(const AsbmSpec& spec);

/// Cells are indexed [anomaly-homophilic, anomaly-heterophilic,
/// normal-homophilic, normal-heterophilic].
struct CellStats {
  std::size_t count = 0;
  double accuracy = 0.0;
  double mean_value = 0.0;  // mean of <x, w*> + b*
};
inline constexpr std::array<const char*, 4> kCellNames = {
    "anomaly/homophilic", "anomaly/heterophilic", "normal/homophilic", "normal/heterophilic"};

struct FilterOutcome {
  double accuracy = 0.0;
  double best_threshold_accuracy = 0.0;  // best bias along w*, diagnostic
  double heterophilic_accuracy = 0.0;    // both classes, heterophilic nodes
  std::array<CellStats, 4> cells;
};

struct TrialResult {
  std::uint64_t seed = 0;
  FilterOutcome adaptive;
  FilterOutcome lowpass;
};

struct SeparabilityReport {
  std::vector<TrialResult> trials;
  SeparatorParams separator;
  double mean_accuracy = 0.0;
  double mean_best_threshold_accuracy = 0.0;
  double mean_lowpass_accuracy = 0.0;
  double kappa_eff = 0.0;
  double center_distance = 0.0;
  double distance_threshold = 0.0;  // log n / sqrt(d n kappa_eff), constant 1
  bool threshold_met = false;
  bool heterophilic_dominance = false;  // adaptive > low-pass in every trial
};

/// Runs `trials` independent instances derived from spec.seed. With
/// mu = nu the separator degenerates to the prior-only rule.
SeparabilityReport verify_separability(const AsbmSpec& spec, double radius, std::size_t trials);

}  // namespace apf
