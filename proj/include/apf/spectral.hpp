#pragma once

#include "apf/graph.hpp"

#include <vector>

namespace apf {

struct RqReport {
  double value = 0.0;
  double numerator = 0.0;    // x^T L x, summed over columns
  double denominator = 0.0;  // x^T x, summed over columns
};

/// Rayleigh quotient of a (multi-column) signal against the unnormalized
/// Laplacian. The numerator sums (x_i - x_j)^2 once per unordered edge;
/// self-loops contribute nothing. Throws NumericError on a zero signal.
RqReport rayleigh_quotient(const SparseGraph& g, const Matrix& x);

enum class FilterMode { kLowPass, kHighPass };

/// Filter values at the Chebyshev nodes, ordered from the lowest graph
/// frequency to the highest.
struct FilterValues {
  Vector low;
  Vector high;
};

/// Maps K+1 unconstrained parameters to the shared increments
/// (gamma_0 = raw_0, gamma_j = raw_j^2 for j >= 1, capped at kGammaCap).
Vector gamma_increments(const Vector& gamma_raw);
inline constexpr double kGammaCap = 1e6;

/// Low-pass values gamma_0 - sum_{j<=k} gamma_j and high-pass values
/// sum_{j<=k} gamma_j. The first is nonincreasing, the second nondecreasing.
FilterValues derive_filter_values(const Vector& gamma_raw);

/// Learnable Chebyshev-interpolation filter of order K.
struct PolyFilter {
  int order = 2;
  Vector gamma_raw;  // K+1 entries
  FilterMode mode = FilterMode::kLowPass;

  static PolyFilter with_default_init(int order, FilterMode mode);
  Vector values() const;  // K+1 node values for this mode
};

/// Chebyshev nodes t_i = cos((i + 1/2) pi / (K + 1)), i = 0..K. These run
/// from near +1 down to near -1.
Vector chebyshev_nodes(int order);

/// Interpolation weights for values given at `chebyshev_nodes(order)`:
/// w_k = 2/(K+1) sum_i values_i T_k(t_i), with w_0 halved.
Vector chebyshev_coefficients(const Vector& values_at_nodes, int order);

/// Linear map from node values to weights: w = M v.
Matrix chebyshev_interpolation_matrix(int order);

/// Reorders frequency-ascending filter values onto chebyshev_nodes order.
Vector values_to_node_order(const Vector& ascending_values);

/// Weights of the polynomial sum_k w_k T_k that takes `ascending_values`
/// at the nodes from low to high frequency.
Vector filter_weights(const Vector& ascending_values);

double chebyshev_eval(const Vector& weights, double t);

/// Weights of the low- or high-pass filter derived from shared raw gammas.
Vector filter_weights_for(const Vector& gamma_raw, FilterMode mode);

/// Chain rule from d(loss)/d(weights) back to the raw gamma parameters.
Vector filter_weights_backward(const Vector& gamma_raw, FilterMode mode, const Vector& dweights);

/// d(loss)/d(w_k) = <dF, T_k(H) X> for F = sum_k w_k T_k(H) X.
Vector basis_weight_gradient(const std::vector<Matrix>& basis, const Matrix& dout);

/// T_k(H) X for k = 0..K with H the scaled Laplacian 2 Lsym / lambda_max - I.
std::vector<Matrix> chebyshev_basis(const SparseGraph& g, const Matrix& x, int order,
                                    double lambda_max);

Matrix combine_basis(const std::vector<Matrix>& basis, const Vector& weights);

/// sum_k w_k T_k(H) X via the three-term recurrence.
Matrix apply_filter(const PolyFilter& f, const SparseGraph& g, const Matrix& x,
                    double lambda_max);

}  // namespace apf
