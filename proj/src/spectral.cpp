#include "apf/spectral.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace apf {

RqReport rayleigh_quotient(const SparseGraph& g, const Matrix& x) {
  if (static_cast<std::size_t>(x.rows()) != g.num_nodes())
    throw ValidationError("signal rows do not match graph size");
  RqReport r;
  for (NodeId i = 0; i < g.num_nodes(); ++i)
    for (NodeId j : g.neighbors(i))
      if (i < j) r.numerator += (x.row(i) - x.row(j)).squaredNorm();
  r.denominator = x.squaredNorm();
  if (!(r.denominator > 0.0)) throw NumericError("Rayleigh quotient of an all-zero signal");
  r.value = r.numerator / r.denominator;
  if (!std::isfinite(r.value)) throw NumericError("Rayleigh quotient is not finite");
  return r;
}

Vector gamma_increments(const Vector& gamma_raw) {
  Vector g(gamma_raw.size());
  for (Eigen::Index k = 0; k < gamma_raw.size(); ++k) {
    if (k == 0) {
      g[k] = std::clamp(gamma_raw[k], -kGammaCap, kGammaCap);
    } else {
      g[k] = std::min(gamma_raw[k] * gamma_raw[k], kGammaCap);
    }
  }
  return g;
}

FilterValues derive_filter_values(const Vector& gamma_raw) {
  const Vector g = gamma_increments(gamma_raw);
  FilterValues v{Vector(g.size()), Vector(g.size())};
  double low = g.size() ? g[0] : 0.0;
  double high = 0.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    if (k > 0) low -= g[k];
    high += g[k];
    v.low[k] = low;
    v.high[k] = high;
  }
  return v;
}

PolyFilter PolyFilter::with_default_init(int order, FilterMode mode) {
  PolyFilter f;
  f.order = order;
  f.mode = mode;
  f.gamma_raw = Vector::Constant(order + 1, order > 0 ? std::sqrt(1.0 / order) : 0.0);
  f.gamma_raw[0] = 1.0;
  return f;
}

Vector PolyFilter::values() const {
  auto v = derive_filter_values(gamma_raw);
  return mode == FilterMode::kLowPass ? v.low : v.high;
}

Vector chebyshev_nodes(int order) {
  Vector t(order + 1);
  for (int i = 0; i <= order; ++i)
    t[i] = std::cos((i + 0.5) * std::numbers::pi / (order + 1));
  return t;
}

double chebyshev_eval(const Vector& weights, double t) {
  double prev = 1.0, cur = t, acc = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    double tk;
    if (k == 0) {
      tk = 1.0;
    } else if (k == 1) {
      tk = t;
    } else {
      tk = 2.0 * t * cur - prev;
      prev = cur;
      cur = tk;
    }
    acc += weights[k] * tk;
  }
  return acc;
}

Matrix chebyshev_interpolation_matrix(int order) {
  const Vector t = chebyshev_nodes(order);
  const int n = order + 1;
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    // T_k(t_i) by recurrence
    double prev = 1.0, cur = t[i];
    for (int k = 0; k < n; ++k) {
      double tk;
      if (k == 0) {
        tk = 1.0;
      } else if (k == 1) {
        tk = t[i];
      } else {
        tk = 2.0 * t[i] * cur - prev;
        prev = cur;
        cur = tk;
      }
      m(k, i) = 2.0 / n * tk;
    }
  }
  m.row(0) *= 0.5;
  return m;
}

Vector chebyshev_coefficients(const Vector& values_at_nodes, int order) {
  if (values_at_nodes.size() != order + 1)
    throw ValidationError("expected " + std::to_string(order + 1) + " filter values");
  return chebyshev_interpolation_matrix(order) * values_at_nodes;
}

Vector values_to_node_order(const Vector& ascending_values) {
  return ascending_values.reverse();
}

Vector filter_weights(const Vector& ascending_values) {
  const int order = static_cast<int>(ascending_values.size()) - 1;
  return chebyshev_coefficients(values_to_node_order(ascending_values), order);
}

std::vector<Matrix> chebyshev_basis(const SparseGraph& g, const Matrix& x, int order,
                                    double lambda_max) {
  std::vector<Matrix> basis;
  basis.reserve(order + 1);
  basis.push_back(x);
  if (order >= 1) basis.push_back(laplacian_apply(g, x, LaplacianKind::kScaled, lambda_max));
  for (int k = 2; k <= order; ++k) {
    Matrix next = 2.0 * laplacian_apply(g, basis[k - 1], LaplacianKind::kScaled, lambda_max) -
                  basis[k - 2];
    basis.push_back(std::move(next));
  }
  return basis;
}

Matrix combine_basis(const std::vector<Matrix>& basis, const Vector& weights) {
  if (basis.empty() || static_cast<Eigen::Index>(basis.size()) != weights.size())
    throw ValidationError("basis size does not match weight count");
  Matrix out = weights[0] * basis[0];
  for (std::size_t k = 1; k < basis.size(); ++k) out += weights[k] * basis[k];
  return out;
}

Matrix apply_filter(const PolyFilter& f, const SparseGraph& g, const Matrix& x,
                    double lambda_max) {
  return combine_basis(chebyshev_basis(g, x, f.order, lambda_max), filter_weights(f.values()));
}

Vector filter_weights_for(const Vector& gamma_raw, FilterMode mode) {
  const FilterValues v = derive_filter_values(gamma_raw);
  return filter_weights(mode == FilterMode::kLowPass ? v.low : v.high);
}

Vector filter_weights_backward(const Vector& gamma_raw, FilterMode mode, const Vector& dweights) {
  const Eigen::Index n = gamma_raw.size();
  const int order = static_cast<int>(n) - 1;
  // w = M * reverse(values)
  const Vector dnode = chebyshev_interpolation_matrix(order).transpose() * dweights;
  const Vector dvalues = dnode.reverse();

  // suffix[j] = sum_{k >= j} dvalues[k]
  Vector suffix(n);
  double acc = 0.0;
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    acc += dvalues[k];
    suffix[k] = acc;
  }
  Vector dinc(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (mode == FilterMode::kHighPass || j == 0) {
      dinc[j] = suffix[j];
    } else {
      dinc[j] = -suffix[j];
    }
  }

  Vector draw(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = gamma_raw[j];
    if (j == 0) {
      draw[j] = std::abs(r) < kGammaCap ? dinc[j] : 0.0;
    } else {
      draw[j] = r * r < kGammaCap ? 2.0 * r * dinc[j] : 0.0;
    }
  }
  return draw;
}

Vector basis_weight_gradient(const std::vector<Matrix>& basis, const Matrix& dout) {
  Vector dw(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k)
    dw[static_cast<Eigen::Index>(k)] = basis[k].cwiseProduct(dout).sum();
  return dw;
}

}  // namespace apf
