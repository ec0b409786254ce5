#pragma once

// Small differentiable toolkit: every forward function has a matching
// backward that accumulates parameter gradients and returns the input
// gradient. Model code composes these by hand.

#include "apf/graph.hpp"

#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace apf {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamRefs = std::vector<Param*>;

void zero_grads(const ParamRefs& params);
void glorot_uniform(Param& p, std::mt19937_64& rng);

// --- element-wise ---------------------------------------------------------

enum class ActivationKind { kIdentity, kSigmoid, kRelu, kElu, kPrelu, kTanh };

ActivationKind parse_activation(std::string_view name);
std::string_view to_string(ActivationKind kind);

double sigmoid(double x);
Matrix sigmoid(const Matrix& x);

/// `slope` is the PReLU negative slope; ignored by the other kinds.
Matrix activation_forward(const Matrix& x, ActivationKind kind, double slope = 0.25);
/// Gradient w.r.t. the pre-activation `x`. Adds d(loss)/d(slope) to
/// `slope_grad` when the kind is PReLU and the pointer is set.
Matrix activation_backward(const Matrix& x, const Matrix& dy, ActivationKind kind,
                           double slope = 0.25, double* slope_grad = nullptr);

/// log(max(sigmoid(x), 1e-12)) and its derivative (zero once clamped).
double log_sigmoid_clamped(double x);
double log_sigmoid_clamped_grad(double x);
inline constexpr double kLogFloor = 1e-12;

// --- dense layers ---------------------------------------------------------

/// X W + b with b broadcast over rows.
Matrix linear_forward(const Matrix& x, const Param& w, const Param& b);
/// Accumulates X^T dY into w.grad and column sums of dY into b.grad.
Matrix linear_backward(const Matrix& x, const Matrix& dy, Param& w, Param& b);

inline constexpr double kStandardizeEps = 1e-5;

struct StandardizeCache {
  Matrix centered;
  RowVector stddev;  // population standard deviation per column
};

/// Per-column (z - mean) / (std + 1e-5).
Matrix standardize(const Matrix& z, StandardizeCache* cache = nullptr);
Matrix standardize_backward(const StandardizeCache& cache, const Matrix& dy);

enum class NormKind { kNone, kBatch, kLayer };

NormKind parse_norm(std::string_view name);
std::string_view to_string(NormKind kind);

struct NormCache {
  Matrix xhat;
  Vector inv_std;  // per column (batch) or per row (layer)
};

/// Batch norm normalizes columns over all rows; layer norm normalizes each
/// row. Variance epsilon 1e-5 inside the square root, then an affine map
/// with per-column gamma and beta.
Matrix norm_forward(const Matrix& x, NormKind kind, const Param& gamma, const Param& beta,
                    NormCache* cache);
Matrix norm_backward(const NormCache& cache, const Matrix& dy, NormKind kind, Param& gamma,
                     Param& beta);

/// Two dense layers: out = act(norm(X W1 + b1)) W2 + b2.
class Mlp {
 public:
  struct Cache {
    Matrix input;
    Matrix pre;     // X W1 + b1
    Matrix normed;  // after normalization
    Matrix hidden;  // after activation
    NormCache norm;
  };

  Mlp() = default;
  Mlp(const std::string& prefix, Eigen::Index in_dim, Eigen::Index hidden_dim,
      Eigen::Index out_dim, ActivationKind act, NormKind norm, std::mt19937_64& rng);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dout);

  ParamRefs params();
  ActivationKind activation() const { return act_; }
  NormKind norm() const { return norm_; }

  Param w1, b1, w2, b2, slope, gamma, beta;

 private:
  ActivationKind act_ = ActivationKind::kRelu;
  NormKind norm_ = NormKind::kNone;
};

// --- optimizer ------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay: parameters are scaled by
/// (1 - lr * weight_decay) before the moment update is applied.
class Adam {
 public:
  Adam(AdamConfig cfg, ParamRefs params);

  /// Throws NumericError naming the parameter on a non-finite gradient.
  void step();
  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  ParamRefs params_;
  std::vector<Matrix> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace apf
