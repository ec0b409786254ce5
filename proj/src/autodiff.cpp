#include "apf/autodiff.hpp"

#include "apf/errors.hpp"

#include <cmath>

namespace apf {

void zero_grads(const ParamRefs& params) {
  for (Param* p : params) p->zero_grad();
}

void glorot_uniform(Param& p, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  std::uniform_real_distribution<double> unif(-limit, limit);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = unif(rng);
}

ActivationKind parse_activation(std::string_view name) {
  if (name == "identity") return ActivationKind::kIdentity;
  if (name == "sigmoid") return ActivationKind::kSigmoid;
  if (name == "relu") return ActivationKind::kRelu;
  if (name == "elu") return ActivationKind::kElu;
  if (name == "prelu") return ActivationKind::kPrelu;
  if (name == "tanh") return ActivationKind::kTanh;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kIdentity: return "identity";
    case ActivationKind::kSigmoid: return "sigmoid";
    case ActivationKind::kRelu: return "relu";
    case ActivationKind::kElu: return "elu";
    case ActivationKind::kPrelu: return "prelu";
    case ActivationKind::kTanh: return "tanh";
  }
  return "identity";
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

Matrix activation_forward(const Matrix& x, ActivationKind kind, double slope) {
  switch (kind) {
    case ActivationKind::kIdentity: return x;
    case ActivationKind::kSigmoid: return sigmoid(x);
    case ActivationKind::kRelu: return x.cwiseMax(0.0);
    case ActivationKind::kElu:
      return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    case ActivationKind::kPrelu:
      return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    case ActivationKind::kTanh: return x.array().tanh().matrix();
  }
  return x;
}

Matrix activation_backward(const Matrix& x, const Matrix& dy, ActivationKind kind,
                           double slope, double* slope_grad) {
  switch (kind) {
    case ActivationKind::kIdentity: return dy;
    case ActivationKind::kSigmoid: {
      const Matrix s = sigmoid(x);
      return (dy.array() * s.array() * (1.0 - s.array())).matrix();
    }
    case ActivationKind::kRelu:
      return (dy.array() * (x.array() > 0.0).cast<double>()).matrix();
    case ActivationKind::kElu:
      return dy.binaryExpr(x, [](double g, double v) { return v > 0.0 ? g : g * std::exp(v); });
    case ActivationKind::kPrelu: {
      if (slope_grad) {
        *slope_grad += (dy.array() * x.array() * (x.array() <= 0.0).cast<double>()).sum();
      }
      return dy.binaryExpr(x, [slope](double g, double v) { return v > 0.0 ? g : g * slope; });
    }
    case ActivationKind::kTanh: {
      const auto t = x.array().tanh();
      return (dy.array() * (1.0 - t * t)).matrix();
    }
  }
  return dy;
}

double log_sigmoid_clamped(double x) {
  // log sigmoid(x) = -softplus(-x)
  const double ls = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  return std::max(ls, std::log(kLogFloor));
}

double log_sigmoid_clamped_grad(double x) {
  const double ls = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  if (ls < std::log(kLogFloor)) return 0.0;
  return 1.0 - sigmoid(x);
}

Matrix linear_forward(const Matrix& x, const Param& w, const Param& b) {
  if (x.cols() != w.value.rows())
    throw ValidationError("linear: input has " + std::to_string(x.cols()) + " columns, '" +
                          w.name + "' expects " + std::to_string(w.value.rows()));
  if (b.value.rows() != 1 || b.value.cols() != w.value.cols())
    throw ValidationError("linear: bias '" + b.name + "' shape mismatch");
  Matrix y = x * w.value;
  y.rowwise() += b.value.row(0);
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& dy, Param& w, Param& b) {
  w.grad.noalias() += x.transpose() * dy;
  b.grad.row(0) += dy.colwise().sum();
  return dy * w.value.transpose();
}

Matrix standardize(const Matrix& z, StandardizeCache* cache) {
  const double n = static_cast<double>(z.rows());
  const RowVector mean = z.colwise().mean();
  Matrix centered = z.rowwise() - mean;
  const RowVector stddev = (centered.array().square().colwise().sum() / n).sqrt().matrix();
  Matrix out = centered.array().rowwise() / (stddev.array() + kStandardizeEps);
  if (cache) {
    cache->centered = std::move(centered);
    cache->stddev = stddev;
  }
  return out;
}

Matrix standardize_backward(const StandardizeCache& cache, const Matrix& dy) {
  const double n = static_cast<double>(dy.rows());
  Matrix dz(dy.rows(), dy.cols());
  for (Eigen::Index c = 0; c < dy.cols(); ++c) {
    const double s = cache.stddev[c];
    const double a = s + kStandardizeEps;
    const auto g = dy.col(c).array();
    const auto zc = cache.centered.col(c).array();
    auto out = dz.col(c).array();
    out = (g - g.mean()) / a;
    if (s > 0.0) out -= zc * (g * zc).sum() / (n * a * a * s);
  }
  return dz;
}

NormKind parse_norm(std::string_view name) {
  if (name == "none") return NormKind::kNone;
  if (name == "batch") return NormKind::kBatch;
  if (name == "layer") return NormKind::kLayer;
  throw ValidationError("unknown normalization '" + std::string(name) + "'");
}

std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kNone: return "none";
    case NormKind::kBatch: return "batch";
    case NormKind::kLayer: return "layer";
  }
  return "none";
}

namespace {
constexpr double kNormEps = 1e-5;
}

Matrix norm_forward(const Matrix& x, NormKind kind, const Param& gamma, const Param& beta,
                    NormCache* cache) {
  if (kind == NormKind::kNone) return x;
  Matrix xhat(x.rows(), x.cols());
  Vector inv_std;
  if (kind == NormKind::kBatch) {
    const RowVector mean = x.colwise().mean();
    xhat = x.rowwise() - mean;
    inv_std = ((xhat.array().square().colwise().mean() + kNormEps).rsqrt()).transpose();
    xhat = xhat.array().rowwise() * inv_std.transpose().array();
  } else {
    const Vector mean = x.rowwise().mean();
    xhat = x.colwise() - mean;
    inv_std = (xhat.array().square().rowwise().mean() + kNormEps).rsqrt();
    xhat = xhat.array().colwise() * inv_std.array();
  }
  Matrix y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix norm_backward(const NormCache& cache, const Matrix& dy, NormKind kind, Param& gamma,
                     Param& beta) {
  if (kind == NormKind::kNone) return dy;
  gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  if (kind == NormKind::kBatch) {
    const RowVector mean_g = dxhat.colwise().mean();
    const RowVector mean_gx = (dxhat.array() * cache.xhat.array()).colwise().mean().matrix();
    dx = (dxhat.rowwise() - mean_g).array() -
         cache.xhat.array().rowwise() * mean_gx.array();
    dx = dx.array().rowwise() * cache.inv_std.transpose().array();
  } else {
    const Vector mean_g = dxhat.rowwise().mean();
    const Vector mean_gx = (dxhat.array() * cache.xhat.array()).rowwise().mean().matrix();
    dx = (dxhat.colwise() - mean_g).array() - cache.xhat.array().colwise() * mean_gx.array();
    dx = dx.array().colwise() * cache.inv_std.array();
  }
  return dx;
}

Mlp::Mlp(const std::string& prefix, Eigen::Index in_dim, Eigen::Index hidden_dim,
         Eigen::Index out_dim, ActivationKind act, NormKind norm, std::mt19937_64& rng)
    : w1(prefix + ".w1", in_dim, hidden_dim),
      b1(prefix + ".b1", 1, hidden_dim),
      w2(prefix + ".w2", hidden_dim, out_dim),
      b2(prefix + ".b2", 1, out_dim),
      slope(prefix + ".prelu", 1, 1),
      gamma(prefix + ".norm_gamma", 1, hidden_dim),
      beta(prefix + ".norm_beta", 1, hidden_dim),
      act_(act),
      norm_(norm) {
  glorot_uniform(w1, rng);
  glorot_uniform(w2, rng);
  slope.value(0, 0) = 0.25;
  gamma.value.setOnes();
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  Matrix pre = linear_forward(x, w1, b1);
  NormCache nc;
  Matrix normed = norm_forward(pre, norm_, gamma, beta, cache ? &nc : nullptr);
  Matrix hidden = activation_forward(normed, act_, slope.value(0, 0));
  Matrix out = linear_forward(hidden, w2, b2);
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->normed = std::move(normed);
    cache->hidden = std::move(hidden);
    cache->norm = std::move(nc);
  }
  return out;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& dout) {
  const Matrix dhidden = linear_backward(cache.hidden, dout, w2, b2);
  double dslope = 0.0;
  const Matrix dnormed =
      activation_backward(cache.normed, dhidden, act_, slope.value(0, 0), &dslope);
  if (act_ == ActivationKind::kPrelu) slope.grad(0, 0) += dslope;
  const Matrix dpre = norm_backward(cache.norm, dnormed, norm_, gamma, beta);
  return linear_backward(cache.input, dpre, w1, b1);
}

ParamRefs Mlp::params() {
  ParamRefs out{&w1, &b1, &w2, &b2};
  if (act_ == ActivationKind::kPrelu) out.push_back(&slope);
  if (norm_ != NormKind::kNone) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  return out;
}

Adam::Adam(AdamConfig cfg, ParamRefs params) : cfg_(cfg), params_(std::move(params)) {
  for (Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  for (Param* p : params_) {
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (cfg_.weight_decay != 0.0) p.value *= (1.0 - cfg_.learning_rate * cfg_.weight_decay);
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg_.learning_rate * (m_[i].array() / bc1) /
                       ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
    if (!p.value.allFinite()) throw NumericError("parameter '" + p.name + "' became non-finite");
  }
}

}  // namespace apf
