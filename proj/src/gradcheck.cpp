#include "apf/gradcheck.hpp"

#include "apf/finetune.hpp"
#include "apf/pretrain.hpp"
#include "apf/rq_sampler.hpp"

#include <algorithm>
#include <cmath>

namespace apf {

Matrix numeric_gradient(const std::function<double()>& loss, Matrix& target, double h) {
  Matrix g(target.rows(), target.cols());
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    double& v = target.data()[i];
    const double orig = v;
    v = orig + h;
    const double up = loss();
    v = orig - h;
    const double down = loss();
    v = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

GradcheckResult check_params(const std::string& name, const ParamRefs& params,
                             const std::function<double()>& loss_and_grad, double tol, double h) {
  zero_grads(params);
  loss_and_grad();
  std::vector<Matrix> analytic;
  for (const Param* p : params) analytic.push_back(p->grad);
  GradcheckResult r;
  r.name = name;
  // One flattened comparison over all parameters, so a parameter whose true
  // gradient is zero does not turn rounding noise into a large ratio.
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix numeric = numeric_gradient(loss_and_grad, params[k]->value, h);
    diff2 += (analytic[k] - numeric).squaredNorm();
    a2 += analytic[k].squaredNorm();
    n2 += numeric.squaredNorm();
    r.entries += static_cast<std::size_t>(numeric.size());
  }
  r.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  zero_grads(params);
  r.passed = r.rel_error < tol;
  return r;
}

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

Param random_param(const std::string& name, Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                   double scale = 1.0) {
  Param p(name, r, c);
  p.value = random_matrix(r, c, rng, scale);
  return p;
}

SparseGraph small_graph(std::size_t n, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  for (NodeId i = 1; i < n; ++i) edges.emplace_back(i - 1, i);  // keeps it connected
  std::bernoulli_distribution coin(0.3);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 2; j < n; ++j)
      if (coin(rng)) edges.emplace_back(i, j);
  return SparseGraph::build(edges, n, false);
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  std::vector<GradcheckResult> out;
  const Eigen::Index n = 6, m = 4;

  for (ActivationKind kind : {ActivationKind::kIdentity, ActivationKind::kSigmoid,
                              ActivationKind::kRelu, ActivationKind::kElu, ActivationKind::kPrelu,
                              ActivationKind::kTanh}) {
    Param x = random_param("x", n, m, rng);
    Param slope("slope", 1, 1);
    slope.value(0, 0) = 0.3;
    const Matrix r = random_matrix(n, m, rng);
    ParamRefs ps{&x};
    if (kind == ActivationKind::kPrelu) ps.push_back(&slope);
    out.push_back(check_params("activation/" + std::string(to_string(kind)), ps, [&] {
      const double s = slope.value(0, 0);
      const Matrix y = activation_forward(x.value, kind, s);
      double ds = 0.0;
      x.grad += activation_backward(x.value, r, kind, s, &ds);
      slope.grad(0, 0) += ds;
      return y.cwiseProduct(r).sum();
    }, tol));
  }

  {
    Param x = random_param("x", n, 1, rng, 3.0);
    out.push_back(check_params("log_sigmoid", {&x}, [&] {
      double loss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        loss += log_sigmoid_clamped(x.value(i, 0));
        x.grad(i, 0) += log_sigmoid_clamped_grad(x.value(i, 0));
      }
      return loss;
    }, tol));
  }

  {
    Param x = random_param("x", n, m, rng);
    Param w = random_param("w", m, 3, rng);
    Param b = random_param("b", 1, 3, rng);
    const Matrix r = random_matrix(n, 3, rng);
    out.push_back(check_params("linear", {&x, &w, &b}, [&] {
      const Matrix y = linear_forward(x.value, w, b);
      x.grad += linear_backward(x.value, r, w, b);
      return y.cwiseProduct(r).sum();
    }, tol));
  }

  {
    Param x = random_param("x", n, m, rng);
    const Matrix r = random_matrix(n, m, rng);
    out.push_back(check_params("standardize", {&x}, [&] {
      StandardizeCache c;
      const Matrix y = standardize(x.value, &c);
      x.grad += standardize_backward(c, r);
      return y.cwiseProduct(r).sum();
    }, tol));
  }

  for (NormKind kind : {NormKind::kBatch, NormKind::kLayer}) {
    Param x = random_param("x", n, m, rng);
    Param gamma = random_param("gamma", 1, m, rng);
    Param beta = random_param("beta", 1, m, rng);
    const Matrix r = random_matrix(n, m, rng);
    out.push_back(check_params("norm/" + std::string(to_string(kind)), {&x, &gamma, &beta}, [&] {
      NormCache c;
      const Matrix y = norm_forward(x.value, kind, gamma, beta, &c);
      x.grad += norm_backward(c, r, kind, gamma, beta);
      return y.cwiseProduct(r).sum();
    }, tol));
  }

  for (auto [act, norm] : {std::pair{ActivationKind::kRelu, NormKind::kNone},
                           std::pair{ActivationKind::kPrelu, NormKind::kBatch},
                           std::pair{ActivationKind::kElu, NormKind::kLayer}}) {
    Mlp mlp("mlp", m, 5, 3, act, norm, rng);
    Param x = random_param("x", n, m, rng);
    const Matrix r = random_matrix(n, 3, rng);
    ParamRefs ps = mlp.params();
    ps.push_back(&x);
    out.push_back(check_params("mlp/" + std::string(to_string(act)) + "+" +
                                   std::string(to_string(norm)),
                               ps, [&] {
                                 Mlp::Cache c;
                                 const Matrix y = mlp.forward(x.value, &c);
                                 x.grad += mlp.backward(c, r);
                                 return y.cwiseProduct(r).sum();
                               }, tol));
  }

  {
    const SparseGraph g = small_graph(7, rng).with_self_loops();
    const Matrix xs = random_matrix(7, 3, rng);
    const int order = 3;
    const auto basis = chebyshev_basis(g, xs, order, estimate_lambda_max(g));
    for (FilterMode mode : {FilterMode::kLowPass, FilterMode::kHighPass}) {
      Param gamma = random_param("gamma", order + 1, 1, rng);
      const Matrix r = random_matrix(7, 3, rng);
      out.push_back(check_params(
          mode == FilterMode::kLowPass ? "filter/low" : "filter/high", {&gamma}, [&] {
            const Vector gr = gamma.value.col(0);
            const Matrix f = combine_basis(basis, filter_weights_for(gr, mode));
            gamma.grad.col(0) += filter_weights_backward(gr, mode, basis_weight_gradient(basis, r));
            return f.cwiseProduct(r).sum();
          }, tol));
    }
  }

  {
    // Discriminator loss with respect to its own inputs.
    const Eigen::Index e = 3;
    Param zl = random_param("z_low", n, e, rng), zln = random_param("z_low_neg", n, e, rng);
    Param zh = random_param("z_high", n, e, rng), zhn = random_param("z_high_neg", n, e, rng);
    Param sl = random_param("s_low", 1, e, rng), sh = random_param("s_high", n, e, rng);
    Discriminators disc = Discriminators::create(e, rng);
    ParamRefs ps{&zl, &zln, &zh, &zhn, &sl, &sh, &disc.w_low, &disc.w_high};
    out.push_back(check_params("pretrain_loss", ps, [&] {
      PretrainLossGrad g;
      const double loss = pretrain_loss(zl.value, zln.value, zh.value, zhn.value, sl.value.row(0),
                                        sh.value, disc, &g);
      zl.grad += g.z_low;
      zln.grad += g.z_low_neg;
      zh.grad += g.z_high;
      zhn.grad += g.z_high_neg;
      sl.grad.row(0) += g.s_low;
      sh.grad += g.s_high;
      return loss;
    }, tol));
  }

  for (auto [act, standardized] : {std::pair{ActivationKind::kElu, false},
                                   std::pair{ActivationKind::kPrelu, false},
                                   std::pair{ActivationKind::kTanh, true}}) {
    const std::size_t nodes = 9;
    const SparseGraph g = small_graph(nodes, rng);
    const Matrix x = random_matrix(static_cast<Eigen::Index>(nodes), 3, rng);
    const auto subgraphs = sample_all(g, x, SamplerConfig{});
    const PretrainContext ctx = PretrainContext::make(g, x, subgraphs, 2, standardized);
    DualEncoder enc = DualEncoder::create(3, 4, 2, act, NormKind::kNone, rng);
    enc.gamma.value = random_matrix(3, 1, rng);
    Discriminators disc = Discriminators::create(4, rng);
    const auto perm = random_permutation(nodes, rng);
    const auto perm2 = random_permutation(nodes, rng);
    ParamRefs ps = enc.params();
    for (Param* p : disc.params()) ps.push_back(p);
    out.push_back(check_params("pretrain_objective/" + std::string(to_string(act)) +
                                   (standardized ? "+standardized" : ""),
                               ps,
                               [&] { return pretrain_step(enc, disc, ctx, perm); }, tol));
    if (act == ActivationKind::kElu)
      out.push_back(check_params("pretrain_objective/independent_shuffles", ps,
                                 [&] { return pretrain_step(enc, disc, ctx, perm, &perm2); }, tol));
  }

  {
    Param c("coeff", n, m);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (Eigen::Index i = 0; i < c.value.size(); ++i) c.value.data()[i] = u(rng);
    const std::vector<int> labels{1, 0, 0, 1, 0, 0};
    out.push_back(check_params("reg_loss", {&c}, [&] {
      Matrix dc;
      const double loss = reg_loss(c.value, labels, RegTargets{0.2, 0.9}, &dc);
      c.grad += dc;
      return loss;
    }, tol));
    Param z = random_param("logits", n, 1, rng);
    out.push_back(check_params("bce", {&z}, [&] {
      Vector dz;
      const double loss = bce_with_logits(z.value.col(0), labels, &dz);
      z.grad.col(0) += dz;
      return loss;
    }, tol));
  }

  for (FusionVariant v : {FusionVariant::kGated, FusionVariant::kAttention, FusionVariant::kMean,
                          FusionVariant::kConcat}) {
    const Eigen::Index e = 3;
    const Matrix x = random_matrix(n, m, rng);
    const Matrix zl = random_matrix(n, e, rng), zh = random_matrix(n, e, rng);
    FusionModule fm(v, m, e, rng);
    const Matrix r = random_matrix(n, fm.output_dim(), rng);
    const ParamRefs ps = fm.params();
    if (ps.empty()) continue;
    out.push_back(check_params("fusion/" + std::string(to_string(v)), ps, [&] {
      FusionModule::Cache c;
      const Matrix y = fm.forward(x, zl, zh, &c);
      fm.backward(c, r);
      return y.cwiseProduct(r).sum();
    }, tol));
  }

  for (FusionVariant v : {FusionVariant::kGated, FusionVariant::kAttention, FusionVariant::kConcat}) {
    const Eigen::Index e = 3;
    const Matrix x = random_matrix(n, m, rng);
    const Matrix zl = random_matrix(n, e, rng), zh = random_matrix(n, e, rng);
    const std::vector<int> labels{1, 0, 0, 1, 0, 0};
    FinetuneConfig cfg;
    cfg.fusion = v;
    cfg.activation = ActivationKind::kElu;
    FinetuneModel model = FinetuneModel::create(cfg, m, e, rng);
    out.push_back(check_params("finetune_objective/" + std::string(to_string(v)), model.params(),
                               [&] { return finetune_step(model, x, zl, zh, labels, cfg); }, tol));
  }
  return out;
}

}  // namespace apf
