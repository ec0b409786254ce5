#include "apf/pretrain.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace apf {

DualEncoder DualEncoder::create(Eigen::Index in_dim, Eigen::Index embed_dim, int order,
                                ActivationKind act, NormKind norm, std::mt19937_64& rng) {
  if (order < 1) throw ValidationError("filter order must be at least 1");
  if (embed_dim < 1 || in_dim < 1) throw ValidationError("encoder dimensions must be positive");
  DualEncoder enc;
  enc.order = order;
  enc.embed_dim = embed_dim;
  enc.gamma = Param("encoder.gamma", order + 1, 1);
  enc.gamma.value.col(0) = PolyFilter::with_default_init(order, FilterMode::kLowPass).gamma_raw;
  enc.mlp_low = Mlp("encoder.low", in_dim, embed_dim, embed_dim, act, norm, rng);
  enc.mlp_high = Mlp("encoder.high", in_dim, embed_dim, embed_dim, act, norm, rng);
  return enc;
}

PolyFilter DualEncoder::low_filter() const {
  return PolyFilter{order, gamma.value.col(0), FilterMode::kLowPass};
}

PolyFilter DualEncoder::high_filter() const {
  return PolyFilter{order, gamma.value.col(0), FilterMode::kHighPass};
}

ParamRefs DualEncoder::params() {
  ParamRefs out{&gamma};
  for (Param* p : mlp_low.params()) out.push_back(p);
  for (Param* p : mlp_high.params()) out.push_back(p);
  return out;
}

Discriminators Discriminators::create(Eigen::Index embed_dim, std::mt19937_64& rng) {
  Discriminators d{Param("disc.w_low", embed_dim, embed_dim),
                   Param("disc.w_high", embed_dim, embed_dim)};
  glorot_uniform(d.w_low, rng);
  glorot_uniform(d.w_high, rng);
  return d;
}

ParamRefs Discriminators::params() { return {&w_low, &w_high}; }

Embeddings encode_basis(const DualEncoder& enc, std::vector<Matrix> basis, EncoderCache* cache,
                        bool standardized) {
  const Vector gr = enc.gamma.value.col(0);
  Vector w_low = filter_weights_for(gr, FilterMode::kLowPass);
  Vector w_high = filter_weights_for(gr, FilterMode::kHighPass);
  const Matrix f_low = combine_basis(basis, w_low);
  const Matrix f_high = combine_basis(basis, w_high);

  Embeddings z;
  if (cache) {
    z.low = enc.mlp_low.forward(f_low, &cache->mlp_low);
    z.high = enc.mlp_high.forward(f_high, &cache->mlp_high);
    cache->standardized = standardized;
    if (standardized) {
      z.low = standardize(z.low, &cache->std_low);
      z.high = standardize(z.high, &cache->std_high);
    }
    cache->basis = std::move(basis);
    cache->w_low = std::move(w_low);
    cache->w_high = std::move(w_high);
  } else {
    z.low = enc.mlp_low.forward(f_low);
    z.high = enc.mlp_high.forward(f_high);
    if (standardized) {
      z.low = standardize(z.low);
      z.high = standardize(z.high);
    }
  }
  return z;
}

Embeddings encode(const DualEncoder& enc, const SparseGraph& g, const Matrix& x,
                  double lambda_max, EncoderCache* cache) {
  return encode_basis(enc, chebyshev_basis(g, x, enc.order, lambda_max), cache);
}

void encode_backward(DualEncoder& enc, const EncoderCache& cache, const Matrix& dz_low,
                     const Matrix& dz_high) {
  const Vector gr = enc.gamma.value.col(0);
  const Matrix df_low = enc.mlp_low.backward(
      cache.mlp_low, cache.standardized ? standardize_backward(cache.std_low, dz_low) : dz_low);
  const Matrix df_high = enc.mlp_high.backward(
      cache.mlp_high, cache.standardized ? standardize_backward(cache.std_high, dz_high) : dz_high);
  enc.gamma.grad.col(0) +=
      filter_weights_backward(gr, FilterMode::kLowPass, basis_weight_gradient(cache.basis, df_low));
  enc.gamma.grad.col(0) += filter_weights_backward(gr, FilterMode::kHighPass,
                                                   basis_weight_gradient(cache.basis, df_high));
}

std::vector<NodeId> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), NodeId{0});
  // Fisher-Yates with an explicit distribution so results do not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

Matrix permute_rows(const Matrix& x, const std::vector<NodeId>& perm) {
  if (perm.size() != static_cast<std::size_t>(x.rows()))
    throw ValidationError("permutation length does not match row count");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
  return out;
}

Matrix corrupt(const Matrix& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return permute_rows(x, random_permutation(static_cast<std::size_t>(x.rows()), rng));
}

Eigen::SparseMatrix<double, Eigen::RowMajor> summary_operator(
    const std::vector<RqSubgraph>& subgraphs, std::size_t n) {
  if (subgraphs.size() != n)
    throw ValidationError("expected one subgraph per node (" + std::to_string(n) + "), got " +
                          std::to_string(subgraphs.size()));
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<bool> seen(n, false);
  for (const auto& sg : subgraphs) {
    if (sg.center >= n) throw ValidationError("subgraph center out of range");
    if (sg.members.empty()) throw ValidationError("empty subgraph at node " + std::to_string(sg.center));
    if (seen[sg.center]) throw ValidationError("duplicate subgraph for node " + std::to_string(sg.center));
    seen[sg.center] = true;
    const double w = 1.0 / static_cast<double>(sg.members.size());
    for (NodeId m : sg.members) {
      if (m >= n) throw ValidationError("subgraph member out of range");
      trips.emplace_back(static_cast<int>(sg.center), static_cast<int>(m), w);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> op(static_cast<Eigen::Index>(n),
                                                  static_cast<Eigen::Index>(n));
  op.setFromTriplets(trips.begin(), trips.end());
  return op;
}

Summaries summaries(const Matrix& z_low, const Matrix& z_high,
                    const std::vector<RqSubgraph>& subgraphs) {
  const auto op = summary_operator(subgraphs, static_cast<std::size_t>(z_high.rows()));
  return Summaries{z_low.colwise().mean(), op * z_high};
}

double pretrain_loss(const Matrix& z_low, const Matrix& z_low_neg, const Matrix& z_high,
                     const Matrix& z_high_neg, const RowVector& s_low, const Matrix& s_high,
                     Discriminators& disc, PretrainLossGrad* grad) {
  const Eigen::Index n = z_low.rows();
  const Eigen::Index e = z_low.cols();
  if (z_low_neg.rows() != n || z_high.rows() != n || z_high_neg.rows() != n ||
      s_high.rows() != n || z_low_neg.cols() != e || z_high.cols() != e ||
      z_high_neg.cols() != e || s_low.size() != e || s_high.cols() != e ||
      disc.w_low.value.rows() != e || disc.w_high.value.rows() != e)
    throw ValidationError("pretrain loss: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);

  // low branch: scores a_i = z_i W s
  const Vector u = disc.w_low.value * s_low.transpose();
  const Vector a_pos = z_low * u;
  const Vector a_neg = z_low_neg * u;
  // high branch: per-node summaries
  const Matrix p_pos = z_high * disc.w_high.value;
  const Matrix p_neg = z_high_neg * disc.w_high.value;
  const Vector h_pos = p_pos.cwiseProduct(s_high).rowwise().sum();
  const Vector h_neg = p_neg.cwiseProduct(s_high).rowwise().sum();

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loss -= log_sigmoid_clamped(a_pos[i]) + log_sigmoid_clamped(-a_neg[i]);
    loss -= log_sigmoid_clamped(h_pos[i]) + log_sigmoid_clamped(-h_neg[i]);
  }
  loss *= inv_n;
  if (!std::isfinite(loss)) throw NumericError("pretraining loss is not finite");

  Vector da_pos(n), da_neg(n), dh_pos(n), dh_neg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    da_pos[i] = -inv_n * log_sigmoid_clamped_grad(a_pos[i]);
    da_neg[i] = inv_n * log_sigmoid_clamped_grad(-a_neg[i]);
    dh_pos[i] = -inv_n * log_sigmoid_clamped_grad(h_pos[i]);
    dh_neg[i] = inv_n * log_sigmoid_clamped_grad(-h_neg[i]);
  }

  const Vector du = z_low.transpose() * da_pos + z_low_neg.transpose() * da_neg;
  disc.w_low.grad.noalias() += du * s_low;
  const Matrix dp_pos = dh_pos.asDiagonal() * s_high;
  const Matrix dp_neg = dh_neg.asDiagonal() * s_high;
  disc.w_high.grad.noalias() += z_high.transpose() * dp_pos + z_high_neg.transpose() * dp_neg;

  if (grad) {
    grad->z_low = da_pos * u.transpose();
    grad->z_low_neg = da_neg * u.transpose();
    grad->s_low = (disc.w_low.value.transpose() * du).transpose();
    grad->z_high = dp_pos * disc.w_high.value.transpose();
    grad->z_high_neg = dp_neg * disc.w_high.value.transpose();
    grad->s_high = dh_pos.asDiagonal() * p_pos;
    grad->s_high += dh_neg.asDiagonal() * p_neg;
  }
  return loss;
}

SparseGraph learning_graph(const SparseGraph& g) {
  return g.has_self_loops() ? g : g.with_self_loops();
}

PretrainContext PretrainContext::make(const SparseGraph& g, const Matrix& x,
                                      const std::vector<RqSubgraph>& subgraphs, int order,
                                      bool standardize) {
  if (static_cast<std::size_t>(x.rows()) != g.num_nodes())
    throw ValidationError("feature rows do not match graph size");
  PretrainContext ctx;
  ctx.graph = learning_graph(g);
  ctx.x = x;
  ctx.lambda_max = estimate_lambda_max(ctx.graph);
  ctx.basis = chebyshev_basis(ctx.graph, x, order, ctx.lambda_max);
  ctx.summary_op = summary_operator(subgraphs, g.num_nodes());
  ctx.standardize = standardize;
  return ctx;
}

double pretrain_step(DualEncoder& enc, Discriminators& disc, const PretrainContext& ctx,
                     const std::vector<NodeId>& perm_low,
                     const std::vector<NodeId>* perm_high) {
  EncoderCache clean_cache, neg_cache_low, neg_cache_high;
  const Embeddings z = encode_basis(enc, ctx.basis, &clean_cache, ctx.standardize);

  const Matrix x_neg_low = permute_rows(ctx.x, perm_low);
  Embeddings z_neg;
  EncoderCache* high_cache = &neg_cache_low;
  {
    auto basis = chebyshev_basis(ctx.graph, x_neg_low, enc.order, ctx.lambda_max);
    z_neg = encode_basis(enc, std::move(basis), &neg_cache_low, ctx.standardize);
  }
  if (perm_high && *perm_high != perm_low) {
    const Matrix x_neg_high = permute_rows(ctx.x, *perm_high);
    auto basis = chebyshev_basis(ctx.graph, x_neg_high, enc.order, ctx.lambda_max);
    z_neg.high = encode_basis(enc, std::move(basis), &neg_cache_high, ctx.standardize).high;
    high_cache = &neg_cache_high;
  }

  const RowVector s_low = z.low.colwise().mean();
  const Matrix s_high = ctx.summary_op * z.high;

  PretrainLossGrad gl;
  const double loss = pretrain_loss(z.low, z_neg.low, z.high, z_neg.high, s_low, s_high, disc, &gl);

  const double inv_n = 1.0 / static_cast<double>(z.low.rows());
  Matrix dz_low = gl.z_low;
  dz_low.rowwise() += inv_n * gl.s_low;
  Matrix dz_high = gl.z_high;
  dz_high.noalias() += ctx.summary_op.transpose() * gl.s_high;

  encode_backward(enc, clean_cache, dz_low, dz_high);
  if (high_cache == &neg_cache_low) {
    encode_backward(enc, neg_cache_low, gl.z_low_neg, gl.z_high_neg);
  } else {
    const Matrix zero_high = Matrix::Zero(gl.z_high_neg.rows(), gl.z_high_neg.cols());
    const Matrix zero_low = Matrix::Zero(gl.z_low_neg.rows(), gl.z_low_neg.cols());
    encode_backward(enc, neg_cache_low, gl.z_low_neg, zero_high);
    encode_backward(enc, neg_cache_high, zero_low, gl.z_high_neg);
  }
  return loss;
}

PretrainResult run_pretraining(const SparseGraph& g, const Matrix& x,
                               const std::vector<RqSubgraph>& subgraphs,
                               const PretrainConfig& cfg) {
  if (cfg.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (cfg.patience < 1) throw ValidationError("patience must be positive");
  std::mt19937_64 rng(cfg.seed);
  PretrainResult res;
  res.encoder =
      DualEncoder::create(x.cols(), cfg.embed_dim, cfg.order, cfg.activation, cfg.norm, rng);
  res.disc = Discriminators::create(cfg.embed_dim, rng);

  const PretrainContext ctx = PretrainContext::make(g, x, subgraphs, cfg.order, cfg.standardize_in_loss);
  const std::size_t n = g.num_nodes();

  DualEncoder enc = res.encoder;
  Discriminators disc = res.disc;
  ParamRefs all = enc.params();
  for (Param* p : disc.params()) all.push_back(p);
  Adam opt(AdamConfig{.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay}, all);

  // Each epoch evaluates the current parameters, keeps them if they beat the
  // best loss so far, then takes one optimizer step.
  auto evaluate = [&]() {
    zero_grads(all);
    const auto perm_low = random_permutation(n, rng);
    if (cfg.independent_shuffles) {
      const auto perm_high = random_permutation(n, rng);
      return pretrain_step(enc, disc, ctx, perm_low, &perm_high);
    }
    return pretrain_step(enc, disc, ctx, perm_low);
  };

  double loss = evaluate();
  res.initial_loss = loss;
  res.best_loss = loss;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      opt.step();
    } catch (const NumericError& err) {
      throw NumericError("pretraining diverged at epoch " + std::to_string(epoch) + ": " +
                         err.what());
    }
    res.epochs_run = epoch;
    try {
      loss = evaluate();
    } catch (const NumericError& err) {
      throw NumericError("pretraining diverged at epoch " + std::to_string(epoch) + ": " +
                         err.what());
    }
    res.loss_history.push_back(loss);
    if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best_epoch = epoch;
      res.encoder = enc;
      res.disc = disc;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

}  // namespace apf
