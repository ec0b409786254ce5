#include "apf/finetune.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace apf {

FusionVariant parse_fusion(std::string_view name) {
  if (name == "gated") return FusionVariant::kGated;
  if (name == "mean") return FusionVariant::kMean;
  if (name == "concat") return FusionVariant::kConcat;
  if (name == "attention") return FusionVariant::kAttention;
  if (name == "low") return FusionVariant::kLowOnly;
  if (name == "high") return FusionVariant::kHighOnly;
  throw ValidationError("unknown fusion variant '" + std::string(name) + "'");
}

std::string_view to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::kGated: return "gated";
    case FusionVariant::kMean: return "mean";
    case FusionVariant::kConcat: return "concat";
    case FusionVariant::kAttention: return "attention";
    case FusionVariant::kLowOnly: return "low";
    case FusionVariant::kHighOnly: return "high";
  }
  return "gated";
}

FusionModule::FusionModule(FusionVariant v, Eigen::Index feat_dim, Eigen::Index embed_dim,
                           std::mt19937_64& rng)
    : variant_(v), embed_dim_(embed_dim) {
  if (v == FusionVariant::kGated) {
    w_c = Param("fusion.w_c", feat_dim, embed_dim);
    b_c = Param("fusion.b_c", 1, embed_dim);
    glorot_uniform(w_c, rng);
  } else if (v == FusionVariant::kAttention) {
    wz_low = Param("fusion.wz_low", embed_dim, embed_dim);
    wz_high = Param("fusion.wz_high", embed_dim, embed_dim);
    wx_low = Param("fusion.wx_low", feat_dim, embed_dim);
    wx_high = Param("fusion.wx_high", feat_dim, embed_dim);
    q = Param("fusion.q", embed_dim, 1);
    for (Param* p : {&wz_low, &wz_high, &wx_low, &wx_high, &q}) glorot_uniform(*p, rng);
  }
}

Eigen::Index FusionModule::output_dim() const {
  return variant_ == FusionVariant::kConcat ? 2 * embed_dim_ : embed_dim_;
}

ParamRefs FusionModule::params() {
  switch (variant_) {
    case FusionVariant::kGated: return {&w_c, &b_c};
    case FusionVariant::kAttention: return {&wz_low, &wz_high, &wx_low, &wx_high, &q};
    default: return {};
  }
}

Matrix FusionModule::forward(const Matrix& x, const Matrix& z_low, const Matrix& z_high,
                             Cache* cache) const {
  if (z_low.rows() != z_high.rows() || z_low.cols() != z_high.cols() || x.rows() != z_low.rows())
    throw ValidationError("fusion: input shapes disagree");
  if (z_low.cols() != embed_dim_) throw ValidationError("fusion: embedding width mismatch");
  Matrix out;
  switch (variant_) {
    case FusionVariant::kGated: {
      Matrix c = sigmoid(linear_forward(x, w_c, b_c));
      out = c.cwiseProduct(z_low) + (Matrix::Ones(c.rows(), c.cols()) - c).cwiseProduct(z_high);
      if (cache) cache->coeff = std::move(c);
      break;
    }
    case FusionVariant::kMean:
      out = 0.5 * (z_low + z_high);
      break;
    case FusionVariant::kConcat:
      out.resize(z_low.rows(), 2 * z_low.cols());
      out << z_low, z_high;
      break;
    case FusionVariant::kAttention: {
      Matrix a_low = (z_low * wz_low.value + x * wx_low.value).array().tanh().matrix();
      Matrix a_high = (z_high * wz_high.value + x * wx_high.value).array().tanh().matrix();
      const Vector omega_diff = a_low * q.value.col(0) - a_high * q.value.col(0);
      Vector alpha = omega_diff.unaryExpr([](double v) { return sigmoid(v); });
      out = alpha.asDiagonal() * z_low;
      out += (Vector::Ones(alpha.size()) - alpha).asDiagonal() * z_high;
      if (cache) {
        cache->act_low = std::move(a_low);
        cache->act_high = std::move(a_high);
        cache->alpha_low = std::move(alpha);
      }
      break;
    }
    case FusionVariant::kLowOnly:
      out = z_low;
      break;
    case FusionVariant::kHighOnly:
      out = z_high;
      break;
  }
  if (cache) {
    cache->x = x;
    cache->z_low = z_low;
    cache->z_high = z_high;
  }
  return out;
}

void FusionModule::backward(const Cache& cache, const Matrix& dz, const Matrix* dcoeff) {
  if (variant_ == FusionVariant::kGated) {
    Matrix dc = dz.cwiseProduct(cache.z_low - cache.z_high);
    if (dcoeff) dc += *dcoeff;
    const Matrix dpre =
        dc.cwiseProduct(cache.coeff).cwiseProduct(Matrix::Ones(dc.rows(), dc.cols()) - cache.coeff);
    linear_backward(cache.x, dpre, w_c, b_c);
  } else if (variant_ == FusionVariant::kAttention) {
    const Vector dalpha = dz.cwiseProduct(cache.z_low - cache.z_high).rowwise().sum();
    const Vector s = cache.alpha_low;
    const Vector ddiff = dalpha.cwiseProduct(s).cwiseProduct(Vector::Ones(s.size()) - s);
    q.grad.col(0) += cache.act_low.transpose() * ddiff - cache.act_high.transpose() * ddiff;
    const RowVector qt = q.value.col(0).transpose();
    const Matrix dpre_low =
        (ddiff * qt).cwiseProduct((1.0 - cache.act_low.array().square()).matrix());
    const Matrix dpre_high =
        (-ddiff * qt).cwiseProduct((1.0 - cache.act_high.array().square()).matrix());
    wz_low.grad.noalias() += cache.z_low.transpose() * dpre_low;
    wx_low.grad.noalias() += cache.x.transpose() * dpre_low;
    wz_high.grad.noalias() += cache.z_high.transpose() * dpre_high;
    wx_high.grad.noalias() += cache.x.transpose() * dpre_high;
  }
}

double reg_loss(const Matrix& coeff, const std::vector<int>& labels, const RegTargets& targets,
                Matrix* dcoeff) {
  if (static_cast<std::size_t>(coeff.rows()) != labels.size())
    throw ValidationError("regularizer: coefficient rows do not match labels");
  if (labels.empty()) throw ValidationError("regularizer needs labeled nodes");
  const double inv = 1.0 / static_cast<double>(labels.size());
  const double floor_log = std::log(kLogFloor);
  if (dcoeff) dcoeff->setZero(coeff.rows(), coeff.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < coeff.rows(); ++i) {
    const double p = labels[static_cast<std::size_t>(i)] == 1 ? targets.p_a : targets.p_n;
    const double c = coeff.row(i).mean();
    const double log_c = std::log(c);
    const double log_1c = std::log1p(-c);
    const bool clamp_c = !(log_c > floor_log);
    const bool clamp_1c = !(log_1c > floor_log);
    loss -= inv * (p * (clamp_c ? floor_log : log_c) + (1.0 - p) * (clamp_1c ? floor_log : log_1c));
    if (dcoeff) {
      double dc = 0.0;
      if (!clamp_c) dc -= p / c;
      if (!clamp_1c) dc += (1.0 - p) / (1.0 - c);
      dcoeff->row(i).setConstant(inv * dc / static_cast<double>(coeff.cols()));
    }
  }
  return loss;
}

double bce_with_logits(const Vector& logits, const std::vector<int>& labels, Vector* dlogits) {
  if (static_cast<std::size_t>(logits.size()) != labels.size())
    throw ValidationError("bce: logits and labels differ in length");
  if (labels.empty()) throw ValidationError("bce needs labeled nodes");
  const double inv = 1.0 / static_cast<double>(labels.size());
  if (dlogits) dlogits->resize(logits.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double sgn = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    loss -= inv * log_sigmoid_clamped(sgn * logits[i]);
    if (dlogits) (*dlogits)[i] = -inv * sgn * log_sigmoid_clamped_grad(sgn * logits[i]);
  }
  return loss;
}

double finetune_objective(const Vector& logits, const Matrix* coeff, const std::vector<int>& labels,
                          const RegTargets& targets, Vector* dlogits, Matrix* dcoeff) {
  double loss = bce_with_logits(logits, labels, dlogits);
  if (coeff) loss += reg_loss(*coeff, labels, targets, dcoeff);
  if (!std::isfinite(loss)) throw NumericError("fine-tuning loss is not finite");
  return loss;
}

FinetuneModel FinetuneModel::create(const FinetuneConfig& cfg, Eigen::Index feat_dim,
                                    Eigen::Index embed_dim, std::mt19937_64& rng) {
  FinetuneModel m;
  m.fusion = FusionModule(cfg.fusion, feat_dim, embed_dim, rng);
  m.head = Mlp("head", m.fusion.output_dim(), embed_dim, 1, cfg.activation, NormKind::kNone, rng);
  return m;
}

ParamRefs FinetuneModel::params() {
  ParamRefs out = fusion.params();
  for (Param* p : head.params()) out.push_back(p);
  return out;
}

Vector FinetuneModel::logits(const Matrix& x, const Matrix& z_low, const Matrix& z_high) const {
  return head.forward(fusion.forward(x, z_low, z_high)).col(0);
}

double finetune_step(FinetuneModel& model, const Matrix& x, const Matrix& z_low,
                     const Matrix& z_high, const std::vector<int>& labels,
                     const FinetuneConfig& cfg) {
  FusionModule::Cache fc;
  Mlp::Cache hc;
  const Matrix fused = model.fusion.forward(x, z_low, z_high, &fc);
  const Vector logits = model.head.forward(fused, &hc).col(0);
  const bool reg = cfg.use_reg && model.fusion.has_coefficients();
  Vector dlogits;
  Matrix dcoeff;
  const double loss = finetune_objective(logits, reg ? &fc.coeff : nullptr, labels, cfg.targets,
                                         &dlogits, reg ? &dcoeff : nullptr);
  const Matrix dfused = model.head.backward(hc, dlogits);
  model.fusion.backward(fc, dfused, reg ? &dcoeff : nullptr);
  return loss;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<NodeId>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(ids[i]);
  return out;
}

struct Labeled {
  std::vector<NodeId> ids;
  std::vector<int> labels;
};

Labeled labeled_subset(const std::vector<NodeId>& ids, const LabelVector& labels) {
  Labeled out;
  for (NodeId v : ids) {
    if (v >= labels.size()) throw ValidationError("split node id out of range");
    if (labels[v] == 0 || labels[v] == 1) {
      out.ids.push_back(v);
      out.labels.push_back(labels[v]);
    }
  }
  return out;
}

bool has_both_classes(const std::vector<int>& labels) {
  return std::count(labels.begin(), labels.end(), 1) > 0 &&
         std::count(labels.begin(), labels.end(), 0) > 0;
}

}  // namespace

FinetuneResult run_finetuning_embeddings(const Embeddings& z, const SparseGraph& g,
                                         const Matrix& x_raw, const LabelVector& labels,
                                         const SplitSpec& split, const FinetuneConfig& cfg) {
  if (labels.size() != g.num_nodes() || static_cast<std::size_t>(x_raw.rows()) != g.num_nodes())
    throw ValidationError("labels/features do not match graph size");
  if (cfg.epochs < 0) throw ValidationError("epochs must be non-negative");
  const Labeled train = labeled_subset(split.train, labels);
  const Labeled val = labeled_subset(split.val, labels);
  const Labeled test = labeled_subset(split.test, labels);
  if (train.ids.empty()) throw ValidationError("split has no labeled training nodes");
  if (!has_both_classes(val.labels))
    throw ValidationError("split validation set must contain both classes");
  if (!has_both_classes(test.labels))
    throw ValidationError("split test set must contain both classes");

  const Matrix x = cfg.standardize_features ? standardize(x_raw) : x_raw;
  const Matrix x_tr = gather_rows(x, train.ids);
  const Matrix zl_tr = gather_rows(z.low, train.ids);
  const Matrix zh_tr = gather_rows(z.high, train.ids);
  const Matrix x_val = gather_rows(x, val.ids);
  const Matrix zl_val = gather_rows(z.low, val.ids);
  const Matrix zh_val = gather_rows(z.high, val.ids);

  std::mt19937_64 rng(cfg.seed);
  FinetuneResult res;
  FinetuneModel model = FinetuneModel::create(cfg, x.cols(), z.low.cols(), rng);
  res.model = model;
  ParamRefs params = model.params();
  Adam opt(AdamConfig{.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay}, params);

  auto val_score = [&]() {
    const Vector s = model.logits(x_val, zl_val, zh_val);
    return auroc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), val.labels);
  };

  res.best_val_auroc = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    zero_grads(params);
    double loss = 0.0;
    try {
      loss = finetune_step(model, x_tr, zl_tr, zh_tr, train.labels, cfg);
      opt.step();
    } catch (const NumericError& err) {
      throw NumericError("fine-tuning diverged at epoch " + std::to_string(epoch) + ": " +
                         err.what());
    }
    res.train_loss.push_back(loss);
    const double v = val_score();
    res.val_auroc.push_back(v);
    if (v > res.best_val_auroc) {
      res.best_val_auroc = v;
      res.best_epoch = epoch;
      res.model = model;
    }
  }
  if (cfg.epochs == 0) {
    model = res.model;
    res.best_val_auroc = val_score();
  }

  res.scores = res.model.logits(x, z.low, z.high);
  {
    std::vector<double> ts;
    std::vector<std::optional<double>> th;
    const HomophilyStats hs = local_homophily(g.without_self_loops(), labels);
    for (NodeId v : test.ids) {
      ts.push_back(res.scores[v]);
      th.push_back(hs.per_node[v]);
    }
    res.test = evaluate(ts, test.labels);
    res.test.quartiles = quartile_analysis(ts, test.labels, th);
  }
  res.test.seed = split.seed;
  res.test.split_id = "seed-" + std::to_string(split.seed);
  return res;
}

FinetuneResult run_finetuning(const DualEncoder& encoder, const SparseGraph& g, const Matrix& x,
                              const LabelVector& labels, const SplitSpec& split,
                              const FinetuneConfig& cfg) {
  const SparseGraph lg = learning_graph(g);
  const Embeddings z = encode(encoder, lg, x, estimate_lambda_max(lg));
  return run_finetuning_embeddings(z, g, x, labels, split, cfg);
}

}  // namespace apf
