#pragma once

#include "apf/autodiff.hpp"
#include "apf/metrics.hpp"
#include "apf/pretrain.hpp"
#include "apf/split.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace apf {

enum class FusionVariant { kGated, kMean, kConcat, kAttention, kLowOnly, kHighOnly };

FusionVariant parse_fusion(std::string_view name);
std::string_view to_string(FusionVariant v);

struct RegTargets {
  double p_a = 0.2;
  double p_n = 0.9;
};

/// Combines frozen low- and high-pass embeddings into one matrix.
/// Gated: C = sigmoid(X W_c + b_c), Z = C * Z_L + (1 - C) * Z_H.
/// Attention: per-node softmax over q^T tanh(W_Z z + W_X x) scores.
class FusionModule {
 public:
  struct Cache {
    Matrix x, z_low, z_high;
    Matrix coeff;           // gated: C
    Matrix act_low, act_high;  // attention: tanh activations
    Vector alpha_low;       // attention: weight on Z_L
  };

  FusionModule() = default;
  FusionModule(FusionVariant v, Eigen::Index feat_dim, Eigen::Index embed_dim, std::mt19937_64& rng);

  FusionVariant variant() const { return variant_; }
  Eigen::Index output_dim() const;
  bool has_coefficients() const { return variant_ == FusionVariant::kGated; }

  Matrix forward(const Matrix& x, const Matrix& z_low, const Matrix& z_high,
                 Cache* cache = nullptr) const;
  /// `dcoeff` adds an external gradient on C (the regularizer); gated only.
  void backward(const Cache& cache, const Matrix& dz, const Matrix* dcoeff = nullptr);

  ParamRefs params();

  Param w_c, b_c;                          // gated
  Param wz_low, wz_high, wx_low, wx_high;  // attention
  Param q;

 private:
  FusionVariant variant_ = FusionVariant::kGated;
  Eigen::Index embed_dim_ = 0;
};

/// Mean binary cross-entropy between each row mean of C and its class
/// target; every labeled row shares the 1/|labeled| normalizer.
double reg_loss(const Matrix& coeff, const std::vector<int>& labels, const RegTargets& targets,
                Matrix* dcoeff = nullptr);

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.
double bce_with_logits(const Vector& logits, const std::vector<int>& labels,
                       Vector* dlogits = nullptr);

/// bce + reg. `coeff` may be null (no regularizer).
double finetune_objective(const Vector& logits, const Matrix* coeff, const std::vector<int>& labels,
                          const RegTargets& targets, Vector* dlogits = nullptr,
                          Matrix* dcoeff = nullptr);

struct FinetuneConfig {
  int epochs = 500;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  RegTargets targets;
  bool use_reg = true;
  FusionVariant fusion = FusionVariant::kGated;
  ActivationKind activation = ActivationKind::kRelu;
  bool standardize_features = true;
  std::uint64_t seed = 0;
};

/// Fusion network plus the two-layer classification head.
struct FinetuneModel {
  FusionModule fusion;
  Mlp head;

  static FinetuneModel create(const FinetuneConfig& cfg, Eigen::Index feat_dim,
                              Eigen::Index embed_dim, std::mt19937_64& rng);
  ParamRefs params();
  /// One logit per row.
  Vector logits(const Matrix& x, const Matrix& z_low, const Matrix& z_high) const;
};

/// Loss on the given rows; accumulates parameter gradients.
double finetune_step(FinetuneModel& model, const Matrix& x, const Matrix& z_low,
                     const Matrix& z_high, const std::vector<int>& labels,
                     const FinetuneConfig& cfg);

struct FinetuneResult {
  FinetuneModel model;
  int best_epoch = 0;
  double best_val_auroc = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_auroc;
  Vector scores;  // logits for every node from the selected snapshot
  EvalReport test;
};

/// Trains fusion and head on frozen embeddings, keeps the epoch with the best
/// validation AUROC (earliest on ties) and reports test metrics for it.
/// Embeddings come from `encoder` on learning_graph(g).
FinetuneResult run_finetuning(const DualEncoder& encoder, const SparseGraph& g, const Matrix& x,
                              const LabelVector& labels, const SplitSpec& split,
                              const FinetuneConfig& cfg);

/// Same, from precomputed embeddings.
FinetuneResult run_finetuning_embeddings(const Embeddings& z, const SparseGraph& g,
                                         const Matrix& x, const LabelVector& labels,
                                         const SplitSpec& split, const FinetuneConfig& cfg);

}  // namespace apf
