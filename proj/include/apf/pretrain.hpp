#pragma once

#include "apf/autodiff.hpp"
#include "apf/rq_sampler.hpp"
#include "apf/spectral.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <optional>
#include <vector>

namespace apf {

/// Two spectral encoders that share one set of raw gamma parameters: the
/// low-pass branch and the high-pass branch each have their own MLP.
struct DualEncoder {
  int order = 2;
  Eigen::Index embed_dim = 0;
  Param gamma;  // (K+1) x 1 raw parameters
  Mlp mlp_low;
  Mlp mlp_high;

  static DualEncoder create(Eigen::Index in_dim, Eigen::Index embed_dim, int order,
                            ActivationKind act, NormKind norm, std::mt19937_64& rng);

  PolyFilter low_filter() const;
  PolyFilter high_filter() const;
  ParamRefs params();
};

/// Bilinear discriminators D(z, s) = sigmoid(z^T W s), one per branch.
struct Discriminators {
  Param w_low;
  Param w_high;

  static Discriminators create(Eigen::Index embed_dim, std::mt19937_64& rng);
  ParamRefs params();
};

struct PretrainConfig {
  int epochs = 800;
  int patience = 20;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  Eigen::Index embed_dim = 64;
  int order = 2;
  ActivationKind activation = ActivationKind::kPrelu;
  NormKind norm = NormKind::kNone;
  bool independent_shuffles = false;
  /// Feed standardized embeddings to the discriminators. Off by default:
  /// the column mean of a standardized matrix is zero, which would make the
  /// global summary vanish. Embeddings handed to fine-tuning are always
  /// standardized.
  bool standardize_in_loss = false;
  std::uint64_t seed = 0;
};

/// Filtered inputs g(H) X for both branches, plus what backward needs.
struct EncoderCache {
  std::vector<Matrix> basis;  // T_k(H) X
  Vector w_low, w_high;
  Mlp::Cache mlp_low, mlp_high;
  bool standardized = true;
  StandardizeCache std_low, std_high;
};

struct Embeddings {
  Matrix low;
  Matrix high;
};

/// Z_L = standardize(f_L(g_L(H) X)) and Z_H likewise.
Embeddings encode(const DualEncoder& enc, const SparseGraph& g, const Matrix& x,
                  double lambda_max, EncoderCache* cache = nullptr);
/// Same, reusing a precomputed Chebyshev basis of X. With `standardized`
/// false the raw MLP outputs are returned.
Embeddings encode_basis(const DualEncoder& enc, std::vector<Matrix> basis,
                        EncoderCache* cache = nullptr, bool standardized = true);
/// Accumulates parameter gradients for one encode_basis call.
void encode_backward(DualEncoder& enc, const EncoderCache& cache, const Matrix& dz_low,
                     const Matrix& dz_high);

/// Uniform random permutation of 0..n-1 drawn from `rng`.
std::vector<NodeId> random_permutation(std::size_t n, std::mt19937_64& rng);
/// Row i of the result is row perm[i] of x.
Matrix permute_rows(const Matrix& x, const std::vector<NodeId>& perm);
/// Row-shuffled copy of x; the graph is untouched.
Matrix corrupt(const Matrix& x, std::uint64_t seed);

/// n x n averaging operator: row i holds 1/|S_i| on the members of S_i.
Eigen::SparseMatrix<double, Eigen::RowMajor> summary_operator(
    const std::vector<RqSubgraph>& subgraphs, std::size_t n);

struct Summaries {
  RowVector low;  // column mean of Z_L
  Matrix high;    // row i: mean of Z_H over the subgraph of node i
};

Summaries summaries(const Matrix& z_low, const Matrix& z_high,
                    const std::vector<RqSubgraph>& subgraphs);

struct PretrainLossGrad {
  Matrix z_low, z_low_neg, z_high, z_high_neg;
  RowVector s_low;
  Matrix s_high;
};

/// Mean over nodes of the two-branch contrastive loss. Negatives are scored
/// against the clean summaries. Gradients w.r.t. the discriminators are
/// accumulated in place; input gradients go to `grad` when set.
double pretrain_loss(const Matrix& z_low, const Matrix& z_low_neg, const Matrix& z_high,
                     const Matrix& z_high_neg, const RowVector& s_low, const Matrix& s_high,
                     Discriminators& disc, PretrainLossGrad* grad = nullptr);

/// Graph used for filtering: `g` itself when it already has self-loops,
/// otherwise a copy with one loop per node.
SparseGraph learning_graph(const SparseGraph& g);

/// Precomputed, parameter-independent pieces of the pretraining problem.
/// The graph is stored with self-loops (see learning_graph).
struct PretrainContext {
  SparseGraph graph;
  Matrix x;
  double lambda_max = 2.0;
  std::vector<Matrix> basis;
  Eigen::SparseMatrix<double, Eigen::RowMajor> summary_op;
  bool standardize = false;  // see PretrainConfig::standardize_in_loss

  static PretrainContext make(const SparseGraph& g, const Matrix& x,
                              const std::vector<RqSubgraph>& subgraphs, int order,
                              bool standardize = false);
};

/// Full forward and backward for one step. `perm_high` defaults to `perm_low`.
/// Gradients accumulate into the encoder and discriminator parameters.
double pretrain_step(DualEncoder& enc, Discriminators& disc, const PretrainContext& ctx,
                     const std::vector<NodeId>& perm_low,
                     const std::vector<NodeId>* perm_high = nullptr);

struct PretrainResult {
  DualEncoder encoder;
  Discriminators disc;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int best_epoch = 0;  // 0 means the initialization
  int epochs_run = 0;
  std::vector<double> loss_history;
};

/// Adam on the full graph (self-loops added) with early stopping on the training loss. Throws
/// NumericError with the epoch number on divergence.
PretrainResult run_pretraining(const SparseGraph& g, const Matrix& x,
                               const std::vector<RqSubgraph>& subgraphs,
                               const PretrainConfig& cfg);

}  // namespace apf
