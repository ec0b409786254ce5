#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace apf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Undirected 0/1 graph stored in compressed-row form. Every undirected
/// edge appears in both endpoint rows; a self-loop appears once in its row.
class SparseGraph {
 public:
  SparseGraph() = default;

  /// Deduplicates and symmetrizes `edges`. Input self-pairs are dropped;
  /// when `add_self_loops` is set every node gets exactly one loop.
  static SparseGraph build(std::span<const Edge> edges, std::size_t num_nodes,
                           bool add_self_loops);

  std::size_t num_nodes() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  /// Undirected edges, self-loops excluded.
  std::size_t num_edges() const { return num_edges_; }
  bool has_self_loops() const { return self_loops_; }

  std::span<const NodeId> neighbors(NodeId i) const {
    return {col_idx_.data() + row_ptr_[i], col_idx_.data() + row_ptr_[i + 1]};
  }
  /// Row length, so a self-loop counts once.
  std::size_t degree(NodeId i) const { return row_ptr_[i + 1] - row_ptr_[i]; }
  const std::vector<std::size_t>& degrees() const { return degrees_; }
  bool has_edge(NodeId i, NodeId j) const;

  /// Each undirected non-loop edge once, with first < second, sorted.
  std::vector<Edge> edge_list() const;

  SparseGraph with_self_loops() const;
  SparseGraph without_self_loops() const;

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<NodeId>& col_idx() const { return col_idx_; }

 private:
  std::vector<std::size_t> row_ptr_;
  std::vector<NodeId> col_idx_;
  std::vector<std::size_t> degrees_;
  std::size_t num_edges_ = 0;
  bool self_loops_ = false;
};

/// Per-node labels: 0 normal, 1 anomaly, -1 unknown.
using LabelVector = std::vector<int>;

enum class LaplacianKind {
  kUnnormalized,   // L = D - A
  kSymNormalized,  // I - D^-1/2 A D^-1/2
  kScaled,         // 2 Lsym / lambda_max - I
  kRandomWalk,     // S = D^-1 A
};

/// Applies the selected operator to every column of `x` without forming it.
/// Throws ValidationError on a zero-degree row for the normalized variants.
Matrix laplacian_apply(const SparseGraph& g, const Matrix& x, LaplacianKind kind,
                       double lambda_max = 2.0);

/// Power iteration for the largest eigenvalue of the symmetric normalized
/// Laplacian. Isolated rows are treated as zero rows. Returns 2.0 when the
/// iteration has not settled within `max_iter` steps.
double estimate_lambda_max(const SparseGraph& g, double tol = 1e-6, int max_iter = 100);

struct HomophilyStats {
  /// Empty when the node is unlabeled or has no labeled neighbors.
  std::vector<std::optional<double>> per_node;
  /// NaN when no anomaly (resp. normal) node has a defined value.
  double mean_abnormal = 0.0;
  double mean_normal = 0.0;
};

/// Fraction of labeled neighbors sharing the node's label. Unknown-label
/// neighbors and self-loops are excluded from both counts.
HomophilyStats local_homophily(const SparseGraph& g, const LabelVector& labels);

}  // namespace apf
