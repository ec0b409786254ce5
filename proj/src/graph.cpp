#include "apf/graph.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace apf {

SparseGraph SparseGraph::build(std::span<const Edge> edges, std::size_t num_nodes,
                               bool add_self_loops) {
  if (num_nodes == 0) throw ValidationError("graph must have at least one node");
  if (num_nodes > std::numeric_limits<NodeId>::max())
    throw ValidationError("node count exceeds 32-bit id range");

  std::vector<std::vector<NodeId>> rows(num_nodes);
  for (const auto& [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) {
      throw ValidationError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    }
    if (u == v) continue;
    rows[u].push_back(v);
    rows[v].push_back(u);
  }

  SparseGraph g;
  g.self_loops_ = add_self_loops;
  g.row_ptr_.reserve(num_nodes + 1);
  g.row_ptr_.push_back(0);
  std::size_t directed = 0;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    auto& r = rows[i];
    if (add_self_loops) r.push_back(static_cast<NodeId>(i));
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    g.col_idx_.insert(g.col_idx_.end(), r.begin(), r.end());
    g.row_ptr_.push_back(g.col_idx_.size());
    g.degrees_.push_back(r.size());
    directed += r.size() - (add_self_loops ? 1 : 0);
    std::vector<NodeId>().swap(r);
  }
  g.num_edges_ = directed / 2;
  return g;
}

bool SparseGraph::has_edge(NodeId i, NodeId j) const {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<Edge> SparseGraph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(num_edges_);
  for (NodeId i = 0; i < num_nodes(); ++i)
    for (NodeId j : neighbors(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

SparseGraph SparseGraph::with_self_loops() const {
  auto e = edge_list();
  return build(e, num_nodes(), true);
}

SparseGraph SparseGraph::without_self_loops() const {
  auto e = edge_list();
  return build(e, num_nodes(), false);
}

namespace {

void require_positive_degree(const SparseGraph& g, NodeId i) {
  if (g.degree(i) == 0) {
    throw ValidationError("node " + std::to_string(i) +
                          " has zero degree; add self-loops before normalizing");
  }
}

}  // namespace

Matrix laplacian_apply(const SparseGraph& g, const Matrix& x, LaplacianKind kind,
                       double lambda_max) {
  const auto n = g.num_nodes();
  if (static_cast<std::size_t>(x.rows()) != n)
    throw ValidationError("signal has " + std::to_string(x.rows()) + " rows, graph has " +
                          std::to_string(n) + " nodes");
  Matrix out(x.rows(), x.cols());

  if (kind == LaplacianKind::kUnnormalized) {
    for (NodeId i = 0; i < n; ++i) {
      auto row = out.row(i);
      row = static_cast<double>(g.degree(i)) * x.row(i);
      for (NodeId j : g.neighbors(i)) row -= x.row(j);
    }
    return out;
  }

  if (kind == LaplacianKind::kRandomWalk) {
    for (NodeId i = 0; i < n; ++i) {
      require_positive_degree(g, i);
      auto row = out.row(i);
      row.setZero();
      for (NodeId j : g.neighbors(i)) row += x.row(j);
      row /= static_cast<double>(g.degree(i));
    }
    return out;
  }

  std::vector<double> inv_sqrt(n);
  for (NodeId i = 0; i < n; ++i) {
    require_positive_degree(g, i);
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));
  }
  // Lsym x = x - D^-1/2 A D^-1/2 x
  for (NodeId i = 0; i < n; ++i) {
    auto row = out.row(i);
    row.setZero();
    for (NodeId j : g.neighbors(i)) row += inv_sqrt[j] * x.row(j);
    row = x.row(i) - inv_sqrt[i] * row;
  }
  if (kind == LaplacianKind::kScaled) {
    if (!(lambda_max > 0.0) || !std::isfinite(lambda_max))
      throw ValidationError("scaled Laplacian needs a positive lambda_max");
    out = (2.0 / lambda_max) * out - x;
  }
  return out;
}

double estimate_lambda_max(const SparseGraph& g, double tol, int max_iter) {
  const auto n = g.num_nodes();
  if (n == 0) return 0.0;

  std::vector<double> inv_sqrt(n, 0.0);
  for (NodeId i = 0; i < n; ++i)
    if (g.degree(i) > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));

  auto apply = [&](const Vector& v) {
    Vector out(n);
    for (NodeId i = 0; i < n; ++i) {
      if (g.degree(i) == 0) {
        out[i] = 0.0;
        continue;
      }
      double acc = 0.0;
      for (NodeId j : g.neighbors(i)) acc += inv_sqrt[j] * v[j];
      out[i] = v[i] - inv_sqrt[i] * acc;
    }
    return out;
  };

  std::mt19937_64 rng(0x5eed1a3bULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector v(n);
  for (auto& e : v) e = unif(rng);
  v.normalize();

  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = apply(v);
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm < 1e-300) return 0.0;
    // residual of the Rayleigh pair bounds the distance to the spectrum
    const double residual = (w - next * v).norm();
    v = w / norm;
    if (it > 0 && std::abs(next - lambda) < tol && residual < std::sqrt(tol)) return next;
    lambda = next;
  }
  return 2.0;
}

HomophilyStats local_homophily(const SparseGraph& g, const LabelVector& labels) {
  const auto n = g.num_nodes();
  if (labels.size() != n) throw ValidationError("label vector length does not match graph");
  HomophilyStats s;
  s.per_node.resize(n);
  double sum_a = 0.0, sum_n = 0.0;
  std::size_t cnt_a = 0, cnt_n = 0;
  for (NodeId i = 0; i < n; ++i) {
    const int yi = labels[i];
    if (yi != 0 && yi != 1) continue;
    std::size_t same = 0, total = 0;
    for (NodeId j : g.neighbors(i)) {
      if (j == i) continue;
      const int yj = labels[j];
      if (yj != 0 && yj != 1) continue;
      ++total;
      if (yj == yi) ++same;
    }
    if (total == 0) continue;
    const double h = static_cast<double>(same) / static_cast<double>(total);
    s.per_node[i] = h;
    if (yi == 1) {
      sum_a += h;
      ++cnt_a;
    } else {
      sum_n += h;
      ++cnt_n;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.mean_abnormal = cnt_a ? sum_a / static_cast<double>(cnt_a) : nan;
  s.mean_normal = cnt_n ? sum_n / static_cast<double>(cnt_n) : nan;
  return s;
}

}  // namespace apf
