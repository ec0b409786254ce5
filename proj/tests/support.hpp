#pragma once

// Dense reference implementations and small-graph generators shared by the
// unit tests and the acceptance runner.

#include "apf/graph.hpp"
#include "apf/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace apf::oracle {

inline Matrix dense_adjacency(const SparseGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Matrix a = Matrix::Zero(n, n);
  for (NodeId i = 0; i < g.num_nodes(); ++i)
    for (NodeId j : g.neighbors(i)) a(i, j) = 1.0;
  return a;
}

inline Matrix dense_laplacian(const SparseGraph& g) {
  Matrix a = dense_adjacency(g);
  a.diagonal().setZero();
  Matrix l = -a;
  l.diagonal() = a.rowwise().sum();
  return l;
}

// I - D^-1/2 A D^-1/2 with D the row lengths (a loop counts once).
inline Matrix dense_sym_laplacian(const SparseGraph& g) {
  const Matrix a = dense_adjacency(g);
  const auto n = a.rows();
  Vector inv = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (g.degree(static_cast<NodeId>(i)) > 0)
      inv[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(i))));
  return Matrix::Identity(n, n) - inv.asDiagonal() * a * inv.asDiagonal();
}

inline double dense_lambda_max(const SparseGraph& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(dense_sym_laplacian(g));
  return es.eigenvalues().maxCoeff();
}

// U g(lambda) U^T X with g the Chebyshev polynomial in the scaled variable.
inline Matrix dense_filter(const SparseGraph& g, const Matrix& x, const Vector& weights,
                           double lambda_max) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(dense_sym_laplacian(g));
  Vector resp(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < resp.size(); ++i)
    resp[i] = chebyshev_eval(weights, 2.0 * es.eigenvalues()[i] / lambda_max - 1.0);
  return es.eigenvectors() * resp.asDiagonal() * es.eigenvectors().transpose() * x;
}

// Ring backbone plus random chords, so every node has a neighbor.
inline SparseGraph random_connected_graph(std::size_t n, double p, bool loops,
                                          std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    if (n > 1) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>((i + 1) % n));
    for (std::size_t j = i + 2; j < n; ++j)
      if (coin(rng)) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
  }
  return SparseGraph::build(edges, n, loops);
}

inline SparseGraph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
  return SparseGraph::build(edges, n, false);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

struct GeometricGraph {
  SparseGraph graph;
  std::vector<double> px, py;
};

// Uniform points in the unit square joined within `radius`; each point is
// also joined to its predecessor in x order so the graph is connected.
inline GeometricGraph random_geometric_graph(std::size_t n, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  GeometricGraph out;
  for (std::size_t i = 0; i < n; ++i) {
    out.px.push_back(unif(rng));
    out.py.push_back(unif(rng));
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::hypot(out.px[i] - out.px[j], out.py[i] - out.py[j]) < radius)
        edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return out.px[a] < out.px[b]; });
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(order[i - 1], order[i]);
  out.graph = SparseGraph::build(edges, n, false);
  return out;
}

// Rank of j relative to i: j precedes i when it scores higher, or equal with
// a smaller index.
inline bool precedes(std::span<const double> s, std::size_t j, std::size_t i) {
  return s[j] > s[i] || (s[j] == s[i] && j < i);
}

inline double brute_auroc(std::span<const double> s, std::span<const int> y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / pairs;
}

inline double brute_auprc(std::span<const double> s, std::span<const int> y) {
  double sum = 0.0, pos = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    pos += 1.0;
    double above = 0.0, above_pos = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (j == i || precedes(s, j, i)) {
        above += 1.0;
        above_pos += y[j] == 1 ? 1.0 : 0.0;
      }
    sum += above_pos / above;
  }
  return sum / pos;
}

inline double brute_rec_at_k(std::span<const double> s, std::span<const int> y) {
  std::size_t k = 0;
  for (int v : y) k += v == 1 ? 1 : 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (precedes(s, j, i)) ++rank;
    if (rank < k && y[i] == 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace apf::oracle
