#pragma once

#include "apf/graph.hpp"

#include <vector>

namespace apf {

struct SamplerConfig {
  int hop_limit = 2;                  // 1 or 2
  std::size_t candidate_budget = 256;  // max candidate nodes, BFS order
  double epsilon = 1e-12;             // denominators at or below this give RQ 0
  unsigned threads = 1;
};

/// Rayleigh-quotient-maximizing connected subgraph around one center.
struct RqSubgraph {
  NodeId center = 0;
  std::vector<NodeId> members;  // sorted, contains center
  double rq_value = 0.0;
  int hop_limit = 2;

  bool operator==(const RqSubgraph&) const = default;
};

/// RQ of the subgraph induced by `members` on the rows of `x`, summed over
/// feature columns. Edges leaving the member set are ignored.
double induced_rq(const SparseGraph& g, const Matrix& x, std::span<const NodeId> members,
                  double epsilon = 1e-12);

/// Greedy shrink: starts from the BFS ball of radius hop_limit (truncated to
/// the candidate budget) and repeatedly drops the non-center node whose
/// removal keeps the set connected and raises the RQ the most. Stops when
/// no removal improves it.
RqSubgraph sample_rq_subgraph(const SparseGraph& g, const Matrix& x, NodeId center,
                              const SamplerConfig& cfg);

/// One subgraph per node; centers are independent so work is split across
/// cfg.threads workers. Output does not depend on the thread count.
std::vector<RqSubgraph> sample_all(const SparseGraph& g, const Matrix& x,
                                   const SamplerConfig& cfg);

}  // namespace apf
