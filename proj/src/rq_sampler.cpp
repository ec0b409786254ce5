#include "apf/rq_sampler.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <thread>
#include <unordered_map>

namespace apf {

double induced_rq(const SparseGraph& g, const Matrix& x, std::span<const NodeId> members,
                  double epsilon) {
  std::vector<NodeId> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  double num = 0.0, den = 0.0;
  for (NodeId i : sorted) {
    den += x.row(i).squaredNorm();
    for (NodeId j : g.neighbors(i))
      if (i < j && std::binary_search(sorted.begin(), sorted.end(), j))
        num += (x.row(i) - x.row(j)).squaredNorm();
  }
  return den > epsilon ? num / den : 0.0;
}

namespace {

struct LocalEdge {
  std::size_t to;
  double energy;
};

// Articulation points of the alive part of a connected local graph,
// iterative Tarjan rooted at `root`.
std::vector<char> articulation_points(const std::vector<std::vector<LocalEdge>>& adj,
                                      const std::vector<char>& alive, std::size_t root) {
  const std::size_t n = adj.size();
  std::vector<char> cut(n, 0);
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<std::size_t> parent(n, n), next_edge(n, 0);
  int timer = 0;
  std::size_t root_children = 0;

  std::vector<std::size_t> stack{root};
  disc[root] = low[root] = timer++;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    if (next_edge[u] < adj[u].size()) {
      const std::size_t v = adj[u][next_edge[u]++].to;
      if (!alive[v]) continue;
      if (disc[v] < 0) {
        parent[v] = u;
        disc[v] = low[v] = timer++;
        if (u == root) ++root_children;
        stack.push_back(v);
      } else if (v != parent[u]) {
        low[u] = std::min(low[u], disc[v]);
      }
      continue;
    }
    stack.pop_back();
    const std::size_t p = parent[u];
    if (p != n) {
      low[p] = std::min(low[p], low[u]);
      if (p != root && low[u] >= disc[p]) cut[p] = 1;
    }
  }
  if (root_children > 1) cut[root] = 1;
  return cut;
}

}  // namespace

RqSubgraph sample_rq_subgraph(const SparseGraph& g, const Matrix& x, NodeId center,
                              const SamplerConfig& cfg) {
  if (center >= g.num_nodes()) throw ValidationError("sampler center out of range");
  if (cfg.candidate_budget < 1) throw ValidationError("candidate budget must be at least 1");
  if (cfg.hop_limit < 1) throw ValidationError("hop limit must be at least 1");

  // BFS ball truncated in visiting order; every prefix of a BFS order is connected.
  std::vector<NodeId> order{center};
  std::unordered_map<NodeId, std::size_t> local{{center, 0}};
  std::vector<int> depth{0};
  for (std::size_t head = 0; head < order.size() && order.size() < cfg.candidate_budget;
       ++head) {
    if (depth[head] >= cfg.hop_limit) break;
    for (NodeId j : g.neighbors(order[head])) {
      if (local.contains(j)) continue;
      local.emplace(j, order.size());
      order.push_back(j);
      depth.push_back(depth[head] + 1);
      if (order.size() >= cfg.candidate_budget) break;
    }
  }

  RqSubgraph out;
  out.center = center;
  out.hop_limit = cfg.hop_limit;
  const std::size_t m = order.size();
  if (m == 1) {
    out.members = {center};
    out.rq_value = 0.0;
    return out;
  }

  std::vector<std::vector<LocalEdge>> adj(m);
  std::vector<double> sq(m), incident(m, 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    sq[a] = x.row(order[a]).squaredNorm();
    den += sq[a];
    for (NodeId j : g.neighbors(order[a])) {
      auto it = local.find(j);
      if (it == local.end() || it->second == a) continue;
      const std::size_t b = it->second;
      const double e = (x.row(order[a]) - x.row(j)).squaredNorm();
      adj[a].push_back({b, e});
      incident[a] += e;
      if (order[a] < j) num += e;
    }
  }

  auto rq_of = [&](double nu, double de) { return de > cfg.epsilon ? nu / de : 0.0; };
  std::vector<char> alive(m, 1);
  double current = rq_of(num, den);

  for (std::size_t step = 1; step < m; ++step) {
    const auto cut = articulation_points(adj, alive, 0);
    std::size_t pick = m;
    double best = current;
    for (std::size_t a = 1; a < m; ++a) {
      if (!alive[a] || cut[a]) continue;
      const double cand = rq_of(num - incident[a], den - sq[a]);
      const double slack = 1e-12 * std::max(1.0, std::abs(best));
      if (cand > best + slack) {
        pick = a;
        best = cand;
      } else if (pick != m && std::abs(cand - best) <= slack && order[a] < order[pick]) {
        pick = a;  // ties go to the smaller node id
      }
    }
    if (pick == m) break;
    alive[pick] = 0;
    num -= incident[pick];
    den -= sq[pick];
    for (const auto& e : adj[pick])
      if (alive[e.to]) incident[e.to] -= e.energy;
    current = rq_of(num, den);
  }

  for (std::size_t a = 0; a < m; ++a)
    if (alive[a]) out.members.push_back(order[a]);
  std::sort(out.members.begin(), out.members.end());
  out.rq_value = induced_rq(g, x, out.members, cfg.epsilon);
  return out;
}

std::vector<RqSubgraph> sample_all(const SparseGraph& g, const Matrix& x,
                                   const SamplerConfig& cfg) {
  const std::size_t n = g.num_nodes();
  std::vector<RqSubgraph> out(n);
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, n));
  if (workers == 1) {
    for (NodeId i = 0; i < n; ++i) out[i] = sample_rq_subgraph(g, x, i, cfg);
    return out;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers)
          out[i] = sample_rq_subgraph(g, x, static_cast<NodeId>(i), cfg);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace apf
