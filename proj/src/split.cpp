#include "apf/split.hpp"

#include "apf/errors.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace apf {

namespace {

// Partial Fisher-Yates: the first k entries become a uniform sample.
std::vector<NodeId> draw(std::vector<NodeId> pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

SplitSpec sample_split(const LabelVector& labels, std::uint64_t seed, const SplitConfig& cfg) {
  std::vector<NodeId> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) pos.push_back(static_cast<NodeId>(i));
    if (labels[i] == 0) neg.push_back(static_cast<NodeId>(i));
  }
  const std::size_t copies = cfg.with_val && !cfg.shared_val ? 2 : 1;
  if (pos.size() < copies * cfg.n_pos)
    throw ValidationError("split needs " + std::to_string(copies * cfg.n_pos) +
                          " anomalies, only " + std::to_string(pos.size()) + " labeled");
  if (neg.size() < copies * cfg.n_neg)
    throw ValidationError("split needs " + std::to_string(copies * cfg.n_neg) +
                          " normals, only " + std::to_string(neg.size()) + " labeled");

  std::mt19937_64 rng(seed);
  const auto pos_pick = draw(pos, copies * cfg.n_pos, rng);
  const auto neg_pick = draw(neg, copies * cfg.n_neg, rng);

  SplitSpec s;
  s.seed = seed;
  s.train.assign(pos_pick.begin(), pos_pick.begin() + static_cast<std::ptrdiff_t>(cfg.n_pos));
  s.train.insert(s.train.end(), neg_pick.begin(),
                 neg_pick.begin() + static_cast<std::ptrdiff_t>(cfg.n_neg));
  if (cfg.with_val) {
    if (cfg.shared_val) {
      s.val = s.train;
      s.shared_val = true;
    } else {
      s.val.assign(pos_pick.begin() + static_cast<std::ptrdiff_t>(cfg.n_pos), pos_pick.end());
      s.val.insert(s.val.end(), neg_pick.begin() + static_cast<std::ptrdiff_t>(cfg.n_neg),
                   neg_pick.end());
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());

  std::vector<bool> used(labels.size(), false);
  for (NodeId v : s.train) used[v] = true;
  for (NodeId v : s.val) used[v] = true;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!used[i]) s.test.push_back(static_cast<NodeId>(i));
  return s;
}

}  // namespace apf
