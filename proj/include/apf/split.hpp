#pragma once

#include "apf/graph.hpp"

#include <cstdint>
#include <vector>

namespace apf {

struct SplitSpec {
  std::uint64_t seed = 0;
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;  // every node outside train and val
  bool shared_val = false;   // val == train

  bool operator==(const SplitSpec&) const = default;
};

struct SplitConfig {
  std::size_t n_pos = 20;
  std::size_t n_neg = 80;
  bool with_val = true;
  bool shared_val = false;
};

/// Stratified draw without replacement. Validation has the same composition
/// and is disjoint from train unless shared_val is set. All id lists sorted.
/// Throws ValidationError when a class has too few labeled nodes.
SplitSpec sample_split(const LabelVector& labels, std::uint64_t seed, const SplitConfig& cfg = {});

}  // namespace apf
