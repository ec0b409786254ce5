#pragma once

#include "apf/graph.hpp"
#include "apf/rq_sampler.hpp"
#include "apf/split.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace apf {

// Bundle directory layout:
//   meta.json     format tag, version, counts, table hashes
//   edges.csv     "src,dst" header, then one undirected edge per line
//   features.csv  one comma-separated row per node  (or features.bin)
//   labels.csv    one of 0, 1, -1 per line
//   splits.json   optional list of splits
//   rq_cache.json optional cached sampler output

inline constexpr int kBundleVersion = 1;
inline constexpr std::string_view kBundleFormat = "apf-graph-bundle";

std::string sha256_hex(std::string_view bytes);

struct BundleMeta {
  int version = kBundleVersion;
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::size_t feature_dim = 0;
  std::string features_file = "features.csv";
  bool has_splits = false;
  std::string edges_hash, features_hash, labels_hash;

  /// Hash over the edge and feature tables; keys the RQ cache.
  std::string source_hash() const;
};

struct GraphBundle {
  SparseGraph graph;  // no self-loops
  Matrix x;
  LabelVector labels;
  std::vector<SplitSpec> splits;
  BundleMeta meta;
  std::filesystem::path dir;
};

struct BundleWriteOptions {
  bool binary_features = false;
};

/// Validates every table against meta.json. Errors name the file and line.
GraphBundle load_bundle(const std::filesystem::path& dir);

/// Writes all tables plus meta.json; returns the written meta.
BundleMeta save_bundle(const std::filesystem::path& dir, const SparseGraph& g, const Matrix& x,
                       const LabelVector& labels, const std::vector<SplitSpec>& splits = {},
                       const BundleWriteOptions& opts = {});

/// Replaces splits.json and updates meta.json accordingly.
void save_splits(const std::filesystem::path& dir, const std::vector<SplitSpec>& splits);

/// Binary feature table: 8-byte magic, uint64 rows, uint64 cols, then
/// little-endian float32 values row by row.
void write_feature_binary(const std::filesystem::path& file, const Matrix& x);
Matrix read_feature_binary(const std::filesystem::path& file);

std::string rq_cache_key(const BundleMeta& meta, const SamplerConfig& cfg);

void save_rq_cache(const std::filesystem::path& file, const std::string& key,
                   const SamplerConfig& cfg, const std::vector<RqSubgraph>& subgraphs);

/// Cached subgraphs when the file exists and its key matches `key`;
/// std::nullopt when missing or stale. Malformed files throw.
std::optional<std::vector<RqSubgraph>> load_rq_cache(const std::filesystem::path& file,
                                                     const std::string& key);

/// Reads <bundle>/rq_cache.json when valid, otherwise samples and rewrites it.
/// `cache_hit` reports which happened.
std::vector<RqSubgraph> load_or_sample_subgraphs(const GraphBundle& bundle,
                                                 const SamplerConfig& cfg,
                                                 bool* cache_hit = nullptr);

}  // namespace apf
