#pragma once

#include "apf/bundle.hpp"
#include "apf/finetune.hpp"
#include "apf/pretrain.hpp"
#include "apf/rq_sampler.hpp"
#include "apf/split.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace apf {

/// Candidate values searched per seed; an empty list keeps the base value.
struct PretrainGrid {
  std::vector<double> learning_rate;
  std::vector<Eigen::Index> embed_dim;
  std::vector<int> order;
  std::vector<ActivationKind> activation;
  std::vector<NormKind> norm;
};

struct FinetuneGrid {
  std::vector<double> weight_decay;
  std::vector<double> p_a;
  std::vector<double> p_n;
};

struct ExperimentConfig {
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  PretrainGrid pretrain_grid;
  FinetuneGrid finetune_grid;
  SamplerConfig sampler;
  SplitConfig split;
  bool use_bundle_splits = false;  // take splits from the bundle instead of sampling
  std::vector<std::uint64_t> seeds{0};
  std::vector<FusionVariant> ablations;  // extra fine-tuning runs on the same encoder
  std::filesystem::path output_dir = "apf_out";
  unsigned parallel_seeds = 1;  // workers; each seed is self-contained
  bool custom = false;  // allow values outside the documented grids

  /// Throws ValidationError for out-of-range or (unless custom) off-grid values.
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

nlohmann::json to_json(const EvalReport& r);

struct VariantReport {
  FusionVariant variant = FusionVariant::kGated;
  EvalReport test;
  int best_epoch = 0;
  double val_auroc = 0.0;
  Vector scores;
};

struct SeedReport {
  std::uint64_t seed = 0;
  SplitSpec split;
  PretrainConfig pretrain;  // selected
  FinetuneConfig finetune;  // selected
  double pretrain_initial_loss = 0.0;
  double pretrain_best_loss = 0.0;
  int pretrain_epochs = 0;
  VariantReport main;
  std::vector<VariantReport> ablations;
};

struct ExperimentResult {
  std::vector<SeedReport> seeds;
  nlohmann::json aggregate;
  bool subgraph_cache_hit = false;
};

nlohmann::json to_json(const SeedReport& r, const ExperimentConfig& cfg, const BundleMeta& meta);

/// mean and population std of each metric over the seed reports.
nlohmann::json aggregate_reports(const std::vector<SeedReport>& reports);

/// Per seed: split, pre-training (grid), fine-tuning (grid), ablations,
/// evaluation. Selection across grid points uses validation AUROC. Writes
/// <out>/seed_<s>/report.json, <out>/seed_<s>/scores.csv and
/// <out>/aggregate.json when `write_outputs` is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const GraphBundle& bundle,
                                bool write_outputs = true);

/// Seed-derived sub-streams.
enum class SeedStream : std::uint64_t { kSplit = 0, kPretrain = 1, kFinetune = 2 };
std::uint64_t stream_seed(std::uint64_t root, SeedStream s);

/// One score row per node: node,label,split,score[,variant scores].
std::string scores_csv(const SeedReport& r, const LabelVector& labels);

}  // namespace apf
