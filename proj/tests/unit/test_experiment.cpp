#include "apf/asbm.hpp"
#include "apf/bundle.hpp"
#include "apf/errors.hpp"
#include "apf/experiment.hpp"

#include <gtest/gtest.h>

using namespace apf;

namespace {

GraphBundle small_bundle() {
  const auto inst = generate_asbm(AsbmSpec::reference(400, 8, 0.1, 1.5, 6));
  GraphBundle b;
  b.graph = inst.graph;
  b.x = inst.x;
  b.labels = inst.labels;
  b.meta.num_nodes = 400;
  b.meta.num_edges = inst.graph.num_edges();
  b.meta.feature_dim = 8;
  return b;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.pretrain.epochs = 10;
  cfg.pretrain.embed_dim = 32;
  cfg.finetune.epochs = 20;
  cfg.split.n_pos = 10;
  cfg.split.n_neg = 40;
  cfg.custom = true;
  return cfg;
}

}  // namespace

TEST(Experiment, SeedsAblationsAndAggregate) {
  auto cfg = small_config();
  cfg.seeds = {0, 1};
  cfg.ablations = {FusionVariant::kLowOnly, FusionVariant::kConcat};
  const auto res = run_experiment(cfg, small_bundle(), false);
  ASSERT_EQ(res.seeds.size(), 2u);
  for (const auto& s : res.seeds) {
    EXPECT_EQ(s.ablations.size(), 2u);
    EXPECT_EQ(s.ablations[1].variant, FusionVariant::kConcat);
    EXPECT_GT(s.main.test.auroc, 0.5);
    EXPECT_EQ(s.main.scores.size(), 400);
    EXPECT_LE(s.pretrain_best_loss, s.pretrain_initial_loss);
  }
  EXPECT_NE(res.seeds[0].split, res.seeds[1].split);
  const double m = res.aggregate.at("test").at("auroc").at("mean").get<double>();
  EXPECT_NEAR(m, 0.5 * (res.seeds[0].main.test.auroc + res.seeds[1].main.test.auroc), 1e-12);
}

TEST(Experiment, GridSelectionUsesValidation) {
  auto cfg = small_config();
  cfg.finetune_grid.p_a = {0.0, 0.4};
  const auto res = run_experiment(cfg, small_bundle(), false);
  const double chosen = res.seeds[0].finetune.targets.p_a;
  EXPECT_TRUE(chosen == 0.0 || chosen == 0.4);
}

TEST(Experiment, ParallelSeedsMatchSerial) {
  auto cfg = small_config();
  cfg.seeds = {4, 5};
  const auto serial = run_experiment(cfg, small_bundle(), false);
  cfg.parallel_seeds = 2;
  const auto parallel = run_experiment(cfg, small_bundle(), false);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_EQ(serial.seeds[i].main.scores, parallel.seeds[i].main.scores);
}

TEST(Experiment, ErrorsNameSeedAndStage) {
  auto cfg = small_config();
  cfg.seeds = {9};
  cfg.split.n_pos = 500;
  try {
    run_experiment(cfg, small_bundle(), false);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("[seed 9] split"), std::string::npos) << e.what();
  }
}
