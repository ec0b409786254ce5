#include "apf/asbm.hpp"
#include "apf/bundle.hpp"
#include "apf/checkpoint.hpp"
#include "apf/errors.hpp"
#include "apf/experiment.hpp"
#include "apf/split.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <set>

using namespace apf;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("apf_test_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_minimal(const fs::path& dir) {
  write_file(dir / "meta.json",
             R"({"format":"apf-graph-bundle","version":1,"num_nodes":2,"num_edges":1,)"
             R"("feature_dim":2,"features_file":"features.csv","has_splits":false})");
  write_file(dir / "edges.csv", "src,dst\n0,1\n");
  write_file(dir / "features.csv", "1.5,2\n-3,4e-2\n");
  write_file(dir / "labels.csv", "1\n0\n");
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Bundle, MinimalTwoNode) {
  TempDir tmp;
  write_minimal(tmp.path());
  const auto b = load_bundle(tmp.path());
  EXPECT_EQ(b.graph.num_nodes(), 2u);
  EXPECT_EQ(b.graph.num_edges(), 1u);
  EXPECT_DOUBLE_EQ(b.x(1, 1), 0.04);
  EXPECT_EQ(b.labels, (LabelVector{1, 0}));
  EXPECT_FALSE(b.graph.has_self_loops());
}

TEST(Bundle, RejectsMalformedTables) {
  struct Case {
    const char* file;
    const char* text;
    const char* expect;
  };
  const Case cases[] = {
      {"meta.json", R"({"format":"apf-graph-bundle","version":1,"num_nodes":2,"num_edges":3,"feature_dim":2,"features_file":"features.csv","has_splits":false})", "declares"},
      {"meta.json", R"({"format":"other","version":1})", "format"},
      {"meta.json", R"({"format":"apf-graph-bundle","version":9,"num_nodes":2,"num_edges":1,"feature_dim":2})", "version"},
      {"meta.json", "{not json", "meta.json"},
      {"edges.csv", "src,dst\n0,7\n", "edges.csv:2"},
      {"edges.csv", "src,dst\n0;1\n", "edges.csv:2"},
      {"features.csv", "1.5,2\n-3\n", "features.csv:2"},
      {"features.csv", "1.5,abc\n-3,4\n", "features.csv:1"},
      {"features.csv", "1.5,nan\n-3,4\n", "features.csv:1"},
      {"labels.csv", "1\n2\n", "labels.csv:2"},
      {"labels.csv", "1\n", "labels.csv"},
  };
  for (const auto& c : cases) {
    TempDir tmp;
    write_minimal(tmp.path());
    write_file(tmp.path() / c.file, c.text);
    const std::string err = error_of([&] { load_bundle(tmp.path()); });
    EXPECT_NE(err.find(c.expect), std::string::npos) << c.file << ": got '" << err << "'";
  }
}

TEST(Bundle, RoundTripIsExact) {
  TempDir tmp;
  const auto inst = generate_asbm(AsbmSpec::reference(120, 5, 0.1, 1.0, 2));
  const auto split = sample_split(inst.labels, 4, {.n_pos = 3, .n_neg = 10});
  save_bundle(tmp.path(), inst.graph, inst.x, inst.labels, {split});
  const auto b = load_bundle(tmp.path());
  EXPECT_EQ(b.graph.edge_list(), inst.graph.edge_list());
  EXPECT_EQ(b.x, inst.x);
  EXPECT_EQ(b.labels, inst.labels);
  ASSERT_EQ(b.splits.size(), 1u);
  EXPECT_EQ(b.splits[0], split);
  EXPECT_TRUE(b.meta.has_splits);
}

TEST(Bundle, BinaryFeaturesRoundTripAtFloatPrecision) {
  TempDir tmp;
  const auto inst = generate_asbm(AsbmSpec::reference(60, 3, 0.1, 1.0, 2));
  save_bundle(tmp.path(), inst.graph, inst.x, inst.labels, {}, {.binary_features = true});
  const auto b = load_bundle(tmp.path());
  EXPECT_EQ(b.meta.features_file, "features.bin");
  EXPECT_EQ(b.x, inst.x.cast<float>().cast<double>());
}

TEST(Bundle, TamperedTableFailsHash) {
  TempDir tmp;
  const auto inst = generate_asbm(AsbmSpec::reference(60, 3, 0.1, 1.0, 2));
  save_bundle(tmp.path(), inst.graph, inst.x, inst.labels, {});
  std::string labels = read_file(tmp.path() / "labels.csv");
  labels[0] = labels[0] == '0' ? '1' : '0';
  write_file(tmp.path() / "labels.csv", labels);
  EXPECT_NE(error_of([&] { load_bundle(tmp.path()); }).find("hash"), std::string::npos);
}

TEST(Bundle, SplitValidation) {
  TempDir tmp;
  write_minimal(tmp.path());
  SplitSpec overlap{.seed = 0, .train = {0}, .val = {0}, .test = {1}};
  EXPECT_THROW(save_splits(tmp.path(), {overlap}), ValidationError);
  write_file(tmp.path() / "splits.json", R"({"version":1,"splits":[{"seed":0,"train":[0],"val":[],"test":[5],"shared_val":false}]})");
  json meta = json::parse(read_file(tmp.path() / "meta.json"));
  meta["has_splits"] = true;
  write_file(tmp.path() / "meta.json", meta.dump());
  EXPECT_THROW(load_bundle(tmp.path()), ValidationError);
}

TEST(RqCache, HitMissAndStale) {
  TempDir tmp;
  const auto inst = generate_asbm(AsbmSpec::reference(80, 3, 0.1, 1.0, 2));
  save_bundle(tmp.path(), inst.graph, inst.x, inst.labels, {});
  auto b = load_bundle(tmp.path());
  bool hit = true;
  const auto first = load_or_sample_subgraphs(b, {}, &hit);
  EXPECT_FALSE(hit);
  const auto second = load_or_sample_subgraphs(b, {}, &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(first, second);
  load_or_sample_subgraphs(b, {.hop_limit = 1}, &hit);
  EXPECT_FALSE(hit);
  EXPECT_FALSE(load_rq_cache(tmp.path() / "rq_cache.json", rq_cache_key(b.meta, {})));

  // New features change the source hash, so the cache is stale.
  load_or_sample_subgraphs(b, {}, &hit);
  Matrix x2 = inst.x;
  x2(0, 0) += 1.0;
  save_bundle(tmp.path(), inst.graph, x2, inst.labels, {});
  b = load_bundle(tmp.path());
  load_or_sample_subgraphs(b, {}, &hit);
  EXPECT_FALSE(hit);
}

TEST(Split, CountsAndDisjointness) {
  LabelVector y(200, 0);
  for (int i = 0; i < 40; ++i) y[i * 5] = 1;
  const auto s = sample_split(y, 7);
  auto count_pos = [&](const std::vector<NodeId>& ids) {
    return std::count_if(ids.begin(), ids.end(), [&](NodeId v) { return y[v] == 1; });
  };
  EXPECT_EQ(s.train.size(), 100u);
  EXPECT_EQ(count_pos(s.train), 20);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(count_pos(s.val), 20);
  EXPECT_TRUE(s.test.empty());
  std::set<NodeId> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(s, sample_split(y, 7));
  EXPECT_NE(s, sample_split(y, 8));
}

TEST(Split, SharedValidationAndShortfall) {
  LabelVector y(150, 0);
  for (int i = 0; i < 25; ++i) y[i] = 1;
  const auto s = sample_split(y, 1, {.shared_val = true});
  EXPECT_TRUE(s.shared_val);
  EXPECT_EQ(s.val, s.train);
  EXPECT_EQ(s.test.size(), 50u);
  EXPECT_THROW(sample_split(y, 1), ValidationError);
  y.assign(150, -1);
  EXPECT_THROW(sample_split(y, 1, {.with_val = false}), ValidationError);
}

TEST(Checkpoint, PretrainRoundTrip) {
  TempDir tmp;
  std::mt19937_64 rng(3);
  auto enc = DualEncoder::create(5, 8, 3, ActivationKind::kPrelu, NormKind::kBatch, rng);
  auto disc = Discriminators::create(8, rng);
  PretrainConfig cfg{.embed_dim = 8, .order = 3, .norm = NormKind::kBatch};
  save_checkpoint(tmp.path() / "p.ckpt", make_pretrain_checkpoint(enc, disc, cfg, 5));
  auto [e2, d2] = restore_pretrain(load_checkpoint(tmp.path() / "p.ckpt"));
  const auto a = enc.params(), b = e2.params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(a[i]->value, b[i]->value);
  }
  EXPECT_EQ(d2.w_high.value, disc.w_high.value);
  EXPECT_EQ(e2.mlp_low.norm(), NormKind::kBatch);
  EXPECT_EQ(e2.order, 3);
}

TEST(Checkpoint, FinetuneRoundTripAndCorruption) {
  TempDir tmp;
  std::mt19937_64 rng(4);
  FinetuneConfig cfg;
  cfg.fusion = FusionVariant::kAttention;
  auto model = FinetuneModel::create(cfg, 3, 4, rng);
  save_checkpoint(tmp.path() / "f.ckpt", make_finetune_checkpoint(model, cfg, 3, 4));
  const auto back = restore_finetune(load_checkpoint(tmp.path() / "f.ckpt"));
  EXPECT_EQ(back.fusion.variant(), FusionVariant::kAttention);
  const Matrix x = Matrix::Random(4, 3), z = Matrix::Random(4, 4);
  EXPECT_EQ(back.logits(x, z, z), model.logits(x, z, z));

  std::string bytes = read_file(tmp.path() / "f.ckpt");
  write_file(tmp.path() / "bad.ckpt", "XX" + bytes.substr(2));
  EXPECT_THROW(load_checkpoint(tmp.path() / "bad.ckpt"), ValidationError);
  write_file(tmp.path() / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(tmp.path() / "short.ckpt"), ValidationError);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  PretrainConfig p{.epochs = 12, .learning_rate = 1e-2, .activation = ActivationKind::kTanh};
  PretrainConfig p2;
  update_from_json(p2, to_json(p));
  EXPECT_EQ(to_json(p2), to_json(p));
  EXPECT_THROW(update_from_json(p2, json{{"epoch", 3}}), ValidationError);

  FinetuneConfig f{.weight_decay = 1e-4, .targets = {0.1, 1.0}};
  FinetuneConfig f2;
  update_from_json(f2, to_json(f));
  EXPECT_EQ(to_json(f2), to_json(f));
}

TEST(ExperimentConfig, DocumentedGridEnforcedUnlessCustom) {
  auto cfg = experiment_config_from_json(json::parse(R"({"seeds":[1,2]})"));
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2}));
  const json off = json::parse(R"({"pretrain":{"learning_rate":0.5}})");
  EXPECT_THROW(experiment_config_from_json(off).validate(), ValidationError);
  json custom = off;
  custom["custom"] = true;
  EXPECT_NO_THROW(experiment_config_from_json(custom).validate());
  EXPECT_THROW(experiment_config_from_json(json::parse(R"({"seed":1})")), ValidationError);
  const auto round = experiment_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(round), to_json(cfg));
}

TEST(ExperimentConfig, StreamSeedsDiffer) {
  EXPECT_NE(stream_seed(0, SeedStream::kSplit), stream_seed(0, SeedStream::kPretrain));
  EXPECT_NE(stream_seed(0, SeedStream::kPretrain), stream_seed(1, SeedStream::kPretrain));
  EXPECT_EQ(stream_seed(5, SeedStream::kFinetune), stream_seed(5, SeedStream::kFinetune));
}
