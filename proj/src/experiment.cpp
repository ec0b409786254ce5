#include "apf/experiment.hpp"

#include "apf/checkpoint.hpp"
#include "apf/errors.hpp"
#include "apf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

namespace apf {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint64_t stream_seed(std::uint64_t root, SeedStream s) {
  return derive_seed(root, static_cast<std::uint64_t>(s));
}

namespace {

bool in_set(double v, std::initializer_list<double> allowed) {
  for (double a : allowed)
    if (std::abs(v - a) <= 1e-12 * std::max(1.0, std::abs(a))) return true;
  return false;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("config: " + what);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::vector<T> read_list(const json& j, const char* key, F convert) {
  std::vector<T> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) throw ValidationError(std::string("config: '") + key + "' must be a list");
  for (const auto& v : j.at(key)) out.push_back(convert(v));
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!seeds.empty(), "at least one seed is required");
  require(pretrain.epochs >= 0 && finetune.epochs >= 0, "epochs must be non-negative");
  require(pretrain.patience >= 1, "patience must be positive");
  require(pretrain.embed_dim >= 1 && pretrain.order >= 1, "embed_dim and order must be positive");
  require(sampler.hop_limit == 1 || sampler.hop_limit == 2, "sampler hop_limit must be 1 or 2");
  require(sampler.candidate_budget >= 1, "sampler candidate_budget must be positive");
  require(finetune.targets.p_a >= 0.0 && finetune.targets.p_n <= 1.0 &&
              finetune.targets.p_a <= finetune.targets.p_n,
          "reg targets need 0 <= p_a <= p_n <= 1");
  for (double v : finetune_grid.p_a) require(v >= 0.0 && v <= 1.0, "p_a grid values must lie in [0, 1]");
  for (double v : finetune_grid.p_n) require(v >= 0.0 && v <= 1.0, "p_n grid values must lie in [0, 1]");
  require(parallel_seeds >= 1, "parallel_seeds must be at least 1");
  if (custom) return;

  const std::string hint = " (set \"custom\": true to allow)";
  require(pretrain.epochs <= 800, "pretrain epochs above 800" + hint);
  require(pretrain.patience == 20, "pretrain patience other than 20" + hint);
  auto lr_ok = [](double v) { return in_set(v, {1e-2, 1e-3, 1e-4}); };
  auto dim_ok = [](Eigen::Index v) { return v == 32 || v == 64; };
  auto order_ok = [](int v) { return v == 2 || v == 3; };
  auto act_ok = [](ActivationKind a) {
    return a == ActivationKind::kRelu || a == ActivationKind::kElu ||
           a == ActivationKind::kPrelu || a == ActivationKind::kTanh;
  };
  require(lr_ok(pretrain.learning_rate), "pretrain learning_rate off grid" + hint);
  require(dim_ok(pretrain.embed_dim), "embed_dim off grid" + hint);
  require(order_ok(pretrain.order), "filter order off grid" + hint);
  require(act_ok(pretrain.activation), "activation off grid" + hint);
  for (double v : pretrain_grid.learning_rate) require(lr_ok(v), "pretrain learning_rate grid" + hint);
  for (auto v : pretrain_grid.embed_dim) require(dim_ok(v), "embed_dim grid" + hint);
  for (int v : pretrain_grid.order) require(order_ok(v), "order grid" + hint);
  for (auto v : pretrain_grid.activation) require(act_ok(v), "activation grid" + hint);

  require(finetune.epochs <= 500, "finetune epochs above 500" + hint);
  require(in_set(finetune.learning_rate, {0.01}), "finetune learning_rate other than 0.01" + hint);
  auto wd_ok = [](double v) { return in_set(v, {0.0, 1e-2, 1e-4}); };
  auto pa_ok = [](double v) { return in_set(v, {0.0, 0.1, 0.2, 0.3, 0.4}); };
  auto pn_ok = [](double v) { return in_set(v, {0.9, 1.0}); };
  require(wd_ok(finetune.weight_decay), "finetune weight_decay off grid" + hint);
  require(pa_ok(finetune.targets.p_a), "p_a off grid" + hint);
  require(pn_ok(finetune.targets.p_n), "p_n off grid" + hint);
  for (double v : finetune_grid.weight_decay) require(wd_ok(v), "weight_decay grid" + hint);
  for (double v : finetune_grid.p_a) require(pa_ok(v), "p_a grid" + hint);
  for (double v : finetune_grid.p_n) require(pn_ok(v), "p_n grid" + hint);
  require(split.n_pos == 20 && split.n_neg == 80, "split composition other than 20/80" + hint);
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  static const char* kKeys[] = {"pretrain", "finetune", "grid", "sampler", "split", "seeds",
                                "ablations", "output_dir", "custom", "parallel_seeds"};
  for (const auto& [k, v] : j.items())
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* a) { return k == a; }) ==
        std::end(kKeys))
      throw ValidationError("config: unknown field '" + k + "'");

  ExperimentConfig c;
  try {
    if (j.contains("pretrain")) update_from_json(c.pretrain, j.at("pretrain"));
    if (j.contains("finetune")) update_from_json(c.finetune, j.at("finetune"));
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (g.contains("pretrain")) {
        const json& p = g.at("pretrain");
        c.pretrain_grid.learning_rate = read_list<double>(p, "learning_rate", [](const json& v) { return v.get<double>(); });
        c.pretrain_grid.embed_dim = read_list<Eigen::Index>(p, "embed_dim", [](const json& v) { return v.get<Eigen::Index>(); });
        c.pretrain_grid.order = read_list<int>(p, "order", [](const json& v) { return v.get<int>(); });
        c.pretrain_grid.activation = read_list<ActivationKind>(p, "activation", [](const json& v) { return parse_activation(v.get<std::string>()); });
        c.pretrain_grid.norm = read_list<NormKind>(p, "norm", [](const json& v) { return parse_norm(v.get<std::string>()); });
      }
      if (g.contains("finetune")) {
        const json& f = g.at("finetune");
        c.finetune_grid.weight_decay = read_list<double>(f, "weight_decay", [](const json& v) { return v.get<double>(); });
        c.finetune_grid.p_a = read_list<double>(f, "p_a", [](const json& v) { return v.get<double>(); });
        c.finetune_grid.p_n = read_list<double>(f, "p_n", [](const json& v) { return v.get<double>(); });
      }
    }
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      c.sampler.hop_limit = s.value("hop_limit", c.sampler.hop_limit);
      c.sampler.candidate_budget = s.value("candidate_budget", c.sampler.candidate_budget);
      c.sampler.epsilon = s.value("epsilon", c.sampler.epsilon);
      c.sampler.threads = s.value("threads", c.sampler.threads);
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      c.split.n_pos = s.value("n_pos", c.split.n_pos);
      c.split.n_neg = s.value("n_neg", c.split.n_neg);
      c.split.shared_val = s.value("shared_val", c.split.shared_val);
      c.use_bundle_splits = s.value("from_bundle", c.use_bundle_splits);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.ablations = read_list<FusionVariant>(j, "ablations", [](const json& v) { return parse_fusion(v.get<std::string>()); });
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    c.custom = j.value("custom", false);
    c.parallel_seeds = j.value("parallel_seeds", 1u);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json pg = json::object(), fg = json::object();
  if (!c.pretrain_grid.learning_rate.empty()) pg["learning_rate"] = c.pretrain_grid.learning_rate;
  if (!c.pretrain_grid.embed_dim.empty()) pg["embed_dim"] = c.pretrain_grid.embed_dim;
  if (!c.pretrain_grid.order.empty()) pg["order"] = c.pretrain_grid.order;
  if (!c.pretrain_grid.activation.empty()) {
    pg["activation"] = json::array();
    for (auto a : c.pretrain_grid.activation) pg["activation"].push_back(std::string(to_string(a)));
  }
  if (!c.pretrain_grid.norm.empty()) {
    pg["norm"] = json::array();
    for (auto a : c.pretrain_grid.norm) pg["norm"].push_back(std::string(to_string(a)));
  }
  if (!c.finetune_grid.weight_decay.empty()) fg["weight_decay"] = c.finetune_grid.weight_decay;
  if (!c.finetune_grid.p_a.empty()) fg["p_a"] = c.finetune_grid.p_a;
  if (!c.finetune_grid.p_n.empty()) fg["p_n"] = c.finetune_grid.p_n;
  json abl = json::array();
  for (auto v : c.ablations) abl.push_back(std::string(to_string(v)));
  json pre = to_json(c.pretrain), fin = to_json(c.finetune);
  pre.erase("seed");
  fin.erase("seed");
  return json{{"pretrain", pre},
              {"finetune", fin},
              {"grid", {{"pretrain", pg}, {"finetune", fg}}},
              {"sampler",
               {{"hop_limit", c.sampler.hop_limit},
                {"candidate_budget", c.sampler.candidate_budget},
                {"epsilon", c.sampler.epsilon}}},
              {"split",
               {{"n_pos", c.split.n_pos},
                {"n_neg", c.split.n_neg},
                {"shared_val", c.split.shared_val},
                {"from_bundle", c.use_bundle_splits}}},
              {"seeds", c.seeds},
              {"ablations", abl},
              {"custom", c.custom}};
}

ExperimentConfig load_experiment_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(file.filename().string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

json to_json(const EvalReport& r) {
  json j{{"auprc", r.auprc}, {"auroc", r.auroc}, {"rec_at_k", r.rec_at_k},
         {"k_used", r.k_used}, {"split_id", r.split_id}, {"seed", r.seed}};
  if (r.quartiles) {
    json rows = json::array();
    for (const auto& q : r.quartiles->rows)
      rows.push_back(json{{"name", q.name},
                          {"anomalies", q.anomalies},
                          {"h_max", q.h_max},
                          {"h_min", q.h_min},
                          {"auprc", q.metrics.auprc},
                          {"auroc", q.metrics.auroc},
                          {"rec_at_k", q.metrics.rec_at_k},
                          {"q1_minus_auprc", q.diff_from_q1.auprc},
                          {"q1_minus_auroc", q.diff_from_q1.auroc},
                          {"q1_minus_rec_at_k", q.diff_from_q1.rec_at_k}});
    j["quartiles"] = json{{"rows", rows},
                          {"normals", r.quartiles->normals},
                          {"skipped_anomalies", r.quartiles->skipped_anomalies}};
    if (r.quartiles->warning) j["quartiles"]["warning"] = *r.quartiles->warning;
  }
  return j;
}

json to_json(const SeedReport& r, const ExperimentConfig& cfg, const BundleMeta& meta) {
  json abl = json::object();
  for (const auto& a : r.ablations)
    abl[std::string(to_string(a.variant))] =
        json{{"test", to_json(a.test)}, {"best_epoch", a.best_epoch}, {"val_auroc", a.val_auroc}};
  json pre = to_json(r.pretrain), fin = to_json(r.finetune);
  return json{{"seed", r.seed},
              {"split",
               {{"seed", r.split.seed},
                {"train", r.split.train.size()},
                {"val", r.split.val.size()},
                {"test", r.split.test.size()},
                {"shared_val", r.split.shared_val}}},
              {"selected", {{"pretrain", pre}, {"finetune", fin}}},
              {"pretrain",
               {{"initial_loss", r.pretrain_initial_loss},
                {"best_loss", r.pretrain_best_loss},
                {"epochs_run", r.pretrain_epochs}}},
              {"finetune", {{"best_epoch", r.main.best_epoch}, {"val_auroc", r.main.val_auroc}}},
              {"test", to_json(r.main.test)},
              {"ablations", abl},
              {"config", to_json(cfg)},
              {"bundle",
               {{"num_nodes", meta.num_nodes},
                {"num_edges", meta.num_edges},
                {"feature_dim", meta.feature_dim},
                {"hashes",
                 {{"edges", meta.edges_hash},
                  {"features", meta.features_hash},
                  {"labels", meta.labels_hash}}}}}};
}

namespace {

json summarize(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return json{{"mean", mean}, {"std", std::sqrt(var)}, {"values", v}};
}

json summarize_reports(const std::vector<const EvalReport*>& reps) {
  std::vector<double> auprc, auroc, rec;
  for (const EvalReport* r : reps) {
    auprc.push_back(r->auprc);
    auroc.push_back(r->auroc);
    rec.push_back(r->rec_at_k);
  }
  return json{{"auprc", summarize(auprc)}, {"auroc", summarize(auroc)}, {"rec_at_k", summarize(rec)}};
}

}  // namespace

json aggregate_reports(const std::vector<SeedReport>& reports) {
  if (reports.empty()) throw ValidationError("no seed reports to aggregate");
  std::vector<std::uint64_t> seeds;
  std::vector<const EvalReport*> main;
  for (const auto& r : reports) {
    seeds.push_back(r.seed);
    main.push_back(&r.main.test);
  }
  json abl = json::object();
  for (std::size_t k = 0; k < reports.front().ablations.size(); ++k) {
    std::vector<const EvalReport*> v;
    for (const auto& r : reports) v.push_back(&r.ablations.at(k).test);
    abl[std::string(to_string(reports.front().ablations[k].variant))] = summarize_reports(v);
  }
  return json{{"seeds", seeds}, {"test", summarize_reports(main)}, {"ablations", abl}};
}

std::string scores_csv(const SeedReport& r, const LabelVector& labels) {
  std::vector<std::string> role(labels.size(), "test");
  for (NodeId v : r.split.val) role[v] = "val";
  for (NodeId v : r.split.train) role[v] = "train";
  std::string out = "node,label,split,score";
  for (const auto& a : r.ablations) out += ",score_" + std::string(to_string(a.variant));
  out += '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out += std::to_string(i) + ',' + std::to_string(labels[i]) + ',' + role[i] + ',' +
           fmt(r.main.scores[ii]);
    for (const auto& a : r.ablations) out += ',' + fmt(a.scores[ii]);
    out += '\n';
  }
  return out;
}

namespace {

template <typename F>
auto stage(std::uint64_t seed, const char* name, F&& body) {
  const std::string tag = "[seed " + std::to_string(seed) + "] " + name + ": ";
  try {
    return body();
  } catch (const NumericError& e) {
    throw NumericError(tag + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(tag + e.what());
  }
}

template <typename T>
std::vector<T> or_base(const std::vector<T>& grid, T base) {
  return grid.empty() ? std::vector<T>{base} : grid;
}

std::vector<PretrainConfig> expand(const PretrainConfig& base, const PretrainGrid& g) {
  std::vector<PretrainConfig> out;
  for (double lr : or_base(g.learning_rate, base.learning_rate))
    for (auto dim : or_base(g.embed_dim, base.embed_dim))
      for (int order : or_base(g.order, base.order))
        for (auto act : or_base(g.activation, base.activation))
          for (auto norm : or_base(g.norm, base.norm)) {
            PretrainConfig c = base;
            c.learning_rate = lr;
            c.embed_dim = dim;
            c.order = order;
            c.activation = act;
            c.norm = norm;
            out.push_back(c);
          }
  return out;
}

std::vector<FinetuneConfig> expand(const FinetuneConfig& base, const FinetuneGrid& g) {
  std::vector<FinetuneConfig> out;
  for (double wd : or_base(g.weight_decay, base.weight_decay))
    for (double pn : or_base(g.p_n, base.targets.p_n))
      for (double pa : or_base(g.p_a, base.targets.p_a)) {
        if (pa > pn) continue;
        FinetuneConfig c = base;
        c.weight_decay = wd;
        c.targets = RegTargets{pa, pn};
        out.push_back(c);
      }
  if (out.empty()) throw ValidationError("finetune grid has no combination with p_a <= p_n");
  return out;
}

VariantReport to_variant(FusionVariant v, FinetuneResult&& r) {
  VariantReport out;
  out.variant = v;
  out.test = std::move(r.test);
  out.best_epoch = r.best_epoch;
  out.val_auroc = r.best_val_auroc;
  out.scores = std::move(r.scores);
  return out;
}

SeedReport run_seed(const ExperimentConfig& cfg, const GraphBundle& bundle,
                    const std::vector<RqSubgraph>& subgraphs, std::size_t seed_index) {
  const std::uint64_t seed = cfg.seeds[seed_index];
  SeedReport rep;
  rep.seed = seed;
  rep.split = stage(seed, "split", [&] {
    if (cfg.use_bundle_splits) {
      if (seed_index >= bundle.splits.size())
        throw ValidationError("bundle has " + std::to_string(bundle.splits.size()) +
                              " splits, seed index " + std::to_string(seed_index) + " requested");
      return bundle.splits[seed_index];
    }
    return sample_split(bundle.labels, stream_seed(seed, SeedStream::kSplit), cfg.split);
  });

  double best_val = -1.0;
  for (PretrainConfig pc : expand(cfg.pretrain, cfg.pretrain_grid)) {
    pc.seed = stream_seed(seed, SeedStream::kPretrain);
    PretrainResult pre =
        stage(seed, "pretrain", [&] { return run_pretraining(bundle.graph, bundle.x, subgraphs, pc); });
    const SparseGraph lg = learning_graph(bundle.graph);
    const Embeddings z = encode(pre.encoder, lg, bundle.x, estimate_lambda_max(lg));
    for (FinetuneConfig fc : expand(cfg.finetune, cfg.finetune_grid)) {
      fc.seed = stream_seed(seed, SeedStream::kFinetune);
      FinetuneResult fin = stage(seed, "finetune", [&] {
        return run_finetuning_embeddings(z, bundle.graph, bundle.x, bundle.labels, rep.split, fc);
      });
      if (fin.best_val_auroc > best_val) {
        best_val = fin.best_val_auroc;
        rep.pretrain = pc;
        rep.finetune = fc;
        rep.pretrain_initial_loss = pre.initial_loss;
        rep.pretrain_best_loss = pre.best_loss;
        rep.pretrain_epochs = pre.epochs_run;
        rep.main = to_variant(fc.fusion, std::move(fin));
        rep.ablations.clear();
        for (FusionVariant v : cfg.ablations) {
          FinetuneConfig ac = fc;
          ac.fusion = v;
          rep.ablations.push_back(to_variant(v, stage(seed, "ablation", [&] {
            return run_finetuning_embeddings(z, bundle.graph, bundle.x, bundle.labels, rep.split, ac);
          })));
        }
      }
    }
  }
  return rep;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const GraphBundle& bundle,
                                bool write_outputs) {
  cfg.validate();
  ExperimentResult res;
  const auto subgraphs = stage(cfg.seeds.front(), "sample", [&] {
    return load_or_sample_subgraphs(bundle, cfg.sampler, &res.subgraph_cache_hit);
  });

  res.seeds.resize(cfg.seeds.size());
  if (cfg.parallel_seeds <= 1 || cfg.seeds.size() == 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) res.seeds[i] = run_seed(cfg, bundle, subgraphs, i);
  } else {
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    {
      std::vector<std::jthread> workers;
      const std::size_t nw = std::min<std::size_t>(cfg.parallel_seeds, cfg.seeds.size());
      for (std::size_t w = 0; w < nw; ++w)
        workers.emplace_back([&, w] {
          for (std::size_t i = w; i < cfg.seeds.size(); i += nw) {
            try {
              res.seeds[i] = run_seed(cfg, bundle, subgraphs, i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  res.aggregate = aggregate_reports(res.seeds);

  if (write_outputs) {
    fs::create_directories(cfg.output_dir);
    for (const auto& r : res.seeds) {
      const fs::path dir = cfg.output_dir / ("seed_" + std::to_string(r.seed));
      fs::create_directories(dir);
      write_text(dir / "report.json", to_json(r, cfg, bundle.meta).dump(2) + "\n");
      write_text(dir / "scores.csv", scores_csv(r, bundle.labels));
    }
    json agg = res.aggregate;
    agg["config"] = to_json(cfg);
    write_text(cfg.output_dir / "aggregate.json", agg.dump(2) + "\n");
  }
  return res;
}

}  // namespace apf
