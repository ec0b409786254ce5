// apf command-line driver.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 numeric failure.

#include "apf/asbm.hpp"
#include "apf/bundle.hpp"
#include "apf/checkpoint.hpp"
#include "apf/errors.hpp"
#include "apf/experiment.hpp"
#include "apf/gradcheck.hpp"
#include "apf/metrics.hpp"
#include "apf/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace apf;

namespace {

struct CommonOpts {
  std::string bundle;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_bundle) {
  auto* b = cmd->add_option("--bundle", o.bundle, "graph bundle directory");
  if (needs_bundle) b->required();
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output path");
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

void emit(const json& j, const std::string& out_file) {
  const std::string text = j.dump(2) + "\n";
  if (out_file.empty()) {
    std::cout << text;
    return;
  }
  const fs::path p(out_file);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw ValidationError("cannot write " + out_file);
  f << text;
}

ExperimentConfig experiment_config(const CommonOpts& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  cfg.sampler.threads = o.threads;
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

AsbmSpec asbm_spec(const CommonOpts& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ValidationError("cannot open config " + o.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError(o.config + ": " + e.what());
    }
    if (j.contains("asbm")) j = j.at("asbm");
  }
  AsbmSpec s = AsbmSpec::reference(j.value("n", std::size_t{2000}), j.value("d", std::size_t{64}),
                                   j.value("anomaly_fraction", 0.1), j.value("distance", 1.0),
                                   j.value("seed", std::uint64_t{0}));
  s.p1 = j.value("p1", s.p1);
  s.q1 = j.value("q1", s.q1);
  s.p2 = j.value("p2", s.p2);
  s.q2 = j.value("q2", s.q2);
  s.theta_min = j.value("theta_min", s.theta_min);
  s.theta_max = j.value("theta_max", s.theta_max);
  s.frac_heterophilic = j.value("frac_heterophilic", s.frac_heterophilic);
  if (o.seed) s.seed = *o.seed;
  s.validate();
  return s;
}

json cell_json(const FilterOutcome& f) {
  json cells = json::object();
  for (std::size_t c = 0; c < 4; ++c)
    cells[kCellNames[c]] = json{{"count", f.cells[c].count},
                                {"accuracy", f.cells[c].accuracy},
                                {"mean_value", f.cells[c].mean_value}};
  return json{{"accuracy", f.accuracy},
              {"best_threshold_accuracy", f.best_threshold_accuracy},
              {"heterophilic_accuracy", f.heterophilic_accuracy},
              {"cells", cells}};
}

int cmd_stats(const CommonOpts& o) {
  const GraphBundle b = load_bundle(o.bundle);
  const HomophilyStats h = local_homophily(b.graph, b.labels);
  std::size_t anomalies = 0, normals = 0;
  for (int y : b.labels) {
    if (y == 1) ++anomalies;
    if (y == 0) ++normals;
  }
  Matrix indicator(static_cast<Eigen::Index>(b.labels.size()), 1);
  for (std::size_t i = 0; i < b.labels.size(); ++i)
    indicator(static_cast<Eigen::Index>(i), 0) = b.labels[i] == 1 ? 1.0 : 0.0;
  const SparseGraph lg = b.graph.with_self_loops();
  json j{{"nodes", b.graph.num_nodes()},
         {"edges", b.graph.num_edges()},
         {"feature_dim", b.x.cols()},
         {"anomalies", anomalies},
         {"normals", normals},
         {"unknown", b.labels.size() - anomalies - normals},
         {"homophily",
          {{"anomaly_mean", std::isnan(h.mean_abnormal) ? json(nullptr) : json(h.mean_abnormal)},
           {"normal_mean", std::isnan(h.mean_normal) ? json(nullptr) : json(h.mean_normal)}}},
         {"lambda_max", estimate_lambda_max(lg)},
         {"rq",
          {{"features", rayleigh_quotient(b.graph, b.x).value},
           {"anomaly_indicator", anomalies ? json(rayleigh_quotient(b.graph, indicator).value)
                                           : json(nullptr)}}}};
  SamplerConfig sc;
  if (!o.config.empty()) sc = experiment_config(o).sampler;
  if (auto cached = load_rq_cache(b.dir / "rq_cache.json", rq_cache_key(b.meta, sc))) {
    double sum = 0.0, size = 0.0;
    for (const auto& s : *cached) {
      sum += s.rq_value;
      size += static_cast<double>(s.members.size());
    }
    const double n = static_cast<double>(cached->size());
    j["rq"]["subgraphs"] = json{{"mean_rq", sum / n}, {"mean_size", size / n}};
  }
  emit(j, o.out);
  return 0;
}

int cmd_asbm_gen(const CommonOpts& o, bool binary) {
  if (o.out.empty()) throw ValidationError("asbm gen needs --out DIR");
  const AsbmSpec s = asbm_spec(o);
  const AsbmInstance inst = generate_asbm(s);
  const BundleMeta meta = save_bundle(o.out, inst.graph, inst.x, inst.labels, {},
                                      BundleWriteOptions{.binary_features = binary});
  std::vector<int> patterns;
  for (bool he : inst.heterophilic) patterns.push_back(he ? 1 : 0);
  std::vector<double> theta(inst.theta.data(), inst.theta.data() + inst.theta.size());
  json truth{{"seed", s.seed},
             {"heterophilic", patterns},
             {"theta", theta},
             {"spec",
              {{"n_a", s.n_a}, {"n_n", s.n_n}, {"d", s.mu.size()}, {"p1", s.p1}, {"q1", s.q1},
               {"p2", s.p2}, {"q2", s.q2}, {"theta_min", s.theta_min}, {"theta_max", s.theta_max},
               {"frac_heterophilic", s.frac_heterophilic},
               {"distance", (s.mu - s.nu).norm()}}}};
  emit(truth, (fs::path(o.out) / "asbm_truth.json").string());
  std::cout << "wrote " << o.out << ": " << meta.num_nodes << " nodes, " << meta.num_edges
            << " edges\n";
  return 0;
}

int cmd_asbm_verify(const CommonOpts& o, std::size_t trials, double radius) {
  const AsbmSpec s = asbm_spec(o);
  const SeparabilityReport r = verify_separability(s, radius, trials);
  json tj = json::array();
  for (const auto& t : r.trials)
    tj.push_back(json{{"seed", t.seed}, {"adaptive", cell_json(t.adaptive)},
                      {"lowpass", cell_json(t.lowpass)}});
  json j{{"mean_accuracy", r.mean_accuracy},
         {"mean_best_threshold_accuracy", r.mean_best_threshold_accuracy},
         {"mean_lowpass_accuracy", r.mean_lowpass_accuracy},
         {"heterophilic_dominance", r.heterophilic_dominance},
         {"kappa_eff", r.kappa_eff},
         {"center_distance", r.center_distance},
         {"distance_threshold", r.distance_threshold},
         {"threshold_met", r.threshold_met},
         {"separator", {{"b_star", r.separator.b_star}, {"tau_pi", r.separator.tau_pi},
                        {"radius", r.separator.radius}}},
         {"trials", tj}};
  emit(j, o.out);
  return 0;
}

int cmd_sample(const CommonOpts& o) {
  const GraphBundle b = load_bundle(o.bundle);
  const ExperimentConfig cfg = experiment_config(o);
  bool hit = false;
  const auto subgraphs = load_or_sample_subgraphs(b, cfg.sampler, &hit);
  double sum = 0.0;
  for (const auto& s : subgraphs) sum += s.rq_value;
  std::cout << (hit ? "cache valid" : "sampled") << ": " << subgraphs.size()
            << " subgraphs, mean RQ " << sum / static_cast<double>(subgraphs.size()) << "\n";
  return 0;
}

int cmd_pretrain(const CommonOpts& o) {
  if (o.out.empty()) throw ValidationError("pretrain needs --out FILE");
  const GraphBundle b = load_bundle(o.bundle);
  const ExperimentConfig cfg = experiment_config(o);
  const auto subgraphs = load_or_sample_subgraphs(b, cfg.sampler);
  PretrainConfig pc = cfg.pretrain;
  pc.seed = stream_seed(cfg.seeds.front(), SeedStream::kPretrain);
  PretrainResult r = run_pretraining(b.graph, b.x, subgraphs, pc);
  save_checkpoint(o.out, make_pretrain_checkpoint(r.encoder, r.disc, pc, b.x.cols()));
  std::cout << "pretrained " << r.epochs_run << " epochs, loss " << r.initial_loss << " -> "
            << r.best_loss << " (best epoch " << r.best_epoch << ")\n";
  return 0;
}

SplitSpec split_for(const GraphBundle& b, const ExperimentConfig& cfg) {
  if (cfg.use_bundle_splits) {
    if (b.splits.empty()) throw ValidationError("bundle has no splits");
    return b.splits.front();
  }
  return sample_split(b.labels, stream_seed(cfg.seeds.front(), SeedStream::kSplit), cfg.split);
}

int cmd_finetune(const CommonOpts& o, const std::string& ckpt_path) {
  if (o.out.empty()) throw ValidationError("finetune needs --out DIR");
  const GraphBundle b = load_bundle(o.bundle);
  const ExperimentConfig cfg = experiment_config(o);
  auto [enc, disc] = restore_pretrain(load_checkpoint(ckpt_path));
  FinetuneConfig fc = cfg.finetune;
  fc.seed = stream_seed(cfg.seeds.front(), SeedStream::kFinetune);
  const SplitSpec split = split_for(b, cfg);
  FinetuneResult r = run_finetuning(enc, b.graph, b.x, b.labels, split, fc);
  fs::create_directories(o.out);
  save_checkpoint(fs::path(o.out) / "head.ckpt",
                  make_finetune_checkpoint(r.model, fc, b.x.cols(), enc.embed_dim));
  SeedReport rep;
  rep.seed = cfg.seeds.front();
  rep.split = split;
  rep.pretrain = cfg.pretrain;
  rep.finetune = fc;
  rep.main.variant = fc.fusion;
  rep.main.best_epoch = r.best_epoch;
  rep.main.val_auroc = r.best_val_auroc;
  rep.main.test = r.test;
  rep.main.scores = r.scores;
  emit(to_json(rep, cfg, b.meta), (fs::path(o.out) / "report.json").string());
  std::ofstream(fs::path(o.out) / "scores.csv") << scores_csv(rep, b.labels);
  std::cout << "best epoch " << r.best_epoch << ", val AUROC " << r.best_val_auroc
            << ", test AUROC " << r.test.auroc << ", AUPRC " << r.test.auprc << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_path, const std::string& head_path) {
  const GraphBundle b = load_bundle(o.bundle);
  const ExperimentConfig cfg = experiment_config(o);
  auto [enc, disc] = restore_pretrain(load_checkpoint(ckpt_path));
  const Checkpoint head_ckpt = load_checkpoint(head_path);
  const FinetuneModel model = restore_finetune(head_ckpt);
  FinetuneConfig fc;
  update_from_json(fc, head_ckpt.meta.at("config"));
  const SparseGraph lg = learning_graph(b.graph);
  const Embeddings z = encode(enc, lg, b.x, estimate_lambda_max(lg));
  const Matrix x = fc.standardize_features ? standardize(b.x) : b.x;
  const Vector scores = model.logits(x, z.low, z.high);
  const SplitSpec split = split_for(b, cfg);
  std::vector<double> s;
  std::vector<int> y;
  std::vector<std::optional<double>> h;
  const HomophilyStats hs = local_homophily(b.graph, b.labels);
  for (NodeId v : split.test) {
    if (b.labels[v] != 0 && b.labels[v] != 1) continue;
    s.push_back(scores[v]);
    y.push_back(b.labels[v]);
    h.push_back(hs.per_node[v]);
  }
  EvalReport r = evaluate(s, y);
  r.quartiles = quartile_analysis(s, y, h);
  r.seed = split.seed;
  r.split_id = "seed-" + std::to_string(split.seed);
  emit(to_json(r), o.out);
  return 0;
}

int cmd_run(const CommonOpts& o) {
  const GraphBundle b = load_bundle(o.bundle);
  const ExperimentConfig cfg = experiment_config(o);
  const ExperimentResult r = run_experiment(cfg, b);
  const json& t = r.aggregate.at("test");
  std::printf("%zu seed(s): AUROC %.4f +- %.4f, AUPRC %.4f +- %.4f, Rec@K %.4f +- %.4f\n",
              r.seeds.size(), t["auroc"]["mean"].get<double>(), t["auroc"]["std"].get<double>(),
              t["auprc"]["mean"].get<double>(), t["auprc"]["std"].get<double>(),
              t["rec_at_k"]["mean"].get<double>(), t["rec_at_k"]["std"].get<double>());
  std::cout << "reports in " << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_gradcheck(const CommonOpts& o) {
  const auto results = run_gradcheck_suite(o.seed.value_or(0));
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-44s %10.3e  %s\n", r.name.c_str(), r.rel_error, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral graph anomaly detection toolkit"};
  app.require_subcommand(1);
  CommonOpts o;

  auto* stats = app.add_subcommand("stats", "homophily and Rayleigh-quotient summary of a bundle");
  add_common(stats, o, true);

  auto* asbm = app.add_subcommand("asbm", "synthetic block-model instances");
  asbm->require_subcommand(1);
  auto* gen = asbm->add_subcommand("gen", "generate an instance as a bundle");
  add_common(gen, o, false);
  bool binary = false;
  gen->add_flag("--binary-features", binary, "store features as float32 binary");
  auto* verify = asbm->add_subcommand("verify", "separability harness with the oracle filter");
  add_common(verify, o, false);
  std::size_t trials = 10;
  double radius = 1.0;
  verify->add_option("--trials", trials, "number of generated instances")->check(CLI::PositiveNumber);
  verify->add_option("--radius", radius, "separator scale");

  auto* sample = app.add_subcommand("sample", "compute or refresh the RQ subgraph cache");
  add_common(sample, o, true);

  auto* pretrain = app.add_subcommand("pretrain", "pre-train the dual encoder");
  add_common(pretrain, o, true);

  std::string ckpt, head;
  auto* finetune = app.add_subcommand("finetune", "fine-tune fusion and classifier");
  add_common(finetune, o, true);
  finetune->add_option("--checkpoint", ckpt, "pre-training checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "score the test split with trained checkpoints");
  add_common(eval, o, true);
  eval->add_option("--checkpoint", ckpt, "pre-training checkpoint")->required();
  eval->add_option("--head", head, "fine-tuning checkpoint")->required();

  auto* run = app.add_subcommand("run", "full pipeline over all configured seeds");
  add_common(run, o, true);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(gradcheck, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*stats) return cmd_stats(o);
    if (*gen) return cmd_asbm_gen(o, binary);
    if (*verify) return cmd_asbm_verify(o, trials, radius);
    if (*sample) return cmd_sample(o);
    if (*pretrain) return cmd_pretrain(o);
    if (*finetune) return cmd_finetune(o, ckpt);
    if (*eval) return cmd_eval(o, ckpt, head);
    if (*run) return cmd_run(o);
    if (*gradcheck) return cmd_gradcheck(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
