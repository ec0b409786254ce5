#include "apf/checkpoint.hpp"

#include "apf/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace apf {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr char kMagic[8] = {'A', 'P', 'F', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof v), sizeof v);
    return v;
  }
  std::string str(std::size_t len) { return std::string(take(len), len); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const char* take(std::size_t len) {
    if (len > bytes_.size() - pos_) throw ValidationError(name_ + ": truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += len;
    return p;
  }
  std::string bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

void store(const ParamRefs& params, Checkpoint& ckpt) {
  for (const Param* p : params) ckpt.tensors.emplace_back(p->name, p->value);
}

void load_into(const ParamRefs& params, const Checkpoint& ckpt) {
  for (Param* p : params) {
    const Matrix& m = ckpt.tensor(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw ValidationError("checkpoint tensor '" + p->name + "' has the wrong shape");
    p->value = m;
    p->zero_grad();
  }
}

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw ValidationError("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const fs::path& file, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + file.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ValidationError("write failed for " + file.string());
}

Checkpoint load_checkpoint(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + file.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str(), file.filename().string());
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
    throw ValidationError(file.filename().string() + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ValidationError(file.filename().string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.meta = json::parse(r.str(r.get<std::uint32_t>()));
  } catch (const json::parse_error& e) {
    throw ValidationError(file.filename().string() + ": bad meta block: " + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.str(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols != 0 && rows > (1ULL << 40) / cols)
      throw ValidationError(file.filename().string() + ": implausible tensor shape");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.get<double>();
    if (!m.allFinite())
      throw ValidationError(file.filename().string() + ": tensor '" + name + "' is not finite");
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw ValidationError(file.filename().string() + ": trailing bytes");
  return ckpt;
}

json to_json(const PretrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"patience", c.patience},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"embed_dim", c.embed_dim},
              {"order", c.order},
              {"activation", std::string(to_string(c.activation))},
              {"norm", std::string(to_string(c.norm))},
              {"independent_shuffles", c.independent_shuffles},
              {"standardize_in_loss", c.standardize_in_loss},
              {"seed", c.seed}};
}

json to_json(const FinetuneConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"p_a", c.targets.p_a},
              {"p_n", c.targets.p_n},
              {"use_reg", c.use_reg},
              {"fusion", std::string(to_string(c.fusion))},
              {"activation", std::string(to_string(c.activation))},
              {"standardize_features", c.standardize_features},
              {"seed", c.seed}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw ValidationError(std::string(section) + " config must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError(std::string("unknown ") + section + " config field '" + k + "'");
  }
}

}  // namespace

void update_from_json(PretrainConfig& c, const json& j) {
  check_keys(j, {"epochs", "patience", "learning_rate", "weight_decay", "embed_dim", "order",
                 "activation", "norm", "independent_shuffles", "standardize_in_loss", "seed"},
             "pretrain");
  read_field(j, "epochs", c.epochs);
  read_field(j, "patience", c.patience);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "embed_dim", c.embed_dim);
  read_field(j, "order", c.order);
  read_field(j, "independent_shuffles", c.independent_shuffles);
  read_field(j, "standardize_in_loss", c.standardize_in_loss);
  read_field(j, "seed", c.seed);
  std::string s;
  if (j.contains("activation")) {
    read_field(j, "activation", s);
    c.activation = parse_activation(s);
  }
  if (j.contains("norm")) {
    read_field(j, "norm", s);
    c.norm = parse_norm(s);
  }
}

void update_from_json(FinetuneConfig& c, const json& j) {
  check_keys(j, {"epochs", "learning_rate", "weight_decay", "p_a", "p_n", "use_reg", "fusion",
                 "activation", "standardize_features", "seed"},
             "finetune");
  read_field(j, "epochs", c.epochs);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "p_a", c.targets.p_a);
  read_field(j, "p_n", c.targets.p_n);
  read_field(j, "use_reg", c.use_reg);
  read_field(j, "standardize_features", c.standardize_features);
  read_field(j, "seed", c.seed);
  std::string s;
  if (j.contains("fusion")) {
    read_field(j, "fusion", s);
    c.fusion = parse_fusion(s);
  }
  if (j.contains("activation")) {
    read_field(j, "activation", s);
    c.activation = parse_activation(s);
  }
}

Checkpoint make_pretrain_checkpoint(DualEncoder& enc, Discriminators& disc,
                                    const PretrainConfig& cfg, Eigen::Index in_dim) {
  Checkpoint ckpt;
  ckpt.meta = json{{"kind", "pretrain"}, {"in_dim", in_dim}, {"config", to_json(cfg)}};
  store(enc.params(), ckpt);
  store(disc.params(), ckpt);
  return ckpt;
}

std::pair<DualEncoder, Discriminators> restore_pretrain(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "pretrain")
    throw ValidationError("checkpoint is not a pre-training checkpoint");
  PretrainConfig cfg;
  update_from_json(cfg, ckpt.meta.at("config"));
  const auto in_dim = ckpt.meta.at("in_dim").get<Eigen::Index>();
  std::mt19937_64 rng(0);
  DualEncoder enc =
      DualEncoder::create(in_dim, cfg.embed_dim, cfg.order, cfg.activation, cfg.norm, rng);
  Discriminators disc = Discriminators::create(cfg.embed_dim, rng);
  load_into(enc.params(), ckpt);
  load_into(disc.params(), ckpt);
  return {std::move(enc), std::move(disc)};
}

Checkpoint make_finetune_checkpoint(FinetuneModel& model, const FinetuneConfig& cfg,
                                    Eigen::Index feat_dim, Eigen::Index embed_dim) {
  Checkpoint ckpt;
  ckpt.meta = json{{"kind", "finetune"},
                   {"feat_dim", feat_dim},
                   {"embed_dim", embed_dim},
                   {"config", to_json(cfg)}};
  store(model.params(), ckpt);
  return ckpt;
}

FinetuneModel restore_finetune(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "finetune")
    throw ValidationError("checkpoint is not a fine-tuning checkpoint");
  FinetuneConfig cfg;
  update_from_json(cfg, ckpt.meta.at("config"));
  std::mt19937_64 rng(0);
  FinetuneModel model = FinetuneModel::create(cfg, ckpt.meta.at("feat_dim").get<Eigen::Index>(),
                                              ckpt.meta.at("embed_dim").get<Eigen::Index>(), rng);
  load_into(model.params(), ckpt);
  return model;
}

}  // namespace apf
