#include "apf/bundle.hpp"

#include "apf/errors.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace apf {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string BundleMeta::source_hash() const {
  return sha256_hex("edges:" + edges_hash + "\nfeatures:" + features_hash + "\n");
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + p.string());
}

[[noreturn]] void fail_at(const fs::path& file, std::size_t line, const std::string& what) {
  throw ValidationError(file.filename().string() + ":" + std::to_string(line) + ": " + what);
}

// Splits `text` into lines, dropping one trailing newline and any '\r'.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::string format_double(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

json split_to_json(const SplitSpec& s) {
  return json{{"seed", s.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test},
              {"shared_val", s.shared_val}};
}

SplitSpec split_from_json(const json& j, std::size_t n, const fs::path& file, std::size_t index) {
  SplitSpec s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<NodeId>>();
    s.val = j.at("val").get<std::vector<NodeId>>();
    s.test = j.at("test").get<std::vector<NodeId>>();
    s.shared_val = j.value("shared_val", false);
  } catch (const json::exception& e) {
    throw ValidationError(file.filename().string() + ": split " + std::to_string(index) + ": " +
                          e.what());
  }
  std::vector<int> owner(n, -1);
  auto claim = [&](const std::vector<NodeId>& ids, int tag, const char* name) {
    for (NodeId v : ids) {
      if (v >= n)
        throw ValidationError(file.filename().string() + ": split " + std::to_string(index) +
                              ": " + name + " node " + std::to_string(v) + " out of range");
      if (owner[v] != -1)
        throw ValidationError(file.filename().string() + ": split " + std::to_string(index) +
                              ": node " + std::to_string(v) + " assigned twice");
      owner[v] = tag;
    }
  };
  claim(s.train, 0, "train");
  if (!s.shared_val) claim(s.val, 1, "val");
  claim(s.test, 2, "test");
  return s;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw ValidationError(p.filename().string() + ": " + e.what());
  }
}

std::string render_edges(const SparseGraph& g) {
  std::string out = "src,dst\n";
  for (const auto& [a, b] : g.edge_list()) {
    out += std::to_string(a);
    out += ',';
    out += std::to_string(b);
    out += '\n';
  }
  return out;
}

std::string render_features(const Matrix& x) {
  std::string out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (c) out += ',';
      out += format_double(x(i, c));
    }
    out += '\n';
  }
  return out;
}

std::string render_labels(const LabelVector& labels) {
  std::string out;
  for (int y : labels) {
    out += std::to_string(y);
    out += '\n';
  }
  return out;
}

constexpr char kFeatureMagic[8] = {'A', 'P', 'F', 'F', 'E', 'A', 'T', '1'};

std::string render_feature_binary(const Matrix& x) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::string out(kFeatureMagic, 8);
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(x.rows()),
                                 static_cast<std::uint64_t>(x.cols())};
  out.append(reinterpret_cast<const char*>(dims), sizeof dims);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const float f = static_cast<float>(x(i, c));
      out.append(reinterpret_cast<const char*>(&f), sizeof f);
    }
  return out;
}

Matrix parse_feature_binary(std::string_view bytes, const fs::path& file) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kFeatureMagic, 8) != 0)
    throw ValidationError(file.filename().string() + ": bad magic header");
  std::uint64_t dims[2];
  std::memcpy(dims, bytes.data() + 8, sizeof dims);
  if (dims[1] != 0 && dims[0] > (bytes.size() - 24) / 4 / dims[1])
    throw ValidationError(file.filename().string() + ": truncated payload");
  const std::size_t count = dims[0] * dims[1];
  if (bytes.size() != 24 + 4 * count)
    throw ValidationError(file.filename().string() + ": payload size does not match header");
  Matrix x(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  const char* p = bytes.data() + 24;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      float f;
      std::memcpy(&f, p, sizeof f);
      p += sizeof f;
      if (!std::isfinite(f))
        throw ValidationError(file.filename().string() + ": non-finite value at row " +
                              std::to_string(i) + ", column " + std::to_string(c));
      x(i, c) = f;
    }
  return x;
}

std::vector<Edge> parse_edges(std::string_view text, std::size_t n, const fs::path& file) {
  std::vector<Edge> edges;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = trim(lines[ln]);
    if (ln == 0 && line == "src,dst") continue;
    if (line.empty()) fail_at(file, ln + 1, "empty line");
    const auto f = split_fields(line);
    if (f.size() != 2) fail_at(file, ln + 1, "expected 2 fields, found " + std::to_string(f.size()));
    const auto a = parse_number<std::uint64_t>(f[0]);
    const auto b = parse_number<std::uint64_t>(f[1]);
    if (!a || !b) fail_at(file, ln + 1, "malformed node id");
    if (*a >= n || *b >= n)
      fail_at(file, ln + 1, "node id out of range (n = " + std::to_string(n) + ")");
    edges.emplace_back(static_cast<NodeId>(*a), static_cast<NodeId>(*b));
  }
  return edges;
}

Matrix parse_features(std::string_view text, std::size_t n, std::size_t d, const fs::path& file) {
  const auto lines = split_lines(text);
  if (lines.size() != n)
    throw ValidationError(file.filename().string() + ": expected " + std::to_string(n) +
                          " rows, found " + std::to_string(lines.size()));
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto f = split_fields(lines[ln]);
    if (f.size() != d)
      fail_at(file, ln + 1,
              "expected " + std::to_string(d) + " values, found " + std::to_string(f.size()));
    for (std::size_t c = 0; c < d; ++c) {
      const auto v = parse_number<double>(f[c]);
      if (!v) fail_at(file, ln + 1, "malformed value in column " + std::to_string(c + 1));
      if (!std::isfinite(*v)) fail_at(file, ln + 1, "non-finite value in column " + std::to_string(c + 1));
      x(static_cast<Eigen::Index>(ln), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  return x;
}

LabelVector parse_labels(std::string_view text, std::size_t n, const fs::path& file) {
  const auto lines = split_lines(text);
  if (lines.size() != n)
    throw ValidationError(file.filename().string() + ": expected " + std::to_string(n) +
                          " rows, found " + std::to_string(lines.size()));
  LabelVector labels(n);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto v = parse_number<int>(lines[ln]);
    if (!v || (*v != 0 && *v != 1 && *v != -1)) fail_at(file, ln + 1, "label must be 0, 1 or -1");
    labels[ln] = *v;
  }
  return labels;
}

json meta_to_json(const BundleMeta& m) {
  return json{{"format", kBundleFormat},
              {"version", m.version},
              {"num_nodes", m.num_nodes},
              {"num_edges", m.num_edges},
              {"feature_dim", m.feature_dim},
              {"features_file", m.features_file},
              {"has_splits", m.has_splits},
              {"hashes", {{"edges", m.edges_hash}, {"features", m.features_hash},
                          {"labels", m.labels_hash}}}};
}

BundleMeta meta_from_json(const json& j, const fs::path& file) {
  BundleMeta m;
  try {
    if (j.at("format").get<std::string>() != kBundleFormat)
      throw ValidationError(file.filename().string() + ": unknown format tag");
    m.version = j.at("version").get<int>();
    if (m.version != kBundleVersion)
      throw ValidationError(file.filename().string() + ": unsupported version " +
                            std::to_string(m.version));
    m.num_nodes = j.at("num_nodes").get<std::size_t>();
    m.num_edges = j.at("num_edges").get<std::size_t>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.features_file = j.value("features_file", std::string("features.csv"));
    m.has_splits = j.value("has_splits", false);
    if (j.contains("hashes")) {
      const auto& h = j.at("hashes");
      m.edges_hash = h.value("edges", std::string());
      m.features_hash = h.value("features", std::string());
      m.labels_hash = h.value("labels", std::string());
    }
  } catch (const json::exception& e) {
    throw ValidationError(file.filename().string() + ": " + e.what());
  }
  if (m.num_nodes == 0) throw ValidationError(file.filename().string() + ": num_nodes is zero");
  if (m.features_file != "features.csv" && m.features_file != "features.bin")
    throw ValidationError(file.filename().string() + ": features_file must be features.csv or features.bin");
  return m;
}

void check_hash(const std::string& expected, const std::string& bytes, const fs::path& file) {
  if (!expected.empty() && sha256_hex(bytes) != expected)
    throw ValidationError(file.filename().string() + ": content hash does not match meta.json");
}

}  // namespace

void write_feature_binary(const fs::path& file, const Matrix& x) {
  write_file(file, render_feature_binary(x));
}

Matrix read_feature_binary(const fs::path& file) {
  return parse_feature_binary(read_file(file), file);
}

GraphBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("bundle directory not found: " + dir.string());
  GraphBundle b;
  b.dir = dir;
  b.meta = meta_from_json(read_json(dir / "meta.json"), dir / "meta.json");
  const std::size_t n = b.meta.num_nodes;

  const fs::path edges_file = dir / "edges.csv";
  const std::string edges_text = read_file(edges_file);
  check_hash(b.meta.edges_hash, edges_text, edges_file);
  const auto edges = parse_edges(edges_text, n, edges_file);
  if (edges.size() != b.meta.num_edges)
    throw ValidationError("edges.csv: meta.json declares " + std::to_string(b.meta.num_edges) +
                          " edges, table has " + std::to_string(edges.size()));
  b.graph = SparseGraph::build(edges, n, false);

  const fs::path feat_file = dir / b.meta.features_file;
  const std::string feat_bytes = read_file(feat_file);
  check_hash(b.meta.features_hash, feat_bytes, feat_file);
  if (b.meta.features_file == "features.bin") {
    b.x = parse_feature_binary(feat_bytes, feat_file);
    if (static_cast<std::size_t>(b.x.rows()) != n ||
        static_cast<std::size_t>(b.x.cols()) != b.meta.feature_dim)
      throw ValidationError("features.bin: header dims do not match meta.json");
  } else {
    b.x = parse_features(feat_bytes, n, b.meta.feature_dim, feat_file);
  }

  const fs::path label_file = dir / "labels.csv";
  const std::string label_text = read_file(label_file);
  check_hash(b.meta.labels_hash, label_text, label_file);
  b.labels = parse_labels(label_text, n, label_file);

  const fs::path split_file = dir / "splits.json";
  if (fs::exists(split_file)) {
    const json j = read_json(split_file);
    if (!j.contains("splits") || !j["splits"].is_array())
      throw ValidationError("splits.json: missing 'splits' array");
    for (std::size_t i = 0; i < j["splits"].size(); ++i)
      b.splits.push_back(split_from_json(j["splits"][i], n, split_file, i));
  } else if (b.meta.has_splits) {
    throw ValidationError("meta.json declares splits but splits.json is missing");
  }
  return b;
}

BundleMeta save_bundle(const fs::path& dir, const SparseGraph& g, const Matrix& x,
                       const LabelVector& labels, const std::vector<SplitSpec>& splits,
                       const BundleWriteOptions& opts) {
  if (static_cast<std::size_t>(x.rows()) != g.num_nodes() || labels.size() != g.num_nodes())
    throw ValidationError("save_bundle: table sizes disagree with the graph");
  if (!x.allFinite()) throw ValidationError("save_bundle: features contain non-finite values");
  fs::create_directories(dir);

  BundleMeta m;
  m.num_nodes = g.num_nodes();
  m.num_edges = g.num_edges();
  m.feature_dim = static_cast<std::size_t>(x.cols());
  m.features_file = opts.binary_features ? "features.bin" : "features.csv";
  m.has_splits = !splits.empty();

  const std::string edges = render_edges(g);
  const std::string feats = opts.binary_features ? render_feature_binary(x) : render_features(x);
  const std::string labs = render_labels(labels);
  m.edges_hash = sha256_hex(edges);
  m.features_hash = sha256_hex(feats);
  m.labels_hash = sha256_hex(labs);

  write_file(dir / "edges.csv", edges);
  write_file(dir / m.features_file, feats);
  const fs::path other = dir / (opts.binary_features ? "features.csv" : "features.bin");
  if (fs::exists(other)) fs::remove(other);
  write_file(dir / "labels.csv", labs);
  if (m.has_splits) {
    json j{{"version", kBundleVersion}, {"splits", json::array()}};
    for (const auto& s : splits) j["splits"].push_back(split_to_json(s));
    write_file(dir / "splits.json", j.dump(2) + "\n");
  } else if (fs::exists(dir / "splits.json")) {
    fs::remove(dir / "splits.json");
  }
  write_file(dir / "meta.json", meta_to_json(m).dump(2) + "\n");
  return m;
}

void save_splits(const fs::path& dir, const std::vector<SplitSpec>& splits) {
  BundleMeta m = meta_from_json(read_json(dir / "meta.json"), dir / "meta.json");
  json j{{"version", kBundleVersion}, {"splits", json::array()}};
  for (std::size_t i = 0; i < splits.size(); ++i) {
    j["splits"].push_back(split_to_json(splits[i]));
    split_from_json(j["splits"][i], m.num_nodes, dir / "splits.json", i);
  }
  write_file(dir / "splits.json", j.dump(2) + "\n");
  m.has_splits = true;
  write_file(dir / "meta.json", meta_to_json(m).dump(2) + "\n");
}

std::string rq_cache_key(const BundleMeta& meta, const SamplerConfig& cfg) {
  std::ostringstream ss;
  ss << meta.source_hash() << "|hop=" << cfg.hop_limit << "|budget=" << cfg.candidate_budget
     << "|eps=" << format_double(cfg.epsilon);
  return sha256_hex(ss.str());
}

void save_rq_cache(const fs::path& file, const std::string& key, const SamplerConfig& cfg,
                   const std::vector<RqSubgraph>& subgraphs) {
  json j{{"version", kBundleVersion},
         {"key", key},
         {"sampler",
          {{"hop_limit", cfg.hop_limit},
           {"candidate_budget", cfg.candidate_budget},
           {"epsilon", cfg.epsilon}}},
         {"subgraphs", json::array()}};
  for (const auto& s : subgraphs)
    j["subgraphs"].push_back(json{{"center", s.center}, {"members", s.members}, {"rq", s.rq_value}});
  write_file(file, j.dump() + "\n");
}

std::optional<std::vector<RqSubgraph>> load_rq_cache(const fs::path& file, const std::string& key) {
  if (!fs::exists(file)) return std::nullopt;
  const json j = read_json(file);
  try {
    if (j.at("key").get<std::string>() != key) return std::nullopt;
    const int hop = j.at("sampler").at("hop_limit").get<int>();
    std::vector<RqSubgraph> out;
    for (const auto& e : j.at("subgraphs")) {
      RqSubgraph s;
      s.center = e.at("center").get<NodeId>();
      s.members = e.at("members").get<std::vector<NodeId>>();
      s.rq_value = e.at("rq").get<double>();
      s.hop_limit = hop;
      out.push_back(std::move(s));
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(file.filename().string() + ": " + e.what());
  }
}

std::vector<RqSubgraph> load_or_sample_subgraphs(const GraphBundle& bundle,
                                                 const SamplerConfig& cfg, bool* cache_hit) {
  BundleMeta meta = bundle.meta;
  if (meta.edges_hash.empty() || meta.features_hash.empty()) {
    meta.edges_hash = sha256_hex(render_edges(bundle.graph));
    meta.features_hash = sha256_hex(render_features(bundle.x));
  }
  const std::string key = rq_cache_key(meta, cfg);
  const fs::path file = bundle.dir / "rq_cache.json";
  if (!bundle.dir.empty()) {
    if (auto cached = load_rq_cache(file, key)) {
      if (cached->size() == bundle.graph.num_nodes()) {
        if (cache_hit) *cache_hit = true;
        return std::move(*cached);
      }
    }
  }
  if (cache_hit) *cache_hit = false;
  auto subgraphs = sample_all(bundle.graph, bundle.x, cfg);
  if (!bundle.dir.empty()) save_rq_cache(file, key, cfg, subgraphs);
  return subgraphs;
}

}  // namespace apf
