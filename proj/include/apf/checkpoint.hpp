#pragma once

#include "apf/finetune.hpp"
#include "apf/pretrain.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace apf {

// Binary layout (little-endian):
//   "APFCKPT\0" | u32 version | u32 meta length | meta JSON bytes |
//   u32 tensor count | per tensor: u32 name length, name, u64 rows,
//   u64 cols, rows*cols f64 values in row-major order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& tensor(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

Checkpoint make_pretrain_checkpoint(DualEncoder& enc, Discriminators& disc,
                                    const PretrainConfig& cfg, Eigen::Index in_dim);
std::pair<DualEncoder, Discriminators> restore_pretrain(const Checkpoint& ckpt);

Checkpoint make_finetune_checkpoint(FinetuneModel& model, const FinetuneConfig& cfg,
                                    Eigen::Index feat_dim, Eigen::Index embed_dim);
FinetuneModel restore_finetune(const Checkpoint& ckpt);

nlohmann::json to_json(const PretrainConfig& cfg);
nlohmann::json to_json(const FinetuneConfig& cfg);
/// Fields missing from `j` keep the values already in `cfg`.
void update_from_json(PretrainConfig& cfg, const nlohmann::json& j);
void update_from_json(FinetuneConfig& cfg, const nlohmann::json& j);

}  // namespace apf
