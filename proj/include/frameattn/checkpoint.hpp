// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format:
//
//   "FRAMEATTN v1\n"
//   u32 record count
//   per record: u32 name length, name bytes, u32 rank, rank x u64 extents,
//               numel x f64 payload
//
// All integers and floats are little-endian.
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "frameattn/data.hpp"
#include "frameattn/model.hpp"

namespace frameattn {

inline constexpr const char* kCheckpointMagic = "FRAMEATTN v1";

struct CheckpointRecord {
  std::string name;
  Tensor tensor;
};

void write_checkpoint(const std::filesystem::path& path, std::span<const CheckpointRecord> records);
// Either every record is returned or an error is thrown.
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

// Model parameters plus, optionally, the normalizer stats (`norm.mean`,
// `norm.std`) the model was trained with.
void save_model(const std::filesystem::path& path, const ModelParams& params,
                const NormalizerStats* stats = nullptr);

// Loads parameters into the layout that `config` implies. Missing, unexpected
// or mis-shaped tensors raise ConfigError naming the tensor and both shapes.
ModelParams load_model(const std::filesystem::path& path, const ModelConfig& config,
                       NormalizerStats* stats = nullptr);

// Number of classes stored in a checkpoint (from the classifier bias).
std::size_t checkpoint_classes(std::span<const CheckpointRecord> records);

}  // namespace frameattn
