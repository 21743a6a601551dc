// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: an INI-style file with sections
//
//   [run]        seed, out
//   [model]      d_model, heads, experts, classes, conv_blocks, kernel, dropout, disable
//   [window]     size, step, label_rule
//   [train]      epochs, batch_size, lr, weight_decay, plateau_patience, lr_factor,
//                min_lr, grad_clip, strategy
//   [loss]       lambda, beta, gamma
//   [data]       dir, val_sessions, test_sessions
//   [synthetic]  classes, channels, sessions, length, dwell_windows, dwell_step,
//                context, noise, sample_rate, regime_switch
//
// Every key can also be set from the command line as `section.key=value`.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "frameattn/data.hpp"
#include "frameattn/model.hpp"
#include "frameattn/synthetic.hpp"
#include "frameattn/train.hpp"

namespace frameattn {

struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path data_dir = "data/synthetic";
  ModelConfig model;
  WindowSpec window;
  TrainConfig train;
  SplitSpec split;
  SyntheticConfig synthetic;
  bool focal_disabled = false;  // "focal" in model.disable: lambda forced to 0

  // `section.key`; unknown keys and malformed values raise ConfigError.
  void set(std::string_view key, std::string_view value);
  void load_ini(const std::filesystem::path& path);
  // Inverse of to_json(); used to resume from a run directory.
  void load_json(const nlohmann::json& j);
  static RunConfig from_json_file(const std::filesystem::path& path);

  // Propagates shared values (seed, window length) into the sub-configs and
  // validates everything.
  void resolve();

  nlohmann::json to_json() const;
  static std::vector<std::string> keys();
};

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace frameattn
