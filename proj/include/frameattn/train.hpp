// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "frameattn/batching.hpp"
#include "frameattn/data.hpp"
#include "frameattn/losses.hpp"
#include "frameattn/metrics.hpp"
#include "frameattn/model.hpp"
#include "frameattn/optim.hpp"

namespace frameattn {

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  std::size_t plateau_patience = 10;
  double lr_factor = 0.5;
  double min_lr = 1e-6;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  LossConfig loss;
  Strategy strategy = Strategy::kTimeSequential;
  std::uint64_t seed = 0;

  void validate() const;
  AdamWConfig adamw() const;
  PlateauConfig plateau() const;
};

// Sessions are assigned whole: the last `test_sessions` recordings form the
// test split, the `val_sessions` before them the validation split, and the
// rest the training split. With test_sessions = 0 there is no test split and
// training ends without a test evaluation.
struct SplitSpec {
  std::size_t val_sessions = 1;
  std::size_t test_sessions = 1;
};

struct DataSplits {
  FrameSet train, val, test;
  NormalizerStats stats;  // fitted on the training recordings
  std::vector<std::string> train_sessions, val_sessions, test_sessions;
};

DataSplits make_splits(std::span<const Recording> recordings, const WindowSpec& window, const SplitSpec& split);

// Normalizes with `stats` and segments.
FrameSet prepare_frames(std::span<const Recording> recordings, const NormalizerStats& stats, const WindowSpec& window);

// Eval-mode pass over chronological, session-pure batches. Never touches
// parameters or gradients.
MetricsReport evaluate(const ModelParams& params, const ModelConfig& config, const FrameSet& frames,
                       std::size_t batch_size, const LossConfig& loss);

struct TrainOutputs {
  // Each is optional; empty paths are skipped.
  std::filesystem::path metrics_path;     // JSON lines
  std::filesystem::path checkpoint_path;  // best-validation parameters
  std::filesystem::path plan_path;        // JSON lines, one batch plan per epoch
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_f1 = -1.0;
  MetricsReport test;  // empty when there is no test split
  std::vector<double> train_losses;  // per epoch
  std::vector<double> learning_rates;  // lr in effect during each epoch
  std::vector<nlohmann::json> records;
};

TrainResult train(const ModelConfig& model, const DataSplits& data, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

}  // namespace frameattn
