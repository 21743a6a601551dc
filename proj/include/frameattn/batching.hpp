// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "frameattn/data.hpp"

namespace frameattn {

enum class Strategy { kTimeSequential, kShuffled };

std::string_view strategy_name(Strategy s);
// Accepts "time-sequential" / "time_sequential" / "sequential" and "shuffled".
Strategy parse_strategy(std::string_view name);

struct BatchPlan {
  std::size_t epoch = 0;
  Strategy strategy = Strategy::kTimeSequential;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> batches;  // indices into FrameSet::frames

  nlohmann::json to_json() const;
};

// Consecutive chronological runs of up to `batch_size` frames per session (the
// last run of a session may be shorter). Contents are the same every epoch;
// the order of the batches is shuffled with derive_seed(seed, epoch).
BatchPlan time_sequential_batches(const FrameSet& frames, std::size_t batch_size, std::uint64_t seed,
                                  std::size_t epoch);

// Global per-epoch permutation of all frames, chunked into batches.
BatchPlan shuffled_batches(const FrameSet& frames, std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

BatchPlan make_plan(Strategy strategy, const FrameSet& frames, std::size_t batch_size, std::uint64_t seed,
                    std::size_t epoch);

// Chronological session-pure batches in natural order; used for evaluation.
std::vector<std::vector<std::size_t>> evaluation_batches(const FrameSet& frames, std::size_t batch_size);

}  // namespace frameattn
