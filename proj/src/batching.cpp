// SPDX-License-Identifier: Apache-2.0
#include "frameattn/batching.hpp"

#include <algorithm>
#include <numeric>

#include "frameattn/error.hpp"
#include "frameattn/rng.hpp"

namespace frameattn {

std::string_view strategy_name(Strategy s) {
  return s == Strategy::kShuffled ? "shuffled" : "time-sequential";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "time-sequential" || name == "time_sequential" || name == "sequential") return Strategy::kTimeSequential;
  if (name == "shuffled" || name == "shuffle") return Strategy::kShuffled;
  throw ConfigError("unknown batching strategy '" + std::string(name) + "' (time-sequential | shuffled)");
}

nlohmann::json BatchPlan::to_json() const {
  return {{"epoch", epoch}, {"strategy", strategy_name(strategy)}, {"seed", seed}, {"batches", batches}};
}

namespace {

void check_batch_size(std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

}  // namespace

std::vector<std::vector<std::size_t>> evaluation_batches(const FrameSet& frames, std::size_t batch_size) {
  check_batch_size(batch_size);
  // Frames grouped by session, each group in chrono order.
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&frames](std::size_t a, std::size_t b) {
    const auto& fa = frames.frames[a];
    const auto& fb = frames.frames[b];
    if (fa.session != fb.session) return fa.session < fb.session;
    return fa.chrono_index < fb.chrono_index;
  });
  std::vector<std::vector<std::size_t>> batches;
  std::size_t i = 0;
  while (i < order.size()) {
    const std::size_t session = frames.frames[order[i]].session;
    std::vector<std::size_t> batch;
    while (i < order.size() && batch.size() < batch_size && frames.frames[order[i]].session == session) {
      batch.push_back(order[i++]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

BatchPlan time_sequential_batches(const FrameSet& frames, std::size_t batch_size, std::uint64_t seed,
                                  std::size_t epoch) {
  BatchPlan plan{epoch, Strategy::kTimeSequential, seed, evaluation_batches(frames, batch_size)};
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(std::span(plan.batches));
  return plan;
}

BatchPlan shuffled_batches(const FrameSet& frames, std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  check_batch_size(batch_size);
  BatchPlan plan{epoch, Strategy::kShuffled, seed, {}};
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(std::span(order));
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

BatchPlan make_plan(Strategy strategy, const FrameSet& frames, std::size_t batch_size, std::uint64_t seed,
                    std::size_t epoch) {
  return strategy == Strategy::kShuffled ? shuffled_batches(frames, batch_size, seed, epoch)
                                         : time_sequential_batches(frames, batch_size, seed, epoch);
}

}  // namespace frameattn
