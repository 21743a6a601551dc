// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "frameattn/batching.hpp"
#include "frameattn/error.hpp"
#include "frameattn/rng.hpp"

using namespace frameattn;

namespace {

// Frames of `sizes[s]` windows per session, chronologically numbered.
FrameSet frames_of(const std::vector<std::size_t>& sizes) {
  FrameSet f;
  f.window = 1;
  f.channels = 1;
  std::size_t chrono = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    f.sessions.push_back("s" + std::to_string(s));
    for (std::size_t i = 0; i < sizes[s]; ++i) {
      Frame fr;
      fr.data = {static_cast<double>(chrono)};
      fr.chrono_index = chrono++;
      fr.session = s;
      fr.start = i;
      f.frames.push_back(fr);
    }
  }
  return f;
}

std::vector<std::size_t> flat_sorted(const BatchPlan& p) {
  std::vector<std::size_t> all;
  for (const auto& b : p.batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::set<std::vector<std::size_t>> contents(const BatchPlan& p) { return {p.batches.begin(), p.batches.end()}; }

}  // namespace

TEST_CASE("time-sequential example N=10 B=4") {
  const FrameSet f = frames_of({10});
  const BatchPlan p = time_sequential_batches(f, 4, 1, 1);
  const std::set<std::vector<std::size_t>> expect = {{0, 1, 2, 3}, {4, 5, 6, 7}, {8, 9}};
  CHECK(contents(p) == expect);
  CHECK(p.batches.size() == 3);
}

TEST_CASE("batch size at least N gives a single batch") {
  const FrameSet f = frames_of({7});
  for (Strategy s : {Strategy::kTimeSequential, Strategy::kShuffled}) {
    const BatchPlan p = make_plan(s, f, 7, 3, 1);
    REQUIRE(p.batches.size() == 1);
    CHECK(flat_sorted(p) == iota(7));
    CHECK(make_plan(s, f, 100, 3, 2).batches.size() == 1);
  }
  CHECK(time_sequential_batches(f, 100, 3, 2).batches[0] == iota(7));
}

TEST_CASE("epochs reorder time-sequential batches without changing contents") {
  const FrameSet f = frames_of({40});
  const BatchPlan e1 = time_sequential_batches(f, 4, 7, 1);
  const BatchPlan e2 = time_sequential_batches(f, 4, 7, 2);
  CHECK(contents(e1) == contents(e2));
  CHECK(e1.batches != e2.batches);
}

TEST_CASE("empty frame set gives an empty plan") {
  const FrameSet f = frames_of({});
  CHECK(time_sequential_batches(f, 4, 1, 1).batches.empty());
  CHECK(shuffled_batches(f, 4, 1, 1).batches.empty());
  CHECK(evaluation_batches(f, 4).empty());
}

TEST_CASE("batch size zero is a configuration error") {
  const FrameSet f = frames_of({3});
  CHECK_THROWS_AS(time_sequential_batches(f, 0, 1, 1), ConfigError);
  CHECK_THROWS_AS(shuffled_batches(f, 0, 1, 1), ConfigError);
}

TEST_CASE("sampler properties over random cases") {
  Rng rng(31337);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::size_t> sizes(1 + rng.below(4));
    for (auto& s : sizes) s = rng.below(80);
    const FrameSet f = frames_of(sizes);
    const std::size_t n = f.size();
    const std::size_t b = 1 + rng.below(20);
    const std::uint64_t seed = rng.next();
    INFO("case " << rep << " N=" << n << " B=" << b);

    const BatchPlan t1 = time_sequential_batches(f, b, seed, 1);
    const BatchPlan t2 = time_sequential_batches(f, b, seed, 2);
    const BatchPlan s1 = shuffled_batches(f, b, seed, 1);
    CHECK(flat_sorted(t1) == iota(n));
    CHECK(flat_sorted(s1) == iota(n));
    for (const auto& batch : t1.batches) {
      CHECK(!batch.empty());
      CHECK(batch.size() <= b);
      for (std::size_t i = 1; i < batch.size(); ++i) {
        CHECK(f.frames[batch[i]].chrono_index > f.frames[batch[i - 1]].chrono_index);
        CHECK(f.frames[batch[i]].session == f.frames[batch[0]].session);
      }
    }
    for (const auto& batch : s1.batches) CHECK(batch.size() <= b);
    CHECK(contents(t1) == contents(t2));
    if (t1.batches.size() >= 4) {
      // order must move at least once over a few epochs
      bool moved = false;
      for (std::size_t e = 2; e <= 4; ++e) moved |= time_sequential_batches(f, b, seed, e).batches != t1.batches;
      CHECK(moved);
    }
    CHECK(time_sequential_batches(f, b, seed, 1).batches == t1.batches);
    CHECK(shuffled_batches(f, b, seed, 1).batches == s1.batches);
  }
}

TEST_CASE("shuffled batches of 1000 frames are never chronological") {
  const FrameSet f = frames_of({1000});
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BatchPlan p = shuffled_batches(f, 128, seed, 1);
    CHECK(p.batches.size() == 8);
    CHECK(p.batches.back().size() == 1000 - 7 * 128);
    for (const auto& batch : p.batches) CHECK_FALSE(std::is_sorted(batch.begin(), batch.end()));
  }
}

TEST_CASE("evaluation batches are chronological and session pure") {
  const FrameSet f = frames_of({5, 3});
  const auto batches = evaluation_batches(f, 4);
  const std::vector<std::vector<std::size_t>> expect = {{0, 1, 2, 3}, {4}, {5, 6, 7}};
  CHECK(batches == expect);
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("time-sequential") == Strategy::kTimeSequential);
  CHECK(parse_strategy("time_sequential") == Strategy::kTimeSequential);
  CHECK(parse_strategy("shuffled") == Strategy::kShuffled);
  CHECK(strategy_name(Strategy::kShuffled) == "shuffled");
  CHECK_THROWS_AS(parse_strategy("random"), ConfigError);
}

TEST_CASE("plan json") {
  const BatchPlan p = time_sequential_batches(frames_of({5}), 2, 9, 3);
  const auto j = p.to_json();
  CHECK(j["epoch"] == 3);
  CHECK(j["strategy"] == "time-sequential");
  CHECK(j["batches"].size() == 3);
}
