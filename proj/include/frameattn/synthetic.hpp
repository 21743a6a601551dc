// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-session sensor streams with a context-dependent label
// structure.
//
// A hidden first-order Markov chain over activities drives each session.
// Activities are organised in two regimes: class 0 anchors regime A, class 1
// anchors regime B, and the remaining classes come in pairs (2,3), (4,5), ...
// whose even member lives in regime A and odd member in regime B (an odd class
// left over is shared by both regimes). Within a regime the chain moves
// between that regime's members; it jumps to the other regime's anchor with a
// small probability (twice as likely from B, so regime A dominates).
//
// Each activity emits a per-channel sinusoid (offset, amplitude, frequency)
// plus Gaussian noise. With `context` on, both members of a pair emit the same
// signature, so a single frame cannot tell them apart; only the activities
// around it (which reveal the regime) can. With `context` off every class has
// its own signature.
//
// A session is redrawn until it contains every class.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "frameattn/data.hpp"

namespace frameattn {

struct SyntheticConfig {
  std::size_t classes = 6;
  std::size_t channels = 3;
  std::size_t sessions = 6;
  std::size_t length = 10000;   // samples per session
  double dwell_windows = 8.0;   // mean activity duration, in window steps
  std::size_t dwell_step = 12;  // samples per window step
  bool context = true;
  double noise = 0.4;
  double sample_rate = 30.0;
  double regime_switch = 0.02;  // per-segment A -> B jump probability
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ClassSignature {
  std::vector<double> offset, amplitude, frequency;  // per channel
};

// Regime of each class: 0 (A), 1 (B) or 2 (shared).
std::vector<int> class_regimes(std::size_t classes);
// Class whose signature class k emits (k itself unless context pairs it).
std::size_t emitted_class(std::size_t k, const SyntheticConfig& config);
std::vector<ClassSignature> class_signatures(const SyntheticConfig& config);

std::vector<Recording> generate_synthetic(const SyntheticConfig& config);

// Writes session_XX.csv files and manifest.json into `dir` (created if needed).
void write_synthetic_dataset(const std::vector<Recording>& recordings, const SyntheticConfig& config,
                             const std::filesystem::path& dir);

}  // namespace frameattn
