// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "frameattn/model.hpp"

namespace frameattn {

struct GradcheckSuiteConfig {
  std::size_t batch = 4;
  std::size_t window = 16;
  std::size_t channels = 3;
  std::size_t d_model = 8;
  std::size_t heads = 2;
  std::size_t experts = 2;
  std::size_t classes = 4;
  std::size_t conv_blocks = 3;
  std::size_t kernel = 5;
  std::uint64_t seed = 7;
  double eps = 1e-5;
  double threshold = 1e-4;

  ModelConfig model_config() const;
};

struct GradcheckRow {
  std::string block;
  double max_rel_error = 0.0;
  std::size_t entries = 0;  // number of probed scalars
  std::string worst;        // "input[index]" of the worst entry
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double threshold = 0.0;
  double seconds = 0.0;

  bool passed() const;
};

// Blocks, in order: backbone, positional_encoding, intra_attention,
// inter_attention, combine_attention, concat_projection, multi_head, gate,
// gated_fusion, moe, loss.cross_entropy, loss.focal, loss.combined, model.
GradcheckReport run_gradcheck_suite(const GradcheckSuiteConfig& config = {});

}  // namespace frameattn
