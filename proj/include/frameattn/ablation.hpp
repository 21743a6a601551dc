// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frameattn/config.hpp"

namespace frameattn {

// Named component settings; `disable` uses the model.disable syntax.
struct AblationVariant {
  std::string name;
  std::string disable;
};

// baseline, intra, inter, intra+inter, full, isolated.
const std::vector<AblationVariant>& ablation_variants();
const AblationVariant& find_variant(std::string_view name);

struct AblationGrid {
  std::vector<Strategy> strategies;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;

  std::size_t cells() const { return strategies.size() * batch_sizes.size() * variants.size(); }
  void validate() const;
};

struct AblationCell {
  Strategy strategy = Strategy::kTimeSequential;
  std::size_t batch_size = 0;
  std::string variant;
  std::string disable;
  std::vector<double> test_f1;  // one per seed
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample standard deviation over seeds (0 for one seed)
  bool ok = true;
  std::string error;
  double seconds = 0.0;
};

// Trains every (strategy, batch size, variant) cell once per seed on the
// same session splits and reports test mean F1 of the best-validation
// checkpoint. A failing cell is recorded and the sweep continues.
std::vector<AblationCell> run_ablation(const RunConfig& base, std::span<const Recording> recordings,
                                       const AblationGrid& grid,
                                       const std::function<void(const std::string&)>& log = {});

// Header plus one row per cell.
void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationCell> cells);

}  // namespace frameattn
