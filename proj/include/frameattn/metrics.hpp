// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace frameattn {

struct MetricsReport {
  std::size_t classes = 0;
  std::vector<std::uint64_t> tp, fp, fn;
  std::vector<double> per_class_f1;
  double mean_f1 = 0.0;
  // Mean loss over the evaluated batches; NaN when no loss was recorded.
  double loss = 0.0;
  // Per-batch losses in evaluation order.
  std::vector<double> loss_trajectory;

  std::uint64_t frames() const;
};

// Per-class TP/FP/FN counts. Merging is associative and commutative, so
// evaluation shards can be reduced in any order.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t classes);

  void add(int prediction, int label);
  void add(std::span<const int> predictions, std::span<const int> labels);
  void add_loss(double batch_loss, std::size_t batch_frames);
  void merge(const MetricsAccumulator& other);

  std::size_t classes() const { return tp_.size(); }
  MetricsReport report() const;

 private:
  std::vector<std::uint64_t> tp_, fp_, fn_;
  std::vector<double> losses_;
  double loss_sum_ = 0.0;
  std::uint64_t loss_frames_ = 0;
};

// Mean over all C classes of 2TP / (2TP + FP + FN); a class whose denominator
// is zero contributes 0.
MetricsReport mean_f1(std::span<const int> predictions, std::span<const int> labels, std::size_t classes);

// {epoch, split, mean_f1, per_class_f1[], loss} plus any extra fields given.
nlohmann::json metrics_record(int epoch, const std::string& split, const MetricsReport& report,
                              const nlohmann::json& extra = nlohmann::json::object());

}  // namespace frameattn
