// SPDX-License-Identifier: Apache-2.0
#include "frameattn/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "frameattn/error.hpp"

namespace frameattn {

std::uint64_t MetricsReport::frames() const {
  return std::accumulate(tp.begin(), tp.end(), std::uint64_t{0}) +
         std::accumulate(fn.begin(), fn.end(), std::uint64_t{0});
}

MetricsAccumulator::MetricsAccumulator(std::size_t classes) : tp_(classes), fp_(classes), fn_(classes) {
  if (classes == 0) throw ConfigError("metrics need at least one class");
}

void MetricsAccumulator::add(int prediction, int label) {
  const auto c = static_cast<int>(classes());
  if (prediction < 0 || prediction >= c || label < 0 || label >= c) {
    throw DataError("class id out of range [0, " + std::to_string(c) + "): prediction " +
                    std::to_string(prediction) + ", label " + std::to_string(label));
  }
  if (prediction == label) {
    ++tp_[static_cast<std::size_t>(label)];
  } else {
    ++fp_[static_cast<std::size_t>(prediction)];
    ++fn_[static_cast<std::size_t>(label)];
  }
}

void MetricsAccumulator::add(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw DataError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) add(predictions[i], labels[i]);
}

void MetricsAccumulator::add_loss(double batch_loss, std::size_t batch_frames) {
  losses_.push_back(batch_loss);
  loss_sum_ += batch_loss * static_cast<double>(batch_frames);
  loss_frames_ += batch_frames;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  if (other.classes() != classes()) throw ContractError("cannot merge accumulators with different class counts");
  for (std::size_t c = 0; c < classes(); ++c) {
    tp_[c] += other.tp_[c];
    fp_[c] += other.fp_[c];
    fn_[c] += other.fn_[c];
  }
  losses_.insert(losses_.end(), other.losses_.begin(), other.losses_.end());
  loss_sum_ += other.loss_sum_;
  loss_frames_ += other.loss_frames_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.classes = classes();
  r.tp = tp_;
  r.fp = fp_;
  r.fn = fn_;
  r.per_class_f1.resize(classes());
  double total = 0.0;
  for (std::size_t c = 0; c < classes(); ++c) {
    const double denom = 2.0 * static_cast<double>(tp_[c]) + static_cast<double>(fp_[c]) + static_cast<double>(fn_[c]);
    r.per_class_f1[c] = denom > 0.0 ? 2.0 * static_cast<double>(tp_[c]) / denom : 0.0;
    total += r.per_class_f1[c];
  }
  r.mean_f1 = total / static_cast<double>(classes());
  r.loss = loss_frames_ > 0 ? loss_sum_ / static_cast<double>(loss_frames_)
                            : std::numeric_limits<double>::quiet_NaN();
  r.loss_trajectory = losses_;
  return r;
}

MetricsReport mean_f1(std::span<const int> predictions, std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw DataError("mean_f1: no frames to evaluate");
  MetricsAccumulator acc(classes);
  acc.add(predictions, labels);
  return acc.report();
}

nlohmann::json metrics_record(int epoch, const std::string& split, const MetricsReport& report,
                              const nlohmann::json& extra) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["mean_f1"] = report.mean_f1;
  j["per_class_f1"] = report.per_class_f1;
  if (std::isnan(report.loss)) {
    j["loss"] = nullptr;
  } else {
    j["loss"] = report.loss;
  }
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

}  // namespace frameattn
