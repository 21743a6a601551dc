// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "frameattn/tensor.hpp"

namespace frameattn {

// Weights of the combined objective (1 - lambda) * CE + lambda * FL, where
// FL = -beta * (1 - p_t)^gamma * log(p_t). `beta` is the focal-loss scaling
// usually written alpha (0.25); it is renamed to stay clear of the attention
// blend coefficient.
struct LossConfig {
  double lambda = 0.5;
  double beta = 0.25;
  double gamma = 2.0;

  void validate() const;
};

// Probabilities are clamped to >= 1e-12 before the log.
inline constexpr double kProbFloor = 1e-12;

// All three reduce by the batch mean. Labels outside [0, C) raise DataError
// naming the offending row.
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);
Tensor focal_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, double beta, double gamma);
Tensor combined_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, const LossConfig& config);

}  // namespace frameattn
