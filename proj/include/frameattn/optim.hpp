// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "frameattn/model.hpp"

namespace frameattn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct PlateauConfig {
  std::size_t patience = 10;
  double factor = 0.5;
  double min_lr = 1e-6;
  double threshold = 1e-6;  // improvement means loss < best - threshold

  void validate() const;
};

struct OptimState {
  std::vector<std::vector<double>> m, v;  // one per parameter tensor
  std::uint64_t step = 0;
  double lr = 1e-3;
  std::size_t plateau_count = 0;
  double best_loss = std::numeric_limits<double>::infinity();

  static OptimState for_params(std::span<const NamedTensor> params, double lr);
};

// One decoupled-weight-decay Adam update using the gradients stored on the
// parameter tensors:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
// Decay applies only to tensors flagged `decay`.
void adamw_step(std::span<const NamedTensor> params, OptimState& state, const AdamWConfig& config);

// Reduce-on-plateau. Returns true when the learning rate was reduced.
bool plateau_step(OptimState& state, double epoch_loss, const PlateauConfig& config);

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(std::span<const NamedTensor> params, double max_norm);

}  // namespace frameattn
