// SPDX-License-Identifier: Apache-2.0
#include "frameattn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "frameattn/error.hpp"

namespace frameattn {

void PlateauConfig::validate() const {
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("lr factor must lie in (0, 1)");
  if (!(min_lr >= 0.0)) throw ConfigError("min_lr must be non-negative");
}

OptimState OptimState::for_params(std::span<const NamedTensor> params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  OptimState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(std::span<const NamedTensor> params, OptimState& state, const AdamWConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adamw: optimizer state holds " + std::to_string(state.m.size()) + " tensors, model has " +
                        std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor theta = params[i].tensor;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != theta.numel() || v.size() != theta.numel()) {
      throw ContractError("adamw: moment shape mismatch for " + params[i].name);
    }
    auto w = theta.mutable_data();
    const auto g = theta.grad_view();
    const double decay = params[i].decay ? config.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] = w[j] - state.lr * m_hat / (std::sqrt(v_hat) + config.eps) - state.lr * decay * w[j];
    }
  }
}

bool plateau_step(OptimState& state, double epoch_loss, const PlateauConfig& config) {
  if (!std::isfinite(epoch_loss)) throw ContractError("plateau scheduler needs a finite loss");
  if (epoch_loss < state.best_loss - config.threshold) {
    state.best_loss = epoch_loss;
    state.plateau_count = 0;
    return false;
  }
  if (++state.plateau_count < config.patience) return false;
  state.plateau_count = 0;
  const double reduced = std::max(state.lr * config.factor, config.min_lr);
  const bool changed = reduced < state.lr;
  state.lr = reduced;
  return changed;
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad_view()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      if (!t.has_grad()) continue;
      for (double& g : t.grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace frameattn
