// SPDX-License-Identifier: Apache-2.0
#include "frameattn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "frameattn/error.hpp"

namespace frameattn {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("loss.lambda must lie in [0, 1]");
  if (!(beta > 0.0)) throw ConfigError("loss.beta must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("loss.gamma must be non-negative");
}

namespace {

// mean_i [ w_ce * CE_i + w_fl * FL_i ], fused so that the constituent losses
// are recovered exactly when one weight is zero.
Tensor weighted_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, double w_ce,
                     double w_fl, double beta, double gamma) {
  if (logits.rank() != 2) throw DimensionError("loss: logits must be [B x C], got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " rows");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at frame " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const double log_floor = std::log(kProbFloor);
  const auto z = logits.data();
  std::vector<double> probs(rows * classes);
  // d(row loss)/d(log p_t) scaled so that grad_z = coef * (onehot - softmax).
  std::vector<double> coef(rows, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* zi = z.data() + i * classes;
    double* si = probs.data() + i * classes;
    const double mx = *std::max_element(zi, zi + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      si[j] = std::exp(zi[j] - mx);
      s += si[j];
    }
    for (std::size_t j = 0; j < classes; ++j) si[j] /= s;
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    const double raw_logp = zi[y] - mx - std::log(s);
    const bool clamped = raw_logp < log_floor;
    const double logp = clamped ? log_floor : raw_logp;
    const double p = std::exp(logp);
    const double q = 1.0 - p;
    const double ce = -logp;
    const double fl = -beta * std::pow(q, gamma) * logp;
    total += w_ce * ce + w_fl * fl;

    // d/dz_j of -log p = -(onehot_j - s_j) when unclamped.
    // d/dz_j of FL     = beta * [gamma q^(gamma-1) p logp - q^gamma] * (onehot_j - s_j).
    const double dlog = clamped ? 0.0 : 1.0;
    double c = -w_ce * dlog;
    if (w_fl != 0.0) {
      double focus = 0.0;
      if (gamma != 0.0 && q > 0.0) focus = gamma * std::pow(q, gamma - 1.0) * p * logp;
      c += w_fl * beta * (focus - std::pow(q, gamma) * dlog);
    }
    coef[i] = c;
  }
  const double n = static_cast<double>(rows);
  Tensor result = Tensor::scalar(total / n, tape.wants({&logits}));
  if (result.requires_grad()) {
    std::vector<int> ys(labels.begin(), labels.end());
    tape.record("loss", result,
                [logits, result, probs = std::move(probs), coef = std::move(coef), ys = std::move(ys), rows,
                 classes, n]() mutable {
                  const double g = result.grad()[0] / n;
                  auto gz = logits.grad();
                  for (std::size_t i = 0; i < rows; ++i) {
                    const double c = coef[i] * g;
                    for (std::size_t j = 0; j < classes; ++j) {
                      const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                      gz[i * classes + j] += c * (onehot - probs[i * classes + j]);
                    }
                  }
                });
  }
  return result;
}

}  // namespace

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  return weighted_loss(tape, logits, labels, 1.0, 0.0, 1.0, 0.0);
}

Tensor focal_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, double beta, double gamma) {
  return weighted_loss(tape, logits, labels, 0.0, 1.0, beta, gamma);
}

Tensor combined_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, const LossConfig& config) {
  config.validate();
  return weighted_loss(tape, logits, labels, 1.0 - config.lambda, config.lambda, config.beta, config.gamma);
}

}  // namespace frameattn
