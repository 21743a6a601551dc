// SPDX-License-Identifier: Apache-2.0
#include "frameattn/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "frameattn/error.hpp"

namespace frameattn {

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ContractError("Rng::below: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Rejection keeps the result unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

}  // namespace frameattn
