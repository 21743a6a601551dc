// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "frameattn/tensor.hpp"

namespace frameattn {

// Scalar-valued function of tensors that live outside the tape (parameters,
// inputs). It is called once on a recording tape for the analytic gradient
// and twice per entry on disabled tapes for central differences.
using ScalarFn = std::function<Tensor(Tape&)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  // Location of the worst entry.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// max over entries of |analytic - numeric| / max(1, |analytic|, |numeric|),
// numeric = (f(x + eps) - f(x - eps)) / (2 eps). Every tensor in `inputs` is
// temporarily flagged requires_grad and its gradient is reset.
GradcheckResult gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, double eps = 1e-5);

// Single-input convenience form.
double gradcheck(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace frameattn
