// SPDX-License-Identifier: Apache-2.0
#include "frameattn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "frameattn/error.hpp"

namespace frameattn {

GradcheckResult gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, double eps) {
  std::vector<bool> had_grad;
  for (auto& t : inputs) {
    had_grad.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  auto eval = [&f]() {
    Tape off(false);
    return f(off).item();
  };

  GradcheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + eps;
      const double up = eval();
      data[j] = orig - eps;
      const double down = eval();
      data[j] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (!(err <= result.max_rel_error)) {
        result = {err, i, j, a, numeric};
      }
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i].zero_grad();
    inputs[i].set_requires_grad(had_grad[i]);
  }
  return result;
}

double gradcheck(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x, double eps) {
  return gradcheck([&f, x](Tape& tape) { return f(tape, x); }, {x}, eps).max_rel_error;
}

}  // namespace frameattn
