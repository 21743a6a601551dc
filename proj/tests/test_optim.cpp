// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "frameattn/error.hpp"
#include "frameattn/optim.hpp"
#include "frameattn/rng.hpp"

using namespace frameattn;

namespace {

std::vector<NamedTensor> params_of(std::vector<double> w, std::vector<double> b) {
  const std::size_t n = w.size(), m = b.size();
  return {{"w", Tensor({1, n}, std::move(w), true), true}, {"b", Tensor({m}, std::move(b), true), false}};
}

void set_grads(std::vector<NamedTensor>& ps, double value) {
  for (auto& p : ps)
    for (double& g : p.tensor.grad()) g = value;
}

}  // namespace

TEST_CASE("zero gradient without decay leaves parameters unchanged") {
  auto ps = params_of({1.0, -2.0}, {0.5});
  OptimState st = OptimState::for_params(ps, 0.1);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  set_grads(ps, 0.0);
  adamw_step(ps, st, cfg);
  CHECK(ps[0].tensor[0] == 1.0);
  CHECK(ps[0].tensor[1] == -2.0);
  CHECK(ps[1].tensor[0] == 0.5);
  CHECK(st.step == 1);
}

TEST_CASE("zero gradient with decay scales matrices only") {
  auto ps = params_of({1.0, -2.0}, {0.5});
  OptimState st = OptimState::for_params(ps, 0.1);
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  set_grads(ps, 0.0);
  adamw_step(ps, st, cfg);
  CHECK(ps[0].tensor[0] == doctest::Approx(1.0 * (1 - 0.001)).epsilon(1e-15));
  CHECK(ps[0].tensor[1] == doctest::Approx(-2.0 * (1 - 0.001)).epsilon(1e-15));
  CHECK(ps[1].tensor[0] == 0.5);
}

TEST_CASE("first step with unit gradient") {
  auto ps = params_of({0.0}, {0.0});
  OptimState st = OptimState::for_params(ps, 1e-3);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  set_grads(ps, 1.0);
  adamw_step(ps, st, cfg);
  CHECK(ps[0].tensor[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(ps[1].tensor[0] == doctest::Approx(-1e-3).epsilon(1e-7));
}

TEST_CASE("without decay the update equals plain Adam") {
  Rng rng(12);
  auto ps = params_of({0.3, -0.7, 1.1}, {0.2, -0.1});
  std::vector<std::vector<double>> theta = {{0.3, -0.7, 1.1}, {0.2, -0.1}};
  std::vector<std::vector<double>> m = {{0, 0, 0}, {0, 0}}, v = m;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  OptimState st = OptimState::for_params(ps, lr);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  for (int t = 1; t <= 25; ++t) {
    for (std::size_t p = 0; p < ps.size(); ++p) {
      auto g = ps[p].tensor.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = rng.normal();
        m[p][i] = b1 * m[p][i] + (1 - b1) * g[i];
        v[p][i] = b2 * v[p][i] + (1 - b2) * g[i] * g[i];
        const double mh = m[p][i] / (1 - std::pow(b1, t));
        const double vh = v[p][i] / (1 - std::pow(b2, t));
        theta[p][i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
    adamw_step(ps, st, cfg);
  }
  for (std::size_t p = 0; p < ps.size(); ++p)
    for (std::size_t i = 0; i < theta[p].size(); ++i) CHECK(ps[p].tensor[i] == doctest::Approx(theta[p][i]).epsilon(1e-12));
}

TEST_CASE("state of the wrong shape is a contract error") {
  auto ps = params_of({1.0, 2.0}, {0.0});
  OptimState st = OptimState::for_params(ps, 0.1);
  auto other = params_of({1.0, 2.0, 3.0}, {0.0});
  set_grads(other, 1.0);
  CHECK_THROWS_AS(adamw_step(other, st, AdamWConfig{}), ContractError);
  auto fewer = std::vector<NamedTensor>{ps[0]};
  CHECK_THROWS_AS(adamw_step(fewer, st, AdamWConfig{}), ContractError);
}

TEST_CASE("plateau halves the rate after ten stale epochs") {
  OptimState st;
  st.lr = 1e-3;
  PlateauConfig cfg;
  CHECK_FALSE(plateau_step(st, 1.0, cfg));
  for (int i = 0; i < 9; ++i) CHECK_FALSE(plateau_step(st, 1.0, cfg));
  CHECK(st.lr == 1e-3);
  CHECK(plateau_step(st, 1.0, cfg));
  CHECK(st.lr == 5e-4);
  CHECK(st.plateau_count == 0);
}

TEST_CASE("improvement resets the plateau counter") {
  OptimState st;
  st.lr = 1e-3;
  PlateauConfig cfg;
  plateau_step(st, 1.0, cfg);
  for (int i = 0; i < 8; ++i) plateau_step(st, 1.0, cfg);
  CHECK(st.plateau_count == 8);
  plateau_step(st, 0.5, cfg);
  CHECK(st.plateau_count == 0);
  CHECK(st.lr == 1e-3);
  // below the threshold is not an improvement
  plateau_step(st, 0.5 - 1e-7, cfg);
  CHECK(st.plateau_count == 1);
}

TEST_CASE("learning rate is floored at min_lr and never increases") {
  OptimState st;
  st.lr = 1e-3;
  PlateauConfig cfg;
  cfg.patience = 1;
  cfg.min_lr = 1e-4;
  double prev = st.lr;
  for (int i = 0; i < 30; ++i) {
    plateau_step(st, 1.0, cfg);
    CHECK(st.lr <= prev);
    CHECK(st.lr >= cfg.min_lr);
    prev = st.lr;
  }
  CHECK(st.lr == 1e-4);
  CHECK_THROWS_AS(plateau_step(st, std::numeric_limits<double>::quiet_NaN(), cfg), ContractError);
}

TEST_CASE("plateau config validation") {
  PlateauConfig c;
  c.factor = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PlateauConfig{};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("gradient clipping") {
  auto ps = params_of({0.0, 0.0}, {0.0});
  ps[0].tensor.grad()[0] = 3.0;
  ps[0].tensor.grad()[1] = 0.0;
  ps[1].tensor.grad()[0] = 4.0;
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(ps[0].tensor.grad()[0] == doctest::Approx(0.6));
  CHECK(ps[1].tensor.grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(1.0));
  CHECK(ps[1].tensor.grad()[0] == doctest::Approx(0.8));
}
