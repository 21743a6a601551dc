// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "frameattn/error.hpp"
#include "frameattn/gradcheck.hpp"
#include "frameattn/losses.hpp"
#include "frameattn/metrics.hpp"
#include "frameattn/rng.hpp"

using namespace frameattn;

namespace {

Tensor rand_logits(Rng& rng, std::size_t b, std::size_t c, double scale = 2.0) {
  std::vector<double> v(b * c);
  for (double& x : v) x = scale * rng.normal();
  return Tensor({b, c}, v);
}

std::vector<int> rand_labels(Rng& rng, std::size_t b, std::size_t c) {
  std::vector<int> l(b);
  for (int& x : l) x = static_cast<int>(rng.below(c));
  return l;
}

double eval(const std::function<Tensor(Tape&)>& f) {
  Tape tape(false);
  return f(tape).item();
}

// Full C x C confusion matrix, then F1 per class.
double brute_force_mean_f1(const std::vector<int>& pred, const std::vector<int>& label, std::size_t c) {
  std::vector<std::vector<int>> cm(c, std::vector<int>(c, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) cm[label[i]][pred[i]]++;
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double tp = cm[k][k], fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += cm[j][k];
      fn += cm[k][j];
    }
    const double denom = 2 * tp + fp + fn;
    total += denom == 0 ? 0.0 : 2 * tp / denom;
  }
  return total / static_cast<double>(c);
}

}  // namespace

TEST_CASE("cross entropy examples") {
  const std::vector<int> l4 = {2};
  CHECK(eval([&](Tape& t) { return cross_entropy(t, Tensor::zeros({1, 4}), l4); }) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(std::log(4.0) == doctest::Approx(1.386294).epsilon(1e-6));
  const std::vector<int> l1 = {1};
  const double ce = eval([&](Tape& t) { return cross_entropy(t, Tensor({1, 2}, {0.0, std::log(3.0)}), l1); });
  CHECK(ce == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  CHECK(ce == doctest::Approx(0.287682).epsilon(1e-6));

  double prev = 1e9;
  for (double conf : {0.0, 1.0, 3.0, 10.0, 40.0}) {
    const double v = eval([&](Tape& t) { return cross_entropy(t, Tensor({1, 2}, {0.0, conf}), l1); });
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-12);
}

TEST_CASE("focal loss examples") {
  const std::vector<int> l = {0};
  // p_t = 0.5
  const double fl = eval([&](Tape& t) { return focal_loss(t, Tensor({1, 2}, {0.0, 0.0}), l, 0.25, 2.0); });
  CHECK(fl == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-14));
  CHECK(fl == doctest::Approx(0.043322).epsilon(1e-5));
  const double certain = eval([&](Tape& t) { return focal_loss(t, Tensor({1, 2}, {800.0, 0.0}), l, 0.25, 2.0); });
  CHECK(certain == 0.0);
  const double wrong = eval([&](Tape& t) { return focal_loss(t, Tensor({1, 2}, {-800.0, 0.0}), l, 0.25, 2.0); });
  CHECK(std::isfinite(wrong));
  CHECK(wrong == doctest::Approx(-0.25 * std::log(kProbFloor)).epsilon(1e-9));
}

TEST_CASE("focal with beta 1 gamma 0 equals cross entropy") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const std::size_t b = 1 + rng.below(16), c = 2 + rng.below(6);
    const Tensor x = rand_logits(rng, b, c, 4.0);
    const auto l = rand_labels(rng, b, c);
    const double ce = eval([&](Tape& t) { return cross_entropy(t, x, l); });
    const double fl = eval([&](Tape& t) { return focal_loss(t, x, l, 1.0, 0.0); });
    CHECK(std::abs(ce - fl) <= 1e-12);
  }
}

TEST_CASE("combined loss interpolates its constituents") {
  Rng rng(3);
  const Tensor x = rand_logits(rng, 8, 5);
  const auto l = rand_labels(rng, 8, 5);
  LossConfig cfg;
  const double ce = eval([&](Tape& t) { return cross_entropy(t, x, l); });
  const double fl = eval([&](Tape& t) { return focal_loss(t, x, l, cfg.beta, cfg.gamma); });
  auto at = [&](double lambda) {
    LossConfig c = cfg;
    c.lambda = lambda;
    return eval([&](Tape& t) { return combined_loss(t, x, l, c); });
  };
  CHECK(at(0.0) == ce);
  CHECK(at(1.0) == fl);
  CHECK(at(0.5) == doctest::Approx(0.5 * ce + 0.5 * fl).epsilon(1e-14));
  CHECK(0.5 * 1.0 + 0.5 * 0.2 == doctest::Approx(0.6));
  double prev = at(0.0);
  for (int i = 1; i <= 10; ++i) {
    const double v = at(i / 10.0);
    CHECK(v <= prev);  // FL < CE, so loss falls with lambda
    CHECK(v >= fl - 1e-15);
    prev = v;
  }
}

TEST_CASE("loss config validation and label range") {
  LossConfig c;
  c.lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LossConfig{};
  c.beta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LossConfig{};
  c.gamma = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  const std::vector<int> bad = {0, 3};
  Tape tape(false);
  try {
    cross_entropy(tape, Tensor::zeros({2, 3}), bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(focal_loss(tape, Tensor::zeros({2, 3}), bad, 0.25, 2.0), DataError);
}

TEST_CASE("combined loss gradient passes gradcheck") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s + 100);
    const std::size_t b = 1 + rng.below(8), c = 2 + rng.below(6);
    const Tensor x = rand_logits(rng, b, c);
    const auto l = rand_labels(rng, b, c);
    LossConfig cfg;
    cfg.lambda = rng.uniform();
    const double err = gradcheck([&](Tape& t, const Tensor& v) { return combined_loss(t, v, l, cfg); }, x);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("mean F1 examples") {
  const std::vector<int> labels = {0, 0, 1, 1}, preds = {0, 1, 1, 1};
  const MetricsReport r = mean_f1(preds, labels, 2);
  CHECK(r.per_class_f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.per_class_f1[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.mean_f1 == doctest::Approx(0.733333).epsilon(1e-6));
  CHECK(mean_f1(labels, labels, 2).mean_f1 == 1.0);
  const std::vector<int> ones = {1, 1, 1}, zeros = {0, 0, 0};
  CHECK(mean_f1(zeros, ones, 2).mean_f1 == 0.0);
  // an absent class still counts in the denominator
  CHECK(mean_f1(labels, labels, 3).mean_f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("mean F1 matches a brute-force confusion matrix") {
  Rng rng(2024);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng.below(50), c = 2 + rng.below(4);
    const auto p = rand_labels(rng, n, c), l = rand_labels(rng, n, c);
    const MetricsReport r = mean_f1(p, l, c);
    CHECK(std::abs(r.mean_f1 - brute_force_mean_f1(p, l, c)) <= 1e-12);

    std::uint64_t tp = 0, fn = 0;
    for (std::size_t k = 0; k < c; ++k) {
      tp += r.tp[k];
      fn += r.fn[k];
      const auto predicted = static_cast<std::uint64_t>(std::count(p.begin(), p.end(), static_cast<int>(k)));
      CHECK(r.tp[k] + r.fp[k] == predicted);
    }
    CHECK(tp + fn == n);
    CHECK(r.frames() == n);

    std::vector<int> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    std::vector<int> pp(n), ll(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = perm[p[i]];
      ll[i] = perm[l[i]];
    }
    CHECK(std::abs(mean_f1(pp, ll, c).mean_f1 - r.mean_f1) <= 1e-12);
  }
}

TEST_CASE("mean F1 errors") {
  const std::vector<int> a = {0, 2}, b = {0, 1}, empty;
  CHECK_THROWS_AS(mean_f1(a, b, 2), DataError);
  CHECK_THROWS_AS(mean_f1(b, a, 2), DataError);
  CHECK_THROWS_AS(mean_f1(empty, empty, 2), DataError);
}

TEST_CASE("accumulator merge is associative and commutative") {
  Rng rng(8);
  const std::size_t c = 4;
  std::vector<MetricsAccumulator> shards(3, MetricsAccumulator(c));
  MetricsAccumulator whole(c);
  for (auto& s : shards) {
    const auto p = rand_labels(rng, 20, c), l = rand_labels(rng, 20, c);
    s.add(p, l);
    whole.add(p, l);
  }
  MetricsAccumulator ab = shards[0];
  ab.merge(shards[1]);
  ab.merge(shards[2]);
  MetricsAccumulator cb = shards[2];
  MetricsAccumulator tail = shards[1];
  tail.merge(shards[0]);
  cb.merge(tail);
  const auto r1 = ab.report(), r2 = cb.report(), r3 = whole.report();
  CHECK(r1.tp == r3.tp);
  CHECK(r1.fp == r3.fp);
  CHECK(r1.fn == r3.fn);
  CHECK(r2.tp == r3.tp);
  CHECK(r2.fn == r3.fn);
  CHECK(r1.mean_f1 == r3.mean_f1);
}

TEST_CASE("metrics record layout") {
  const std::vector<int> labels = {0, 0, 1, 1}, preds = {0, 1, 1, 1};
  MetricsAccumulator acc(2);
  acc.add(preds, labels);
  acc.add_loss(0.5, 4);
  const auto j = metrics_record(3, "val", acc.report(), {{"strategy", "shuffled"}});
  CHECK(j["epoch"] == 3);
  CHECK(j["split"] == "val");
  CHECK(j["mean_f1"].get<double>() == doctest::Approx(0.733333).epsilon(1e-6));
  CHECK(j["per_class_f1"].size() == 2);
  CHECK(j["loss"].get<double>() == 0.5);
  CHECK(j["strategy"] == "shuffled");
}
