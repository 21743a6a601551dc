// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "frameattn/error.hpp"
#include "frameattn/kernels.hpp"
#include "frameattn/rng.hpp"

using namespace frameattn;
namespace k = frameattn::kernels;

namespace {

std::vector<double> randv(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Reductions may differ in summation order; allow a few ulps relative to the
// magnitude of the terms.
void check_close(double a, double b, double scale) { CHECK(std::abs(a - b) <= 1e-13 * (1.0 + scale)); }

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(k::available(k::Backend::kScalar));
  CHECK(k::table(k::Backend::kScalar).name == k::scalar_table().name);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const k::KernelTable* avx = k::avx2_table();
  if (avx == nullptr || !k::available(k::Backend::kAvx2)) {
    MESSAGE("avx2 backend not available; skipping");
    return;
  }
  const k::KernelTable& ref = k::scalar_table();
  Rng rng(99);
  for (std::size_t n = 0; n <= 37; ++n) {
    const auto a = randv(rng, n), b = randv(rng, n);
    double mag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
    check_close(ref.dot(a.data(), b.data(), n), avx->dot(a.data(), b.data(), n), mag);

    double amag = 0.0;
    for (double x : a) amag += std::abs(x);
    check_close(ref.sum(a.data(), n), avx->sum(a.data(), n), amag);

    std::vector<double> r1(n), r2(n);
    ref.add(a.data(), b.data(), r1.data(), n);
    avx->add(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);
    ref.mul(a.data(), b.data(), r1.data(), n);
    avx->mul(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);
    ref.scale(-1.75, a.data(), r1.data(), n);
    avx->scale(-1.75, a.data(), r2.data(), n);
    CHECK(r1 == r2);
    ref.relu(a.data(), r1.data(), n);
    avx->relu(a.data(), r2.data(), n);
    CHECK(r1 == r2);

    std::vector<double> g1 = b, g2 = b;
    ref.relu_backward(a.data(), b.data(), g1.data(), n);
    avx->relu_backward(a.data(), b.data(), g2.data(), n);
    CHECK(g1 == g2);

    std::vector<double> y1 = b, y2 = b;
    ref.axpy(0.3, a.data(), y1.data(), n);
    avx->axpy(0.3, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) check_close(y1[i], y2[i], std::abs(b[i]) + std::abs(0.3 * a[i]));
  }
}

TEST_CASE("avx2 gemm variants agree with the scalar reference") {
  const k::KernelTable* avx = k::avx2_table();
  if (avx == nullptr || !k::available(k::Backend::kAvx2)) return;
  const k::KernelTable& ref = k::scalar_table();
  Rng rng(5);
  const std::size_t dims[] = {1, 2, 3, 4, 5, 7, 8, 9, 13, 16, 17};
  for (std::size_t m : dims) {
    for (std::size_t n : dims) {
      for (std::size_t kk : {1, 3, 8, 11}) {
        const auto a = randv(rng, m * kk);
        const auto bt = randv(rng, n * kk);
        const auto b = randv(rng, kk * n);
        const auto at = randv(rng, kk * m);
        const auto c0 = randv(rng, m * n);
        const double tol = 1e-13 * static_cast<double>(kk + 1) * 10.0;

        auto c1 = c0, c2 = c0;
        ref.gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c1.data(), n);
        avx->gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c2.data(), n);
        for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= tol);

        c1 = c0, c2 = c0;
        ref.gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, c1.data(), n);
        avx->gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, c2.data(), n);
        for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= tol);

        c1 = c0, c2 = c0;
        ref.gemm_tn(m, n, kk, at.data(), m, b.data(), n, c1.data(), n);
        avx->gemm_tn(m, n, kk, at.data(), m, b.data(), n, c2.data(), n);
        for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= tol);
      }
    }
  }
}

TEST_CASE("scalar gemm matches a naive triple loop") {
  const k::KernelTable& ref = k::scalar_table();
  Rng rng(17);
  const std::size_t m = 5, n = 6, kk = 7;
  const auto a = randv(rng, m * kk), b = randv(rng, kk * n);
  std::vector<double> c(m * n, 0.0), expect(m * n, 0.0);
  ref.gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c.data(), n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) expect[i * n + j] += a[i * kk + p] * b[p * n + j];
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-13));
}

TEST_CASE("set_backend switches the active table") {
  const k::Backend before = k::active_backend();
  k::set_backend(k::Backend::kScalar);
  CHECK(k::active_backend() == k::Backend::kScalar);
  CHECK(k::active().name == k::backend_name(k::Backend::kScalar));
  if (!k::available(k::Backend::kAvx2)) CHECK_THROWS_AS(k::set_backend(k::Backend::kAvx2), ConfigError);
  k::set_backend(before);
}
