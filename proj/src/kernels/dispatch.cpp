// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "frameattn/error.hpp"
#include "frameattn/kernels.hpp"

namespace frameattn::kernels {

#ifdef FRAMEATTN_HAVE_AVX2
const KernelTable* avx2_table_impl();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(FRAMEATTN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("FRAMEATTN_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::kScalar;
    if (v == "avx2" && available(Backend::kAvx2)) return Backend::kAvx2;
  }
  return available(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

const KernelTable* avx2_table() {
#ifdef FRAMEATTN_HAVE_AVX2
  return avx2_table_impl();
#else
  return nullptr;
#endif
}

bool available(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2: {
      static const bool ok = avx2_table() != nullptr && cpu_has_avx2();
      return ok;
    }
  }
  return false;
}

const KernelTable& table(Backend b) {
  if (!available(b)) {
    throw ConfigError("kernel backend '" + std::string(backend_name(b)) + "' is not available");
  }
  return b == Backend::kAvx2 ? *avx2_table() : scalar_table();
}

const KernelTable& active() { return table(current().load(std::memory_order_relaxed)); }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  table(b);
  current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) {
  return b == Backend::kAvx2 ? "avx2" : "scalar";
}

}  // namespace frameattn::kernels
