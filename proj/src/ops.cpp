// SPDX-License-Identifier: Apache-2.0
#include "frameattn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "frameattn/error.hpp"
#include "frameattn/kernels.hpp"

namespace frameattn::ops {
namespace {

void accumulate(std::span<double> dst, std::span<const double> src) {
  kernels::active().axpy(1.0, src.data(), dst.data(), dst.size());
}

// Strips leading unit extents, keeping at least one.
Shape squeeze_leading(const Shape& s) {
  std::size_t i = 0;
  while (i + 1 < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  const Shape s = squeeze_leading(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.rbegin(), s.rend(), big.rbegin());
}

struct Broadcast {
  bool a_is_big;
  std::size_t inner;  // numel of the small operand
  std::size_t outer;  // repetitions
  Shape shape;
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {true, a.numel(), 1, a.shape()};
  const bool a_big = a.numel() >= b.numel();
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  if (small.numel() == 1 || is_suffix(small.shape(), big.shape())) {
    return {a_big, small.numel(), big.numel() / small.numel(), big.shape()};
  }
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not broadcast-compatible");
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3 && b.rank() == 3;
  if (!(batched || (a.rank() == 2 && b.rank() == 2))) {
    throw DimensionError("matmul: unsupported ranks " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t m = a.dim(off), k = a.dim(off + 1), n = b.dim(off + 1);
  if (b.dim(off) != k || (batched && b.dim(0) != batch)) {
    throw DimensionError("matmul: shape mismatch " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  const auto& K = kernels::active();
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    K.gemm_nn(m, n, k, a.data().data() + i * m * k, k, b.data().data() + i * k * n, n,
              out.data() + i * m * n, n);
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  Tensor result(std::move(shape), std::move(out), tape.wants({&a, &b}));
  if (result.requires_grad()) {
    tape.record("matmul", result, [a, b, result, batch, m, n, k]() mutable {
      const auto& K = kernels::active();
      const double* g = result.grad().data();
      for (std::size_t i = 0; i < batch; ++i) {
        if (a.requires_grad()) {
          K.gemm_nt(m, k, n, g + i * m * n, n, b.data().data() + i * k * n, n,
                    a.grad().data() + i * m * k, k);
        }
        if (b.requires_grad()) {
          K.gemm_tn(k, n, m, a.data().data() + i * m * k, k, g + i * m * n, n,
                    b.grad().data() + i * k * n, n);
        }
      }
    });
  }
  return result;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  Tensor result({n, m}, std::move(out), tape.wants({&a}));
  if (result.requires_grad()) {
    tape.record("transpose", result, [a, result, m, n]() mutable {
      auto ga = a.grad();
      auto g = result.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return result;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0), outw = w.dim(1);
  if (bias.defined() && bias.numel() != outw) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  const std::size_t rows = x.numel() / in;
  std::vector<double> out(rows * outw, 0.0);
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * outw);
  }
  const auto& K = kernels::active();
  K.gemm_nn(rows, outw, in, x.data().data(), in, w.data().data(), outw, out.data(), outw);
  Shape shape = x.shape();
  shape.back() = outw;
  Tensor result(std::move(shape), std::move(out), tape.wants({&x, &w, &bias}));
  if (result.requires_grad()) {
    tape.record("linear", result, [x, w, bias, result, rows, in, outw]() mutable {
      const auto& K = kernels::active();
      const double* g = result.grad().data();
      if (x.requires_grad()) K.gemm_nt(rows, in, outw, g, outw, w.data().data(), outw, x.grad().data(), in);
      if (w.requires_grad()) K.gemm_tn(in, outw, rows, x.data().data(), in, g, outw, w.grad().data(), outw);
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r) K.axpy(1.0, g + r * outw, gb.data(), outw);
      }
    });
  }
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast(a, b, "add");
  const Tensor& big = bc.a_is_big ? a : b;
  const Tensor& small = bc.a_is_big ? b : a;
  const auto& K = kernels::active();
  std::vector<double> out(big.numel());
  for (std::size_t o = 0; o < bc.outer; ++o) {
    K.add(big.data().data() + o * bc.inner, small.data().data(), out.data() + o * bc.inner, bc.inner);
  }
  Tensor result(bc.shape, std::move(out), tape.wants({&a, &b}));
  if (result.requires_grad()) {
    tape.record("add", result, [big, small, result, bc]() mutable {
      const auto& K = kernels::active();
      auto g = result.grad();
      if (big.requires_grad()) accumulate(big.grad(), g);
      if (small.requires_grad()) {
        auto gs = small.grad();
        for (std::size_t o = 0; o < bc.outer; ++o) K.axpy(1.0, g.data() + o * bc.inner, gs.data(), bc.inner);
      }
    });
  }
  return result;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast(a, b, "mul");
  const Tensor& big = bc.a_is_big ? a : b;
  const Tensor& small = bc.a_is_big ? b : a;
  const auto& K = kernels::active();
  std::vector<double> out(big.numel());
  for (std::size_t o = 0; o < bc.outer; ++o) {
    K.mul(big.data().data() + o * bc.inner, small.data().data(), out.data() + o * bc.inner, bc.inner);
  }
  Tensor result(bc.shape, std::move(out), tape.wants({&a, &b}));
  if (result.requires_grad()) {
    tape.record("mul", result, [big, small, result, bc]() mutable {
      auto g = result.grad();
      const auto bd = big.data();
      const auto sd = small.data();
      if (big.requires_grad()) {
        auto gb = big.grad();
        for (std::size_t o = 0; o < bc.outer; ++o)
          for (std::size_t j = 0; j < bc.inner; ++j) gb[o * bc.inner + j] += g[o * bc.inner + j] * sd[j];
      }
      if (small.requires_grad()) {
        auto gs = small.grad();
        for (std::size_t o = 0; o < bc.outer; ++o)
          for (std::size_t j = 0; j < bc.inner; ++j) gs[j] += g[o * bc.inner + j] * bd[o * bc.inner + j];
      }
    });
  }
  return result;
}

Tensor affine(Tape& tape, const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * scale + shift;
  Tensor result(x.shape(), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("affine", result, [x, result, scale]() mutable {
      kernels::active().axpy(scale, result.grad().data(), x.grad().data(), x.numel());
    });
  }
  return result;
}

Tensor tanh(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
  Tensor result(x.shape(), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("tanh", result, [x, result]() mutable {
      auto gx = x.grad();
      auto g = result.grad();
      const auto y = result.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }
  return result;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(xd[i]);
  Tensor result(x.shape(), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("sigmoid", result, [x, result]() mutable {
      auto gx = x.grad();
      auto g = result.grad();
      const auto y = result.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }
  return result;
}

Tensor relu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  kernels::active().relu(x.data().data(), out.data(), out.size());
  Tensor result(x.shape(), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("relu", result, [x, result]() mutable {
      kernels::active().relu_backward(x.data().data(), result.grad().data(), x.grad().data(), x.numel());
    });
  }
  return result;
}

Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t outer = prod(x.shape(), 0, axis);
  const std::size_t len = x.dim(axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= s;
    }
  }
  Tensor result(x.shape(), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("softmax", result, [x, result, outer, len, inner]() mutable {
      auto gx = x.grad();
      auto g = result.grad();
      const auto y = result.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * len * inner + i;
          double dotp = 0.0;
          for (std::size_t j = 0; j < len; ++j) dotp += g[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += y[idx] * (g[idx] - dotp);
          }
        }
      }
    });
  }
  return result;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(ref) +
                           " along axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  const std::size_t outer = prod(ref, 0, axis);
  const std::size_t inner = prod(ref, axis + 1, ref.size());
  Shape shape = ref;
  shape[axis] = total;
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset));
    }
    offset += chunk;
  }
  Tensor result(std::move(shape), std::move(out), tape.wants(parts));
  if (result.requires_grad()) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record("concat", result, [inputs, offsets, result, outer, inner, total, axis]() mutable {
      auto g = result.grad();
      for (std::size_t p = 0; p < inputs.size(); ++p) {
        if (!inputs[p].requires_grad()) continue;
        auto gp = inputs[p].grad();
        const std::size_t chunk = inputs[p].dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          kernels::active().axpy(1.0, g.data() + o * total * inner + offsets[p], gp.data() + o * chunk, chunk);
        }
      }
    });
  }
  return result;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("reshape", result, [x, result]() mutable { accumulate(x.grad(), result.grad()); });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor result = Tensor::scalar(kernels::active().sum(x.data().data(), x.numel()), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("sum", result, [x, result]() mutable {
      const double g = result.grad()[0];
      for (double& v : x.grad()) v += g;
    });
  }
  return result;
}

Tensor mean(Tape& tape, const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  Tensor result = Tensor::scalar(kernels::active().sum(x.data().data(), x.numel()) / n, tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("mean", result, [x, result, n]() mutable {
      const double g = result.grad()[0] / n;
      for (double& v : x.grad()) v += g;
    });
  }
  return result;
}

Tensor mean_axis(Tape& tape, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("mean_axis: axis out of range for " + shape_str(x.shape()));
  const std::size_t outer = prod(x.shape(), 0, axis);
  const std::size_t len = x.dim(axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  const auto xd = x.data();
  std::vector<double> out(outer * inner, 0.0);
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    double* row = out.data() + o * inner;
    for (std::size_t j = 0; j < len; ++j) kernels::active().axpy(1.0, xd.data() + (o * len + j) * inner, row, inner);
    for (std::size_t i = 0; i < inner; ++i) row[i] *= inv;
  }
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  Tensor result(std::move(shape), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("mean_axis", result, [x, result, outer, len, inner, inv]() mutable {
      auto gx = x.grad();
      auto g = result.grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < len; ++j)
          kernels::active().axpy(inv, g.data() + o * inner, gx.data() + (o * len + j) * inner, inner);
    });
  }
  return result;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  kernels::active().mul(x.data().data(), mask.data(), out.data(), out.size());
  Tensor result(x.shape(), std::move(out), tape.wants({&x}));
  if (result.requires_grad()) {
    tape.record("dropout", result, [x, result, mask = std::move(mask)]() mutable {
      auto gx = x.grad();
      auto g = result.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return result;
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 3 || w.rank() != 3 || x.dim(2) != w.dim(1) || bias.numel() != w.dim(2)) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + ", kernel " + shape_str(w.shape()) +
                         ", bias " + shape_str(bias.shape()) + " are incompatible");
  }
  const std::size_t batch = x.dim(0), steps = x.dim(1), cin = x.dim(2);
  const std::size_t width = w.dim(0), cout = w.dim(2);
  if (width % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(width));
  const std::size_t pad = width / 2;
  const std::size_t rows = batch * steps, cols_w = width * cin;

  // im2col: row (b, t) holds x[b, t + k - pad, :] for k = 0..K-1 (zeros outside).
  std::vector<double> cols(rows * cols_w, 0.0);
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      double* row = cols.data() + (b * steps + t) * cols_w;
      for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
        std::copy_n(xd.data() + (b * steps + static_cast<std::size_t>(src)) * cin, cin, row + k * cin);
      }
    }
  }
  std::vector<double> out(rows * cout);
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * cout);
  const auto& K = kernels::active();
  K.gemm_nn(rows, cout, cols_w, cols.data(), cols_w, w.data().data(), cout, out.data(), cout);

  Tensor result({batch, steps, cout}, std::move(out), tape.wants({&x, &w, &bias}));
  if (result.requires_grad()) {
    tape.record("conv1d", result,
                [x, w, bias, result, cols = std::move(cols), batch, steps, cin, width, cout, pad, rows,
                 cols_w]() mutable {
                  const auto& K = kernels::active();
                  const double* g = result.grad().data();
                  if (w.requires_grad()) K.gemm_tn(cols_w, cout, rows, cols.data(), cols_w, g, cout, w.grad().data(), cout);
                  if (bias.requires_grad()) {
                    auto gb = bias.grad();
                    for (std::size_t r = 0; r < rows; ++r) K.axpy(1.0, g + r * cout, gb.data(), cout);
                  }
                  if (x.requires_grad()) {
                    std::vector<double> gcols(rows * cols_w, 0.0);
                    K.gemm_nt(rows, cols_w, cout, g, cout, w.data().data(), cout, gcols.data(), cols_w);
                    auto gx = x.grad();
                    for (std::size_t b = 0; b < batch; ++b) {
                      for (std::size_t t = 0; t < steps; ++t) {
                        const double* row = gcols.data() + (b * steps + t) * cols_w;
                        for (std::size_t k = 0; k < width; ++k) {
                          const std::ptrdiff_t src =
                              static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
                          if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
                          K.axpy(1.0, row + k * cin, gx.data() + (b * steps + static_cast<std::size_t>(src)) * cin, cin);
                        }
                      }
                    }
                  }
                });
  }
  return result;
}

}  // namespace frameattn::ops
