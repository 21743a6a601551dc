// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors and the define-by-run gradient tape.
//
// A Tensor is a cheap, shared handle: copies alias the same storage. Values
// are treated as immutable once an op has produced them; only gradients
// accumulate (and the optimizer updates leaf parameters between steps).
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace frameattn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Mutable access is for leaf tensors only (initialization, optimizer,
  // finite-difference probes).
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  // Zero-filled on first access.
  std::span<double> grad() const;
  std::span<const double> grad_view() const { return impl_->grad; }
  void zero_grad();

  // Deep copy without gradient or tape history.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Append-only record of differentiable operations. Build one per forward
// pass; backward() walks the nodes in reverse recording order exactly once.
// A disabled tape records nothing, so ops run as plain evaluation.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // True when an op over these inputs must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;
  bool wants(std::span<const Tensor> inputs) const;

  void record(std::string_view op, Tensor output, BackwardFn backward);

  void backward(const Tensor& loss);

  // Names of recorded ops, in order.
  std::vector<std::string> op_names() const;

 private:
  struct Node {
    std::string op;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool enabled_;
  bool consumed_ = false;
};

namespace testing {
// Fault injection for gradient-check tests: while set, the backward rule of
// every node named `op` receives its output gradient multiplied by `factor`.
void corrupt_backward(std::string op, double factor = 1.5);
void clear_corruption();
}  // namespace testing

}  // namespace frameattn
