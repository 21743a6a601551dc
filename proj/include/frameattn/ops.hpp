// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Each op computes its value eagerly and, when the
// tape is enabled and some input requires a gradient, records a backward rule
// that accumulates into the inputs' gradients.
//
// Broadcasting (add, mul) is limited to leading-extent expansion: the smaller
// operand must equal a trailing block of the larger one's shape (leading 1s
// ignored), or be a single element.
#pragma once

#include <cstddef>
#include <span>

#include "frameattn/rng.hpp"
#include "frameattn/tensor.hpp"

namespace frameattn::ops {

// [m x k] * [k x n], or batched [b x m x k] * [b x k x n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
// x[..., in] * w[in x out] + bias[out]; bias may be undefined.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// x * scale + shift
Tensor affine(Tape& tape, const Tensor& x, double scale, double shift);
inline Tensor scale(Tape& tape, const Tensor& x, double c) { return affine(tape, x, c, 0.0); }

Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);

// Max-subtracted softmax along `axis`.
Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis);

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
// Mean over one axis; the axis is removed (rank-1 input gives shape [1]).
Tensor mean_axis(Tape& tape, const Tensor& x, std::size_t axis);

// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng& rng);

// Same-padded 1-D convolution along time.
// x: [B x T x Cin], w: [K x Cin x Cout] (K odd), bias: [Cout].
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

// Numerically stable logistic function.
double sigmoid(double x);

}  // namespace frameattn::ops
