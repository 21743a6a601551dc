// SPDX-License-Identifier: Apache-2.0
//
// Intra- and inter-frame attention network over a batch of frames:
//
//   frames [B x T x D_in]
//     -> conv backbone (same padding, ReLU)        H      [B x T x d]
//     -> mean pool over time                       X_bar  [B x d]
//     -> + frame-level positional encoding         X_pe
//     -> intra-frame attention over H's timesteps  A_intra
//     -> inter-frame attention across the batch    A_inter
//     -> a * A_inter + (1 - a) * A_intra           A_com,  a = sigmoid(alpha)
//     -> linear(concat(X_bar, A_com))              X_att
//     -> multi-head attention across the batch     A_mul
//     -> G * A_mul + (1 - G) * X_pe                O_gated, G = sigmoid(X_att W_g + b_g)
//     -> softmax-gated mixture of experts          O_MoE
//     -> classifier                                logits [B x C]
//
// Disabling a component replaces it with a pass-through:
//   intra : A_intra := X_bar                 inter : A_inter := X_pe, and the
//   pe    : X_pe := X_bar                            multi-head block attends
//   gate  : O_gated := A_mul                         only to the frame itself
//   moe   : O_MoE := O_gated
// With one of intra/inter disabled, A_com is the other one; with both
// disabled, A_com := X_pe.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frameattn/rng.hpp"
#include "frameattn/tensor.hpp"

namespace frameattn {

struct Components {
  bool intra = true;
  bool inter = true;
  bool pe = true;
  bool moe = true;
  bool gate = true;

  // Comma-separated disable list, e.g. "intra,moe,gate,pe". "focal" is
  // accepted and reported through `focal_disabled` (it belongs to the loss).
  static Components from_disabled(std::string_view csv, bool* focal_disabled = nullptr);
  std::string disabled() const;

  bool operator==(const Components&) const = default;
};

struct ModelConfig {
  std::size_t window_len = 24;
  std::size_t channels = 3;
  std::size_t d_model = 128;
  std::size_t heads = 8;
  std::size_t experts = 8;
  std::size_t classes = 6;
  std::size_t conv_blocks = 3;
  std::size_t kernel = 5;
  double dropout = 0.5;
  Components components;

  void validate() const;
  std::size_t head_dim() const { return d_model / heads; }
  std::size_t intra_hidden() const { return d_model / 2 > 0 ? d_model / 2 : 1; }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool decay;  // decoupled weight decay applies (matrices only)
};

struct ConvBlock {
  Tensor weight;  // [K x C_in x C_out]
  Tensor bias;    // [C_out]
};

struct IntraParams {
  Tensor w1, b1;  // [d x H_a], [H_a]
  Tensor w2, b2;  // [H_a x 1], [1]
};

struct InterParams {
  Tensor wq, wk, wv;  // [d x d]
};

struct HeadParams {
  Tensor wq, wk, wv;  // [d x d/h]
};

struct MultiHeadParams {
  Tensor w_att, b_att;  // [2d x d], [d]: re-projection of concat(X_bar, A_com)
  std::vector<HeadParams> heads;
  Tensor w_out, b_out;  // [d x d], [d]
};

struct GateParams {
  Tensor weight, bias;  // [d x d], [d]
};

struct ExpertParams {
  Tensor w1, b1, w2, b2;  // d -> d (ReLU) -> d
};

struct MoeParams {
  std::vector<ExpertParams> experts;
  Tensor gate;  // [d x n]
};

struct ModelParams {
  std::vector<ConvBlock> backbone;
  IntraParams intra;
  InterParams inter;
  Tensor alpha;  // blend logit, [1]
  MultiHeadParams multi_head;
  GateParams gate;
  MoeParams moe;
  Tensor classifier_w, classifier_b;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrices, zero biases, alpha = 0.
  // Only the enabled components get parameters.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  // Defined parameters in a fixed order; names are stable checkpoint keys.
  std::vector<NamedTensor> named() const;
  std::size_t count() const;
  ModelParams clone() const;
  void zero_grad();
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
  // Within-batch ranks used for positional encoding; empty means 0..B-1.
  std::span<const std::size_t> positions = {};
};

struct ForwardTrace {
  Tensor features;       // H, [B x T x d]
  Tensor x_bar;          // pooled embedding (after backbone dropout)
  Tensor x_pe;           // X_enhanced
  Tensor intra_weights;  // [B x T]
  Tensor a_intra;
  Tensor inter_weights;  // [B x B]
  Tensor a_inter;
  Tensor blend;          // sigmoid(alpha), [1]
  Tensor a_com;
  Tensor x_att;
  std::vector<Tensor> head_weights;  // per head [B x B]
  Tensor a_mul;
  Tensor gate;           // G
  Tensor o_gated;
  Tensor moe_weights;    // [B x n]
  Tensor o_moe;
  Tensor logits;         // [B x C]
};

// --- blocks -----------------------------------------------------------------

// Per-timestep features of the last conv block, [B x T x d].
Tensor backbone_features(Tape& tape, std::span<const ConvBlock> blocks, const Tensor& frames);

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(pos / 10000^(2i/d)).
Tensor positional_table(std::span<const std::size_t> positions, std::size_t d_model);
Tensor frame_positional_encoding(Tape& tape, const Tensor& x_bar, std::span<const std::size_t> positions);

struct AttentionOut {
  Tensor output;
  Tensor weights;
};

// softmax(Q K^T / sqrt(d_k)) V with the softmax taken across rows of K.
AttentionOut scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v);

// Scores s_t = W2 tanh(W1 x_t + b1) + b2, softmax over the T timesteps of
// each frame, output = sum_t w_t x_t.
AttentionOut intra_frame_attention(Tape& tape, const IntraParams& params, const Tensor& features);
AttentionOut inter_frame_attention(Tape& tape, const InterParams& params, const Tensor& x_pe);
Tensor combine_attention(Tape& tape, const Tensor& a_inter, const Tensor& a_intra, const Tensor& alpha);

struct MultiHeadOut {
  Tensor x_att;
  Tensor output;
  std::vector<Tensor> weights;
};
// cross_frame = false restricts every head to attend to its own frame only.
MultiHeadOut multi_head_block(Tape& tape, const MultiHeadParams& params, const Tensor& x_bar,
                              const Tensor& a_com, bool cross_frame = true);

struct GateOut {
  Tensor gate;
  Tensor output;
};
GateOut gated_fusion(Tape& tape, const GateParams& params, const Tensor& a_mul, const Tensor& x_enhanced,
                     const Tensor& x_att);
// gate * a_mul + (1 - gate) * x_enhanced
Tensor gated_mix(Tape& tape, const Tensor& gate, const Tensor& a_mul, const Tensor& x_enhanced);

struct MoeOut {
  Tensor weights;  // [B x n]
  Tensor output;
};
MoeOut moe_layer(Tape& tape, const MoeParams& params, const Tensor& input);

ForwardTrace forward(Tape& tape, const ModelParams& params, const ModelConfig& config, const Tensor& frames,
                     const ForwardOptions& options = {});

// Row-wise argmax of [B x C] logits (first maximum wins).
std::vector<int> predict(const Tensor& logits);

}  // namespace frameattn
