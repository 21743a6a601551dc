// SPDX-License-Identifier: Apache-2.0
#include "frameattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "frameattn/error.hpp"
#include "frameattn/ops.hpp"

namespace frameattn {

Components Components::from_disabled(std::string_view csv, bool* focal_disabled) {
  Components c;
  if (focal_disabled) *focal_disabled = false;
  std::string token;
  std::istringstream in{std::string(csv)};
  while (std::getline(in, token, ',')) {
    token.erase(0, token.find_first_not_of(" \t"));
    token.erase(token.find_last_not_of(" \t") + 1);
    if (token.empty() || token == "none") continue;
    if (token == "intra") {
      c.intra = false;
    } else if (token == "inter") {
      c.inter = false;
    } else if (token == "pe") {
      c.pe = false;
    } else if (token == "moe") {
      c.moe = false;
    } else if (token == "gate") {
      c.gate = false;
    } else if (token == "focal") {
      if (!focal_disabled) throw ConfigError("'focal' cannot be disabled here");
      *focal_disabled = true;
    } else {
      throw ConfigError("unknown component '" + token + "' (expected intra, inter, pe, moe, gate, focal)");
    }
  }
  return c;
}

std::string Components::disabled() const {
  std::vector<std::string> off;
  if (!intra) off.emplace_back("intra");
  if (!inter) off.emplace_back("inter");
  if (!pe) off.emplace_back("pe");
  if (!moe) off.emplace_back("moe");
  if (!gate) off.emplace_back("gate");
  std::string s;
  for (std::size_t i = 0; i < off.size(); ++i) s += (i ? "," : "") + off[i];
  return s;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model: " + m); };
  if (window_len == 0) fail("window_len must be positive");
  if (channels == 0) fail("channels must be positive");
  if (d_model == 0) fail("d_model must be positive");
  if (heads == 0 || d_model % heads != 0) {
    fail("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (experts < 1) fail("experts must be >= 1");
  if (classes < 2) fail("classes must be >= 2, got " + std::to_string(classes));
  if (conv_blocks < 1) fail("conv_blocks must be >= 1");
  if (kernel % 2 == 0) fail("kernel must be odd, got " + std::to_string(kernel));
  if (window_len < kernel) {
    fail("window_len (" + std::to_string(window_len) + ") must be >= kernel (" + std::to_string(kernel) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

// --- parameters ---------------------------------------------------------------

namespace {

Tensor uniform_matrix(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, stream_id("init")));
  const std::size_t d = config.d_model;
  const auto& comp = config.components;
  ModelParams p;
  std::size_t cin = config.channels;
  for (std::size_t i = 0; i < config.conv_blocks; ++i) {
    p.backbone.push_back({uniform_matrix({config.kernel, cin, d}, config.kernel * cin, rng), zeros({d})});
    cin = d;
  }
  if (comp.intra) {
    const std::size_t ha = config.intra_hidden();
    p.intra = {uniform_matrix({d, ha}, d, rng), zeros({ha}), uniform_matrix({ha, 1}, ha, rng), zeros({1})};
  }
  if (comp.inter) {
    p.inter = {uniform_matrix({d, d}, d, rng), uniform_matrix({d, d}, d, rng), uniform_matrix({d, d}, d, rng)};
  }
  if (comp.intra && comp.inter) p.alpha = zeros({1});
  p.multi_head.w_att = uniform_matrix({2 * d, d}, 2 * d, rng);
  p.multi_head.b_att = zeros({d});
  const std::size_t dh = config.head_dim();
  for (std::size_t h = 0; h < config.heads; ++h) {
    p.multi_head.heads.push_back(
        {uniform_matrix({d, dh}, d, rng), uniform_matrix({d, dh}, d, rng), uniform_matrix({d, dh}, d, rng)});
  }
  p.multi_head.w_out = uniform_matrix({d, d}, d, rng);
  p.multi_head.b_out = zeros({d});
  if (comp.gate) p.gate = {uniform_matrix({d, d}, d, rng), zeros({d})};
  if (comp.moe) {
    for (std::size_t e = 0; e < config.experts; ++e) {
      p.moe.experts.push_back({uniform_matrix({d, d}, d, rng), zeros({d}), uniform_matrix({d, d}, d, rng), zeros({d})});
    }
    p.moe.gate = uniform_matrix({d, config.experts}, d, rng);
  }
  p.classifier_w = uniform_matrix({d, config.classes}, d, rng);
  p.classifier_b = zeros({config.classes});
  return p;
}

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  auto add = [&out](std::string name, const Tensor& t, bool decay) {
    if (t.defined()) out.push_back({std::move(name), t, decay});
  };
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    add("backbone." + std::to_string(i) + ".weight", backbone[i].weight, true);
    add("backbone." + std::to_string(i) + ".bias", backbone[i].bias, false);
  }
  add("intra.w1", intra.w1, true);
  add("intra.b1", intra.b1, false);
  add("intra.w2", intra.w2, true);
  add("intra.b2", intra.b2, false);
  add("inter.wq", inter.wq, true);
  add("inter.wk", inter.wk, true);
  add("inter.wv", inter.wv, true);
  add("alpha", alpha, false);
  add("mha.att.weight", multi_head.w_att, true);
  add("mha.att.bias", multi_head.b_att, false);
  for (std::size_t h = 0; h < multi_head.heads.size(); ++h) {
    const std::string prefix = "mha.head" + std::to_string(h) + ".";
    add(prefix + "wq", multi_head.heads[h].wq, true);
    add(prefix + "wk", multi_head.heads[h].wk, true);
    add(prefix + "wv", multi_head.heads[h].wv, true);
  }
  add("mha.out.weight", multi_head.w_out, true);
  add("mha.out.bias", multi_head.b_out, false);
  add("gate.weight", gate.weight, true);
  add("gate.bias", gate.bias, false);
  for (std::size_t e = 0; e < moe.experts.size(); ++e) {
    const std::string prefix = "moe.expert" + std::to_string(e) + ".";
    add(prefix + "w1", moe.experts[e].w1, true);
    add(prefix + "b1", moe.experts[e].b1, false);
    add(prefix + "w2", moe.experts[e].w2, true);
    add(prefix + "b2", moe.experts[e].b2, false);
  }
  add("moe.gate", moe.gate, true);
  add("classifier.weight", classifier_w, true);
  add("classifier.bias", classifier_b, false);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& p : named()) n += p.tensor.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  auto c = [](const Tensor& t) { return t.defined() ? t.clone() : Tensor{}; };
  ModelParams p;
  for (const auto& b : backbone) p.backbone.push_back({c(b.weight), c(b.bias)});
  p.intra = {c(intra.w1), c(intra.b1), c(intra.w2), c(intra.b2)};
  p.inter = {c(inter.wq), c(inter.wk), c(inter.wv)};
  p.alpha = c(alpha);
  p.multi_head.w_att = c(multi_head.w_att);
  p.multi_head.b_att = c(multi_head.b_att);
  for (const auto& h : multi_head.heads) p.multi_head.heads.push_back({c(h.wq), c(h.wk), c(h.wv)});
  p.multi_head.w_out = c(multi_head.w_out);
  p.multi_head.b_out = c(multi_head.b_out);
  p.gate = {c(gate.weight), c(gate.bias)};
  for (const auto& e : moe.experts) p.moe.experts.push_back({c(e.w1), c(e.b1), c(e.w2), c(e.b2)});
  p.moe.gate = c(moe.gate);
  p.classifier_w = c(classifier_w);
  p.classifier_b = c(classifier_b);
  return p;
}

void ModelParams::zero_grad() {
  for (auto& p : named()) p.tensor.zero_grad();
}

// --- blocks -------------------------------------------------------------------

Tensor backbone_features(Tape& tape, std::span<const ConvBlock> blocks, const Tensor& frames) {
  if (frames.rank() != 3) throw DimensionError("backbone: frames must be [B x T x D], got " + shape_str(frames.shape()));
  if (blocks.empty()) throw ConfigError("backbone: no conv blocks");
  const std::size_t kernel = blocks.front().weight.dim(0);
  if (frames.dim(1) < kernel) {
    throw ConfigError("backbone: window length " + std::to_string(frames.dim(1)) + " is shorter than kernel " +
                      std::to_string(kernel));
  }
  Tensor h = frames;
  for (const auto& block : blocks) h = ops::relu(tape, ops::conv1d(tape, h, block.weight, block.bias));
  return h;
}

Tensor positional_table(std::span<const std::size_t> positions, std::size_t d_model) {
  std::vector<double> pe(positions.size() * d_model);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const double pos = static_cast<double>(positions[r]);
    for (std::size_t j = 0; j < d_model; ++j) {
      const std::size_t i2 = j - j % 2;  // 2i
      const double angle = pos / std::pow(10000.0, static_cast<double>(i2) / static_cast<double>(d_model));
      pe[r * d_model + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({positions.size(), d_model}, std::move(pe));
}

Tensor frame_positional_encoding(Tape& tape, const Tensor& x_bar, std::span<const std::size_t> positions) {
  if (x_bar.rank() != 2 || positions.size() != x_bar.dim(0)) {
    throw DimensionError("positional encoding: " + std::to_string(positions.size()) + " positions for embeddings " +
                         shape_str(x_bar.shape()));
  }
  return ops::add(tape, x_bar, positional_table(positions, x_bar.dim(1)));
}

AttentionOut scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = ops::scale(tape, ops::matmul(tape, q, ops::transpose(tape, k)), inv_sqrt);
  Tensor weights = ops::softmax(tape, scores, 1);
  return {ops::matmul(tape, weights, v), weights};
}

AttentionOut intra_frame_attention(Tape& tape, const IntraParams& params, const Tensor& features) {
  if (features.rank() != 3) {
    throw DimensionError("intra attention: features must be [B x T x d], got " + shape_str(features.shape()));
  }
  const std::size_t b = features.dim(0), t = features.dim(1), d = features.dim(2);
  Tensor hidden = ops::tanh(tape, ops::linear(tape, features, params.w1, params.b1));
  Tensor scores = ops::linear(tape, hidden, params.w2, params.b2);  // [B x T x 1]
  Tensor weights = ops::softmax(tape, ops::reshape(tape, scores, {b, t}), 1);
  Tensor pooled = ops::matmul(tape, ops::reshape(tape, weights, {b, 1, t}), features);  // [B x 1 x d]
  return {ops::reshape(tape, pooled, {b, d}), weights};
}

AttentionOut inter_frame_attention(Tape& tape, const InterParams& params, const Tensor& x_pe) {
  Tensor q = ops::matmul(tape, x_pe, params.wq);
  Tensor k = ops::matmul(tape, x_pe, params.wk);
  Tensor v = ops::matmul(tape, x_pe, params.wv);
  return scaled_dot_attention(tape, q, k, v);
}

Tensor combine_attention(Tape& tape, const Tensor& a_inter, const Tensor& a_intra, const Tensor& alpha) {
  if (a_inter.shape() != a_intra.shape()) {
    throw DimensionError("combine: A_inter " + shape_str(a_inter.shape()) + " vs A_intra " +
                         shape_str(a_intra.shape()));
  }
  Tensor a = ops::sigmoid(tape, alpha);
  return ops::add(tape, ops::mul(tape, a, a_inter), ops::mul(tape, ops::affine(tape, a, -1.0, 1.0), a_intra));
}

MultiHeadOut multi_head_block(Tape& tape, const MultiHeadParams& params, const Tensor& x_bar, const Tensor& a_com,
                              bool cross_frame) {
  const Tensor both[] = {x_bar, a_com};
  MultiHeadOut out;
  out.x_att = ops::linear(tape, ops::concat(tape, both, 1), params.w_att, params.b_att);
  std::vector<Tensor> heads;
  heads.reserve(params.heads.size());
  for (const auto& head : params.heads) {
    Tensor v = ops::matmul(tape, out.x_att, head.wv);
    if (!cross_frame) {
      // Attending only to itself gives each frame weight 1 on its own value.
      heads.push_back(v);
      continue;
    }
    Tensor q = ops::matmul(tape, out.x_att, head.wq);
    Tensor k = ops::matmul(tape, out.x_att, head.wk);
    AttentionOut a = scaled_dot_attention(tape, q, k, v);
    heads.push_back(a.output);
    out.weights.push_back(a.weights);
  }
  out.output = ops::linear(tape, ops::concat(tape, heads, 1), params.w_out, params.b_out);
  return out;
}

Tensor gated_mix(Tape& tape, const Tensor& gate, const Tensor& a_mul, const Tensor& x_enhanced) {
  return ops::add(tape, ops::mul(tape, gate, a_mul), ops::mul(tape, ops::affine(tape, gate, -1.0, 1.0), x_enhanced));
}

GateOut gated_fusion(Tape& tape, const GateParams& params, const Tensor& a_mul, const Tensor& x_enhanced,
                     const Tensor& x_att) {
  if (a_mul.shape() != x_enhanced.shape() || a_mul.shape() != x_att.shape()) {
    throw DimensionError("gated fusion: shapes " + shape_str(a_mul.shape()) + ", " + shape_str(x_enhanced.shape()) +
                         ", " + shape_str(x_att.shape()) + " differ");
  }
  GateOut out;
  out.gate = ops::sigmoid(tape, ops::linear(tape, x_att, params.weight, params.bias));
  out.output = gated_mix(tape, out.gate, a_mul, x_enhanced);
  return out;
}

MoeOut moe_layer(Tape& tape, const MoeParams& params, const Tensor& input) {
  if (params.experts.empty()) throw ConfigError("moe: at least one expert required");
  const std::size_t b = input.dim(0), d = input.dim(1), n = params.experts.size();
  std::vector<Tensor> outputs;
  outputs.reserve(n);
  for (const auto& e : params.experts) {
    Tensor hidden = ops::relu(tape, ops::linear(tape, input, e.w1, e.b1));
    outputs.push_back(ops::reshape(tape, ops::linear(tape, hidden, e.w2, e.b2), {b, 1, d}));
  }
  Tensor stacked = ops::concat(tape, outputs, 1);  // [B x n x d]
  MoeOut out;
  out.weights = ops::softmax(tape, ops::matmul(tape, input, params.gate), 1);
  Tensor mixed = ops::matmul(tape, ops::reshape(tape, out.weights, {b, 1, n}), stacked);
  out.output = ops::reshape(tape, mixed, {b, d});
  return out;
}

ForwardTrace forward(Tape& tape, const ModelParams& params, const ModelConfig& config, const Tensor& frames,
                     const ForwardOptions& options) {
  if (frames.rank() != 3 || frames.dim(1) != config.window_len || frames.dim(2) != config.channels) {
    throw DimensionError("forward: frames " + shape_str(frames.shape()) + " do not match window " +
                         std::to_string(config.window_len) + " x channels " + std::to_string(config.channels));
  }
  const bool drop = options.training && config.dropout > 0.0;
  if (drop && options.rng == nullptr) throw ContractError("forward: training with dropout needs an rng");
  Rng dummy(0);
  Rng& rng = options.rng ? *options.rng : dummy;
  const std::size_t batch = frames.dim(0);
  const auto& comp = config.components;

  std::vector<std::size_t> default_positions;
  std::span<const std::size_t> positions = options.positions;
  if (positions.empty()) {
    default_positions.resize(batch);
    std::iota(default_positions.begin(), default_positions.end(), std::size_t{0});
    positions = default_positions;
  }

  ForwardTrace tr;
  tr.features = backbone_features(tape, params.backbone, frames);
  Tensor pooled = ops::mean_axis(tape, tr.features, 1);
  tr.x_bar = ops::dropout(tape, pooled, config.dropout, drop, rng);
  tr.x_pe = comp.pe ? frame_positional_encoding(tape, tr.x_bar, positions) : tr.x_bar;

  if (comp.intra) {
    AttentionOut intra = intra_frame_attention(tape, params.intra, tr.features);
    tr.a_intra = intra.output;
    tr.intra_weights = intra.weights;
  } else {
    tr.a_intra = tr.x_bar;
  }
  if (comp.inter) {
    AttentionOut inter = inter_frame_attention(tape, params.inter, tr.x_pe);
    tr.a_inter = inter.output;
    tr.inter_weights = inter.weights;
  } else {
    tr.a_inter = tr.x_pe;
  }
  if (comp.intra && comp.inter) {
    tr.blend = ops::sigmoid(tape, params.alpha);
    tr.a_com = combine_attention(tape, tr.a_inter, tr.a_intra, params.alpha);
  } else if (comp.intra) {
    tr.a_com = tr.a_intra;
  } else if (comp.inter) {
    tr.a_com = tr.a_inter;
  } else {
    tr.a_com = tr.x_pe;
  }

  MultiHeadOut mh = multi_head_block(tape, params.multi_head, tr.x_bar, tr.a_com, comp.inter);
  tr.x_att = mh.x_att;
  tr.head_weights = std::move(mh.weights);
  tr.a_mul = ops::dropout(tape, mh.output, config.dropout, drop, rng);

  if (comp.gate) {
    GateOut g = gated_fusion(tape, params.gate, tr.a_mul, tr.x_pe, tr.x_att);
    tr.gate = g.gate;
    tr.o_gated = g.output;
  } else {
    tr.o_gated = tr.a_mul;
  }

  Tensor mixed = tr.o_gated;
  if (comp.moe) {
    MoeOut m = moe_layer(tape, params.moe, tr.o_gated);
    tr.moe_weights = m.weights;
    mixed = m.output;
  }
  tr.o_moe = ops::dropout(tape, mixed, config.dropout, drop, rng);
  tr.logits = ops::linear(tape, tr.o_moe, params.classifier_w, params.classifier_b);
  return tr;
}

std::vector<int> predict(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(rows);
  const auto z = logits.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = z.subspan(i * classes, classes);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace frameattn
