// SPDX-License-Identifier: Apache-2.0
#include "frameattn/gradcheck_suite.hpp"

#include <chrono>
#include <numeric>

#include "frameattn/gradcheck.hpp"
#include "frameattn/losses.hpp"
#include "frameattn/ops.hpp"
#include "frameattn/rng.hpp"

namespace frameattn {

ModelConfig GradcheckSuiteConfig::model_config() const {
  ModelConfig m;
  m.window_len = window;
  m.channels = channels;
  m.d_model = d_model;
  m.heads = heads;
  m.experts = experts;
  m.classes = classes;
  m.conv_blocks = conv_blocks;
  m.kernel = kernel;
  m.dropout = 0.0;
  return m;
}

bool GradcheckReport::passed() const {
  for (const auto& r : rows) {
    if (!r.passed) return false;
  }
  return !rows.empty();
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

// sum(out * R) with a fixed random R, so every output entry matters.
Tensor project(Tape& tape, const Tensor& out, const Tensor& r) { return ops::sum(tape, ops::mul(tape, out, r)); }

class Suite {
 public:
  explicit Suite(const GradcheckSuiteConfig& c) : cfg_(c), rng_(derive_seed(c.seed, stream_id("gradcheck"))) {
    report_.threshold = c.threshold;
  }

  Tensor rand(Shape shape, double scale = 1.0) { return random_tensor(std::move(shape), rng_, scale); }

  void check(const std::string& block, const ScalarFn& f, std::vector<Tensor> inputs) {
    const GradcheckResult r = gradcheck(f, inputs, cfg_.eps);
    GradcheckRow row;
    row.block = block;
    row.max_rel_error = r.max_rel_error;
    for (const auto& t : inputs) row.entries += t.numel();
    row.worst = "input" + std::to_string(r.worst_input) + "[" + std::to_string(r.worst_index) + "]";
    row.passed = r.max_rel_error < cfg_.threshold;
    report_.rows.push_back(std::move(row));
  }

  GradcheckReport take() { return std::move(report_); }

 private:
  const GradcheckSuiteConfig& cfg_;
  Rng rng_;
  GradcheckReport report_;
};

void append(std::vector<Tensor>& dst, const ModelParams& p) {
  for (const auto& n : p.named()) dst.push_back(n.tensor);
}

}  // namespace

GradcheckReport run_gradcheck_suite(const GradcheckSuiteConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig mc = config.model_config();
  mc.validate();
  const ModelParams params = ModelParams::init(mc, config.seed);
  const std::size_t b = config.batch, t = config.window, d = config.d_model;

  Suite s(config);
  const Tensor frames = s.rand({b, t, config.channels});
  const Tensor features = s.rand({b, t, d}, 0.5);
  const Tensor x_bar = s.rand({b, d}, 0.5);
  const Tensor x_pe = s.rand({b, d}, 0.5);
  const Tensor a_inter = s.rand({b, d}, 0.5);
  const Tensor a_intra = s.rand({b, d}, 0.5);
  const Tensor a_mul = s.rand({b, d}, 0.5);
  const Tensor x_att = s.rand({b, d}, 0.5);
  const Tensor alpha = s.rand({1}, 0.5);
  const Tensor logits = s.rand({b, config.classes});
  std::vector<int> labels(b);
  Rng label_rng(derive_seed(config.seed, stream_id("gradcheck.labels")));
  for (auto& l : labels) l = static_cast<int>(label_rng.below(config.classes));
  std::vector<std::size_t> positions(b);
  std::iota(positions.begin(), positions.end(), std::size_t{0});

  {
    const Tensor r = s.rand({b, t, d});
    std::vector<Tensor> in = {frames};
    for (const auto& blk : params.backbone) {
      in.push_back(blk.weight);
      in.push_back(blk.bias);
    }
    s.check("backbone", [&](Tape& tape) { return project(tape, backbone_features(tape, params.backbone, frames), r); },
            in);
  }
  {
    const Tensor r = s.rand({b, d});
    s.check("positional_encoding",
            [&](Tape& tape) { return project(tape, frame_positional_encoding(tape, x_bar, positions), r); }, {x_bar});
  }
  {
    const Tensor r = s.rand({b, d});
    const auto& p = params.intra;
    s.check("intra_attention",
            [&](Tape& tape) { return project(tape, intra_frame_attention(tape, p, features).output, r); },
            {features, p.w1, p.b1, p.w2, p.b2});
  }
  {
    const Tensor r = s.rand({b, d});
    const auto& p = params.inter;
    s.check("inter_attention",
            [&](Tape& tape) { return project(tape, inter_frame_attention(tape, p, x_pe).output, r); },
            {x_pe, p.wq, p.wk, p.wv});
  }
  {
    const Tensor r = s.rand({b, d});
    s.check("combine_attention",
            [&](Tape& tape) { return project(tape, combine_attention(tape, a_inter, a_intra, alpha), r); },
            {a_inter, a_intra, alpha});
  }
  const auto& mh = params.multi_head;
  {
    const Tensor r = s.rand({b, d});
    s.check("concat_projection",
            [&](Tape& tape) { return project(tape, multi_head_block(tape, mh, x_bar, a_inter).x_att, r); },
            {x_bar, a_inter, mh.w_att, mh.b_att});
  }
  {
    const Tensor r = s.rand({b, d});
    std::vector<Tensor> in = {x_bar, a_inter, mh.w_att, mh.b_att, mh.w_out, mh.b_out};
    for (const auto& h : mh.heads) {
      in.push_back(h.wq);
      in.push_back(h.wk);
      in.push_back(h.wv);
    }
    s.check("multi_head",
            [&](Tape& tape) { return project(tape, multi_head_block(tape, mh, x_bar, a_inter).output, r); }, in);
  }
  const auto& gp = params.gate;
  {
    const Tensor r = s.rand({b, d});
    s.check("gate", [&](Tape& tape) { return project(tape, gated_fusion(tape, gp, a_mul, x_pe, x_att).gate, r); },
            {x_att, gp.weight, gp.bias});
  }
  {
    const Tensor r = s.rand({b, d});
    s.check("gated_fusion",
            [&](Tape& tape) { return project(tape, gated_fusion(tape, gp, a_mul, x_pe, x_att).output, r); },
            {a_mul, x_pe, x_att, gp.weight, gp.bias});
  }
  {
    const Tensor r = s.rand({b, d});
    std::vector<Tensor> in = {a_mul, params.moe.gate};
    for (const auto& e : params.moe.experts) {
      in.push_back(e.w1);
      in.push_back(e.b1);
      in.push_back(e.w2);
      in.push_back(e.b2);
    }
    s.check("moe", [&](Tape& tape) { return project(tape, moe_layer(tape, params.moe, a_mul).output, r); }, in);
  }
  LossConfig lc;
  s.check("loss.cross_entropy", [&](Tape& tape) { return cross_entropy(tape, logits, labels); }, {logits});
  s.check("loss.focal", [&](Tape& tape) { return focal_loss(tape, logits, labels, lc.beta, lc.gamma); }, {logits});
  s.check("loss.combined", [&](Tape& tape) { return combined_loss(tape, logits, labels, lc); }, {logits});
  {
    std::vector<Tensor> in;
    append(in, params);
    s.check("model",
            [&](Tape& tape) { return combined_loss(tape, forward(tape, params, mc, frames).logits, labels, lc); }, in);
  }

  GradcheckReport report = s.take();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace frameattn
