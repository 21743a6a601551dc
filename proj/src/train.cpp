// SPDX-License-Identifier: Apache-2.0
#include "frameattn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "frameattn/checkpoint.hpp"
#include "frameattn/error.hpp"
#include "frameattn/rng.hpp"

namespace frameattn {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (min_lr > lr) throw ConfigError("min_lr must not exceed lr");
  plateau().validate();
  loss.validate();
}

AdamWConfig TrainConfig::adamw() const {
  AdamWConfig c;
  c.weight_decay = weight_decay;
  return c;
}

PlateauConfig TrainConfig::plateau() const {
  PlateauConfig c;
  c.patience = plateau_patience;
  c.factor = lr_factor;
  c.min_lr = min_lr;
  return c;
}

FrameSet prepare_frames(std::span<const Recording> recordings, const NormalizerStats& stats, const WindowSpec& window) {
  std::vector<Recording> normalized;
  normalized.reserve(recordings.size());
  for (const auto& r : recordings) normalized.push_back(apply_normalizer(r, stats));
  return segment(normalized, window);
}

DataSplits make_splits(std::span<const Recording> recordings, const WindowSpec& window, const SplitSpec& split) {
  const std::size_t held = split.val_sessions + split.test_sessions;
  if (split.val_sessions < 1) throw ConfigError("need at least one validation session");
  if (recordings.size() < held + 1) {
    throw DataError("need at least " + std::to_string(held + 1) + " sessions for train/val/test splits, found " +
                    std::to_string(recordings.size()));
  }
  const std::size_t n_train = recordings.size() - held;
  const auto train_recs = recordings.subspan(0, n_train);
  const auto val_recs = recordings.subspan(n_train, split.val_sessions);
  const auto test_recs = recordings.subspan(n_train + split.val_sessions);

  DataSplits s;
  s.stats = fit_normalizer(train_recs);
  s.train = prepare_frames(train_recs, s.stats, window);
  s.val = prepare_frames(val_recs, s.stats, window);
  s.test = prepare_frames(test_recs, s.stats, window);
  for (const auto& r : train_recs) s.train_sessions.push_back(r.session_id);
  for (const auto& r : val_recs) s.val_sessions.push_back(r.session_id);
  for (const auto& r : test_recs) s.test_sessions.push_back(r.session_id);
  if (s.train.size() == 0) throw DataError("training split has no frames");
  if (s.val.size() == 0) throw DataError("validation split has no frames");
  if (split.test_sessions > 0 && s.test.size() == 0) throw DataError("test split has no frames");
  return s;
}

MetricsReport evaluate(const ModelParams& params, const ModelConfig& config, const FrameSet& frames,
                       std::size_t batch_size, const LossConfig& loss) {
  MetricsAccumulator acc(config.classes);
  for (const auto& batch : evaluation_batches(frames, batch_size)) {
    Tape tape(false);
    const Tensor x = frames.batch(batch);
    const auto labels = frames.labels(batch);
    const ForwardTrace tr = forward(tape, params, config, x);
    const Tensor l = combined_loss(tape, tr.logits, labels, loss);
    acc.add(predict(tr.logits), labels);
    acc.add_loss(l.item(), batch.size());
  }
  return acc.report();
}

namespace {

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void write(const nlohmann::json& j) {
    if (out_.is_open()) out_ << j.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

TrainResult train(const ModelConfig& model, const DataSplits& data, const TrainConfig& config,
                  const TrainOutputs& outputs) {
  model.validate();
  config.validate();
  if (data.train.channels != model.channels || data.train.window != model.window_len) {
    throw ConfigError("frames are " + std::to_string(data.train.window) + " x " + std::to_string(data.train.channels) +
                      " but the model expects " + std::to_string(model.window_len) + " x " +
                      std::to_string(model.channels));
  }

  ModelParams params = ModelParams::init(model, config.seed);
  const auto named = params.named();
  OptimState state = OptimState::for_params(named, config.lr);
  const AdamWConfig adamw = config.adamw();
  const PlateauConfig plateau = config.plateau();
  Rng dropout_rng(derive_seed(config.seed, stream_id("dropout")));

  JsonLines metrics(outputs.metrics_path);
  JsonLines plans(outputs.plan_path);
  const nlohmann::json extra = {{"strategy", strategy_name(config.strategy)}, {"batch_size", config.batch_size}};

  TrainResult result;
  result.best = params.clone();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const BatchPlan plan = make_plan(config.strategy, data.train, config.batch_size, config.seed, epoch);
    plans.write(plan.to_json());
    const double epoch_lr = state.lr;
    MetricsAccumulator acc(model.classes);
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      const auto& batch = plan.batches[b];
      const Tensor x = data.train.batch(batch);
      const auto labels = data.train.labels(batch);
      params.zero_grad();
      Tape tape;
      ForwardOptions opts;
      opts.training = true;
      opts.rng = &dropout_rng;
      const ForwardTrace tr = forward(tape, params, model, x, opts);
      const Tensor loss = combined_loss(tape, tr.logits, labels, config.loss);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite training loss (" + fmt("%g", lv) + ") at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(b) + " of " + std::to_string(plan.batches.size()) +
                           ", lr " + fmt("%g", state.lr));
      }
      tape.backward(loss);
      if (config.grad_clip > 0.0) clip_grad_norm(named, config.grad_clip);
      adamw_step(named, state, adamw);
      acc.add(predict(tr.logits), labels);
      acc.add_loss(lv, batch.size());
    }
    params.zero_grad();

    const MetricsReport train_report = acc.report();
    const MetricsReport val = evaluate(params, model, data.val, config.batch_size, config.loss);
    if (!std::isfinite(val.loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch) + ", lr " + fmt("%g", state.lr));
    }
    plateau_step(state, val.loss, plateau);

    result.train_losses.push_back(train_report.loss);
    result.learning_rates.push_back(epoch_lr);
    const bool improved = val.mean_f1 > result.best_val_f1;
    if (improved) {
      result.best_val_f1 = val.mean_f1;
      result.best_epoch = epoch;
      result.best = params.clone();
      if (!outputs.checkpoint_path.empty()) save_model(outputs.checkpoint_path, result.best, &data.stats);
    }

    nlohmann::json tx = extra;
    tx["lr"] = epoch_lr;
    const auto train_rec = metrics_record(static_cast<int>(epoch), "train", train_report, tx);
    const auto val_rec = metrics_record(static_cast<int>(epoch), "val", val, tx);
    metrics.write(train_rec);
    metrics.write(val_rec);
    result.records.push_back(train_rec);
    result.records.push_back(val_rec);
    if (outputs.log) {
      outputs.log("epoch " + std::to_string(epoch) + "/" + std::to_string(config.epochs) + "  train loss " +
                  fmt("%.4f", train_report.loss) + "  val loss " + fmt("%.4f", val.loss) + "  val mean F1 " +
                  fmt("%.4f", val.mean_f1) + "  lr " + fmt("%.3g", epoch_lr) + (improved ? "  *" : ""));
    }
  }

  if (data.test.size() == 0) return result;
  result.test = evaluate(result.best, model, data.test, config.batch_size, config.loss);
  nlohmann::json tx = extra;
  tx["best_epoch"] = result.best_epoch;
  const auto test_rec = metrics_record(static_cast<int>(result.best_epoch), "test", result.test, tx);
  metrics.write(test_rec);
  result.records.push_back(test_rec);
  return result;
}

}  // namespace frameattn
