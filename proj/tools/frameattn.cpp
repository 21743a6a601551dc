// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <deque>
#include <span>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "frameattn/ablation.hpp"
#include "frameattn/checkpoint.hpp"
#include "frameattn/config.hpp"
#include "frameattn/error.hpp"
#include "frameattn/gradcheck_suite.hpp"
#include "frameattn/kernels.hpp"
#include "frameattn/synthetic.hpp"
#include "frameattn/tensor.hpp"
#include "frameattn/train.hpp"

namespace fs = std::filesystem;
using namespace frameattn;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

// Flags that map one-to-one onto configuration keys.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> values;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* slot = &slots_.emplace_back();
    keys_.push_back(key);
    app->add_option(flag, *slot, help + " (" + key + ")");
  }

  void apply(RunConfig& rc) const {
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (!slots_[i].empty()) rc.set(keys_[i], slots_[i]);
    }
  }

 private:
  std::deque<std::string> slots_;
  std::vector<std::string> keys_;
};

RunConfig build_config(const Common& common, const Overrides& overrides) {
  RunConfig rc;
  if (!common.config.empty()) rc.load_ini(common.config);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    rc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  overrides.apply(rc);
  if (common.seed) rc.seed = *common.seed;
  if (!common.out.empty()) rc.out_dir = common.out;
  return rc;
}

void check_labels(const std::vector<Recording>& recs, std::size_t classes) {
  int max_label = -1;
  for (const auto& r : recs) {
    for (int l : r.labels) {
      if (l < 0) throw DataError("session " + r.session_id + " has negative label " + std::to_string(l));
      max_label = std::max(max_label, l);
    }
  }
  if (static_cast<std::size_t>(max_label) >= classes) {
    throw ConfigError("data has labels up to " + std::to_string(max_label) + " (C=" + std::to_string(max_label + 1) +
                      ") but model.classes is " + std::to_string(classes));
  }
}

std::vector<Recording> load_data(const fs::path& dir) {
  LoadResult loaded = load_recordings(dir);
  if (loaded.dropped_rows > 0) {
    std::cerr << "warning: dropped " << loaded.dropped_rows << " rows with non-finite readings\n";
  }
  return std::move(loaded.recordings);
}

// Classes declared by a synthetic manifest, if the data directory has one.
std::optional<std::size_t> manifest_classes(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) return std::nullopt;
  try {
    nlohmann::json j;
    in >> j;
    return j.at("config").at("classes").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_report(const std::string& split, const MetricsReport& r) {
  std::cout << split << " mean F1: " << fixed(r.mean_f1) << '\n';
  std::cout << "class      f1      tp      fp      fn\n";
  for (std::size_t c = 0; c < r.classes; ++c) {
    char line[128];
    std::snprintf(line, sizeof line, "%5zu  %.4f  %6llu  %6llu  %6llu\n", c, r.per_class_f1[c],
                  static_cast<unsigned long long>(r.tp[c]), static_cast<unsigned long long>(r.fp[c]),
                  static_cast<unsigned long long>(r.fn[c]));
    std::cout << line;
  }
}

int cmd_datagen(const RunConfig& base) {
  RunConfig rc = base;
  rc.resolve();
  const fs::path out = rc.out_dir;
  const auto recs = generate_synthetic(rc.synthetic);
  write_synthetic_dataset(recs, rc.synthetic, out);
  write_json_file(out / "run_config.json", rc.to_json());
  std::size_t samples = 0;
  for (const auto& r : recs) samples += r.length();
  std::cout << "wrote " << recs.size() << " sessions (" << samples << " samples) to " << out.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& base, bool dump_plan, bool quiet) {
  RunConfig rc = base;
  rc.resolve();
  const auto recs = load_data(rc.data_dir);
  rc.model.channels = recs.front().channels;
  check_labels(recs, rc.model.classes);
  const DataSplits data = make_splits(recs, rc.window, rc.split);
  for (const auto& w : data.train.warnings) std::cerr << "warning: " << w << '\n';

  const fs::path out = rc.out_dir;
  fs::create_directories(out);
  write_json_file(out / "run_config.json", rc.to_json());

  TrainOutputs outputs;
  outputs.metrics_path = out / "metrics.jsonl";
  outputs.checkpoint_path = out / "best.ckpt";
  if (dump_plan) outputs.plan_path = out / "plans.jsonl";
  if (!quiet) outputs.log = [](const std::string& line) { std::cout << line << '\n' << std::flush; };

  std::cout << "train " << data.train.size() << " frames / val " << data.val.size() << " / test " << data.test.size()
            << "  strategy " << strategy_name(rc.train.strategy) << "  batch " << rc.train.batch_size << "  disabled ["
            << rc.to_json()["model"]["disable"].get<std::string>() << "]\n";
  const TrainResult r = train(rc.model, data, rc.train, outputs);
  std::cout << "best epoch " << r.best_epoch << " (val mean F1 " << fixed(r.best_val_f1) << ")\n";
  std::cout << "test mean F1: " << fixed(r.test.mean_f1) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cli_config, bool config_given, const std::string& run_dir, std::string checkpoint,
             const std::string& data_override, const std::string& split, bool out_given) {
  RunConfig rc = cli_config;
  if (!run_dir.empty()) {
    const fs::path rc_path = fs::path(run_dir) / "run_config.json";
    if (!config_given && fs::exists(rc_path)) {
      rc = RunConfig::from_json_file(rc_path);
      if (out_given) rc.out_dir = cli_config.out_dir;
      else rc.out_dir = run_dir;
    }
    if (checkpoint.empty()) checkpoint = (fs::path(run_dir) / "best.ckpt").string();
  }
  if (checkpoint.empty()) throw ConfigError("eval needs --run DIR or --checkpoint PATH");
  if (!data_override.empty()) rc.data_dir = data_override;
  rc.resolve();

  const auto ckpt_records = read_checkpoint(checkpoint);
  const std::size_t ckpt_classes = checkpoint_classes(ckpt_records);
  const auto recs = load_data(rc.data_dir);
  rc.model.channels = recs.front().channels;
  std::size_t data_classes = 0;
  if (auto m = manifest_classes(rc.data_dir)) {
    data_classes = *m;
  } else {
    for (const auto& r : recs) {
      for (int l : r.labels) data_classes = std::max(data_classes, static_cast<std::size_t>(l) + 1);
    }
  }
  const bool mismatch = data_classes > ckpt_classes || (manifest_classes(rc.data_dir) && data_classes != ckpt_classes);
  if (mismatch) {
    throw ConfigError("class count mismatch: checkpoint has C=" + std::to_string(ckpt_classes) + ", data has C=" +
                      std::to_string(data_classes));
  }
  rc.model.classes = ckpt_classes;

  NormalizerStats stats;
  const ModelParams params = load_model(checkpoint, rc.model, &stats);
  if (stats.mean.empty()) throw FormatError(checkpoint + ": checkpoint carries no normalizer statistics");

  const std::size_t held = rc.split.val_sessions + rc.split.test_sessions;
  if (recs.size() < held + 1) throw DataError("not enough sessions for the configured splits");
  const std::size_t n_train = recs.size() - held;
  std::span<const Recording> all(recs);
  std::span<const Recording> chosen;
  if (split == "train") chosen = all.subspan(0, n_train);
  else if (split == "val") chosen = all.subspan(n_train, rc.split.val_sessions);
  else if (split == "test") chosen = all.subspan(n_train + rc.split.val_sessions);
  else throw ConfigError("unknown split '" + split + "' (train | val | test)");

  const FrameSet frames = prepare_frames(chosen, stats, rc.window);
  if (frames.size() == 0) throw DataError(split + " split has no frames");
  const MetricsReport report = evaluate(params, rc.model, frames, rc.train.batch_size, rc.train.loss);
  print_report(split, report);

  const fs::path out = rc.out_dir;
  nlohmann::json rec = metrics_record(0, split, report,
                                      {{"checkpoint", checkpoint}, {"data", rc.data_dir.string()},
                                       {"batch_size", rc.train.batch_size}});
  write_json_file(out / ("eval_" + split + ".json"), rec);
  return 0;
}

int cmd_gradcheck(const RunConfig& base, const std::string& fault) {
  GradcheckSuiteConfig cfg;
  cfg.seed = base.seed;
  if (!fault.empty()) {
    const auto colon = fault.find(':');
    const std::string op = fault.substr(0, colon);
    const double factor = colon == std::string::npos ? 1.5 : std::stod(fault.substr(colon + 1));
    testing::corrupt_backward(op, factor);
    std::cout << "fault injected into backward rule of '" << op << "' (x" << factor << ")\n";
  }
  const GradcheckReport report = run_gradcheck_suite(cfg);
  testing::clear_corruption();

  std::cout << "kernels: " << kernels::active().name << "\n";
  std::cout << "block                  entries   max rel error  result\n";
  for (const auto& r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %7zu   %13.3e  %s\n", r.block.c_str(), r.entries, r.max_rel_error,
                  r.passed ? "ok" : ("FAIL at " + r.worst).c_str());
    std::cout << line;
  }
  char tail[128];
  std::snprintf(tail, sizeof tail, "threshold %.0e, %.2f s\n", report.threshold, report.seconds);
  std::cout << tail;
  if (!report.passed()) {
    for (const auto& r : report.rows) {
      if (!r.passed) std::cerr << "gradient check failed for block " << r.block << '\n';
    }
    return 3;
  }
  std::cout << "all blocks pass\n";
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(conv(item));
  }
  return out;
}

std::size_t to_size(const std::string& s) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size() || s.front() == '-') throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
}

std::uint64_t to_u64(const std::string& s) { return to_size(s); }
Strategy to_strategy(const std::string& s) { return parse_strategy(s); }
std::string to_string(const std::string& s) { return s; }

int cmd_ablate(const RunConfig& base, const std::string& strategies, const std::string& batch_sizes,
               const std::string& variants, const std::string& seeds) {
  RunConfig rc = base;
  rc.resolve();
  AblationGrid grid;
  grid.strategies = strategies.empty() ? std::vector<Strategy>{rc.train.strategy} : parse_list(strategies, to_strategy);
  grid.batch_sizes = batch_sizes.empty() ? std::vector<std::size_t>{rc.train.batch_size} : parse_list(batch_sizes, to_size);
  grid.variants = parse_list(variants, to_string);
  grid.seeds = parse_list(seeds, to_u64);
  grid.validate();

  const auto recs = load_data(rc.data_dir);
  rc.model.channels = recs.front().channels;
  check_labels(recs, rc.model.classes);
  const fs::path out = rc.out_dir;
  fs::create_directories(out);
  write_json_file(out / "run_config.json", rc.to_json());

  std::cout << "ablation: " << grid.cells() << " cells x " << grid.seeds.size() << " seeds\n" << std::flush;
  const auto cells =
      run_ablation(base, recs, grid, [](const std::string& line) { std::cout << line << '\n' << std::flush; });
  const fs::path csv = out / "ablation.csv";
  write_ablation_csv(csv, cells);

  std::cout << "strategy         batch  variant       mean F1   std\n";
  for (const auto& c : cells) {
    char line[160];
    if (c.ok) {
      std::snprintf(line, sizeof line, "%-16s %5zu  %-12s  %.4f  %.4f\n", std::string(strategy_name(c.strategy)).c_str(),
                    c.batch_size, c.variant.c_str(), c.mean_f1, c.std_f1);
    } else {
      std::snprintf(line, sizeof line, "%-16s %5zu  %-12s  failed\n", std::string(strategy_name(c.strategy)).c_str(),
                    c.batch_size, c.variant.c_str());
    }
    std::cout << line;
  }
  std::cout << "wrote " << csv.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frameattn: intra- and inter-frame attention for sequential activity recognition"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "INI configuration file");
  app.add_option("--seed", common.seed, "random seed (run.seed)");
  app.add_option("--out", common.out, "output directory (run.out)");
  app.add_option("--set", common.sets, "override any key: section.key=value")->allow_extra_args(false);
  app.fallthrough();

  Overrides datagen_ov, train_ov, eval_ov, ablate_ov;

  auto* datagen = app.add_subcommand("datagen", "generate the synthetic context dataset");
  datagen_ov.add(datagen, "--classes", "synthetic.classes", "number of classes");
  datagen_ov.add(datagen, "--sessions", "synthetic.sessions", "number of sessions");
  datagen_ov.add(datagen, "--length", "synthetic.length", "samples per session");
  datagen_ov.add(datagen, "--context", "synthetic.context", "context-dependent emissions (true/false)");
  datagen_ov.add(datagen, "--noise", "synthetic.noise", "noise standard deviation");

  auto add_training_flags = [](CLI::App* cmd, Overrides& ov) {
    ov.add(cmd, "--data", "data.dir", "directory of session CSV files");
    ov.add(cmd, "--strategy", "train.strategy", "time-sequential | shuffled");
    ov.add(cmd, "--disable", "model.disable", "comma list of intra,inter,pe,moe,gate,focal");
    ov.add(cmd, "--heads", "model.heads", "attention heads");
    ov.add(cmd, "--d-model", "model.d_model", "embedding width");
    ov.add(cmd, "--experts", "model.experts", "MoE experts");
    ov.add(cmd, "--classes", "model.classes", "number of classes");
    ov.add(cmd, "--dropout", "model.dropout", "dropout rate");
    ov.add(cmd, "--batch-size", "train.batch_size", "mini-batch size");
    ov.add(cmd, "--epochs", "train.epochs", "training epochs");
    ov.add(cmd, "--lr", "train.lr", "initial learning rate");
    ov.add(cmd, "--lambda", "loss.lambda", "combined-loss weight of the focal term");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model and evaluate the best checkpoint on the test split");
  add_training_flags(train_cmd, train_ov);
  bool dump_plan = false, quiet = false;
  train_cmd->add_flag("--dump-plan", dump_plan, "write every epoch's batch plan to plans.jsonl");
  train_cmd->add_flag("--quiet", quiet, "no per-epoch log lines");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  std::string run_dir, checkpoint, eval_data, split = "test";
  eval_cmd->add_option("--run", run_dir, "run directory written by train (run_config.json, best.ckpt)");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval_cmd->add_option("--data", eval_data, "directory of session CSV files");
  eval_cmd->add_option("--split", split, "train | val | test")->capture_default_str();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every block on a tiny model");
  std::string fault;
  grad_cmd->add_option("--inject-fault", fault, "corrupt the backward rule of OP[:factor] (test hook)");

  auto* ablate_cmd = app.add_subcommand("ablate", "train a grid of strategies x batch sizes x variants");
  add_training_flags(ablate_cmd, ablate_ov);
  std::string strategies, batch_sizes, variants = "full", seeds = "1,2,3";
  ablate_cmd->add_option("--strategies", strategies, "comma list (default: train.strategy)");
  ablate_cmd->add_option("--batch-sizes", batch_sizes, "comma list (default: train.batch_size)");
  ablate_cmd->add_option("--variants", variants,
                         "comma list of baseline, intra, inter, intra+inter, full, isolated")
      ->capture_default_str();
  ablate_cmd->add_option("--seeds", seeds, "comma list of seeds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*datagen) return cmd_datagen(build_config(common, datagen_ov));
    if (*train_cmd) return cmd_train(build_config(common, train_ov), dump_plan, quiet);
    if (*eval_cmd) {
      return cmd_eval(build_config(common, eval_ov), !common.config.empty(), run_dir, checkpoint, eval_data, split,
                      !common.out.empty());
    }
    if (*grad_cmd) return cmd_gradcheck(build_config(common, eval_ov), fault);
    if (*ablate_cmd) return cmd_ablate(build_config(common, ablate_ov), strategies, batch_sizes, variants, seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  }
  return 0;
}
