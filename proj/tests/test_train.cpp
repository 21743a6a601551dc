// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "frameattn/error.hpp"
#include "frameattn/synthetic.hpp"
#include "frameattn/train.hpp"

using namespace frameattn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("frameattn_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ModelConfig tiny_model(std::size_t classes = 6) {
  ModelConfig m;
  m.window_len = 24;
  m.channels = 3;
  m.d_model = 16;
  m.heads = 2;
  m.experts = 2;
  m.classes = classes;
  m.conv_blocks = 2;
  m.dropout = 0.1;
  return m;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 32;
  t.lr = 0.003;
  t.seed = 1;
  return t;
}

// Parameter values and gradients, bitwise.
std::string fingerprint(const ModelParams& p) {
  std::string s;
  for (const auto& n : p.named()) {
    const auto d = n.tensor.data();
    s.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
    const auto g = n.tensor.grad_view();
    s.append(reinterpret_cast<const char*>(g.data()), g.size() * sizeof(double));
  }
  return s;
}

}  // namespace

TEST_CASE("splits are by whole session") {
  SyntheticConfig sc;
  sc.length = 2000;
  const auto recs = generate_synthetic(sc);
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{});
  CHECK(s.train_sessions.size() == 4);
  CHECK(s.val_sessions == std::vector<std::string>{recs[4].session_id});
  CHECK(s.test_sessions == std::vector<std::string>{recs[5].session_id});
  CHECK(s.train.size() == 4 * window_count(2000, 24, 12));
  CHECK(s.stats.mean.size() == 3);
  const std::vector<Recording> two(recs.begin(), recs.begin() + 2);
  CHECK_THROWS_AS(make_splits(two, WindowSpec{}, SplitSpec{}), DataError);
}

TEST_CASE("one epoch on two sessions emits one record per split") {
  SyntheticConfig sc;
  sc.sessions = 2;
  sc.length = 1500;
  const auto recs = generate_synthetic(sc);
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{1, 0});
  CHECK(s.test.size() == 0);
  const TrainResult r = train(tiny_model(), s, tiny_train(1));
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0]["split"] == "train");
  CHECK(r.records[1]["split"] == "val");
  CHECK(r.records[0]["epoch"] == 1);
  CHECK(r.records[0]["strategy"] == "time-sequential");
  CHECK(r.best_epoch == 1);
}

TEST_CASE("seeded runs are bit identical") {
  TempDir dir("train_det");
  SyntheticConfig sc;
  sc.length = 1500;
  const auto recs = generate_synthetic(sc);
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{});
  for (const char* run : {"a", "b"}) {
    TrainOutputs out;
    out.metrics_path = dir.path / run / "metrics.jsonl";
    out.checkpoint_path = dir.path / run / "best.ckpt";
    out.plan_path = dir.path / run / "plans.jsonl";
    train(tiny_model(), s, tiny_train(3), out);
  }
  for (const char* f : {"metrics.jsonl", "best.ckpt", "plans.jsonl"}) {
    INFO(f);
    const std::string a = slurp(dir.path / "a" / f);
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(dir.path / "b" / f));
  }
  // three epochs x (train, val) + test
  std::ifstream in(dir.path / "a" / "metrics.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 7);
}

TEST_CASE("training on the context task starts monotone and keeps the schedule") {
  const auto recs = generate_synthetic(SyntheticConfig{});
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{});
  TrainConfig t = tiny_train(30);
  t.lr = 1e-3;
  t.plateau_patience = 3;
  const TrainResult r = train(tiny_model(), s, t);
  REQUIRE(r.train_losses.size() == 30);
  for (std::size_t e = 1; e < 5; ++e) CHECK(r.train_losses[e] < r.train_losses[e - 1]);
  for (std::size_t e = 1; e < r.learning_rates.size(); ++e) {
    CHECK(r.learning_rates[e] <= r.learning_rates[e - 1]);
    CHECK(r.learning_rates[e] >= t.min_lr);
  }
  CHECK(r.best_epoch >= 1);
  CHECK(r.test.frames() == s.test.size());
  CHECK(r.records.back()["split"] == "test");
  CHECK(r.records.back()["best_epoch"] == r.best_epoch);
}

TEST_CASE("evaluation does not touch parameters or gradients") {
  SyntheticConfig sc;
  sc.length = 1500;
  const auto recs = generate_synthetic(sc);
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{});
  const ModelConfig m = tiny_model();
  ModelParams p = ModelParams::init(m, 3);
  for (const auto& n : p.named()) n.tensor.grad()[0] = 0.5;
  const std::string before = fingerprint(p);
  const MetricsReport a = evaluate(p, m, s.val, 32, LossConfig{});
  CHECK(fingerprint(p) == before);
  const MetricsReport b = evaluate(p, m, s.val, 32, LossConfig{});
  CHECK(a.loss == b.loss);
  CHECK(a.mean_f1 == b.mean_f1);
  CHECK(a.frames() == s.val.size());
}

TEST_CASE("a diverging run aborts with epoch, batch and learning rate") {
  SyntheticConfig sc;
  sc.length = 1500;
  const auto recs = generate_synthetic(sc);
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{});
  TrainConfig t = tiny_train(2);
  t.lr = 1e300;
  try {
    train(tiny_model(), s, t);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr_factor = 1.5;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.plateau_patience = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("without context an isolated-frame classifier separates the classes") {
  SyntheticConfig sc;
  sc.context = false;
  const auto recs = generate_synthetic(sc);
  const DataSplits s = make_splits(recs, WindowSpec{}, SplitSpec{});
  ModelConfig m = tiny_model();
  m.components = Components::from_disabled("inter,pe,gate");
  const TrainResult r = train(m, s, tiny_train(15));
  CHECK(r.test.mean_f1 > 0.9);
}
