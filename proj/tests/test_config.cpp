// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "frameattn/config.hpp"
#include "frameattn/error.hpp"

using namespace frameattn;
namespace fs = std::filesystem;

TEST_CASE("documented defaults") {
  RunConfig c;
  c.resolve();
  CHECK(c.train.epochs == 150);
  CHECK(c.train.batch_size == 128);
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.weight_decay == 1e-2);
  CHECK(c.train.plateau_patience == 10);
  CHECK(c.train.lr_factor == 0.5);
  CHECK(c.train.min_lr == 1e-6);
  CHECK(c.model.d_model == 128);
  CHECK(c.model.heads == 8);
  CHECK(c.model.experts == 8);
  CHECK(c.model.dropout == 0.5);
  CHECK(c.model.conv_blocks == 3);
  CHECK(c.model.kernel == 5);
  CHECK(c.window.window == 24);
  CHECK(c.window.step == 12);
  CHECK(c.train.loss.beta == 0.25);
  CHECK(c.train.loss.gamma == 2.0);
  CHECK(c.train.strategy == Strategy::kTimeSequential);
  CHECK(c.model.window_len == c.window.window);
  CHECK(c.train.seed == c.seed);
  CHECK(c.synthetic.seed == c.seed);
}

TEST_CASE("set parses typed values") {
  RunConfig c;
  c.set("train.lr", "0.003");
  c.set("model.d_model", "16");
  c.set("model.heads", "2");
  c.set("train.strategy", "shuffled");
  c.set("window.label_rule", "last");
  c.set("synthetic.context", "false");
  c.set("run.seed", "11");
  c.resolve();
  CHECK(c.train.lr == 0.003);
  CHECK(c.model.d_model == 16);
  CHECK(c.train.strategy == Strategy::kShuffled);
  CHECK(c.window.label_rule == LabelRule::kLastSample);
  CHECK_FALSE(c.synthetic.context);
  CHECK(c.train.seed == 11);
}

TEST_CASE("bad keys and values are configuration errors") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("train.learning_rate", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("nosection", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("train.epochs", "-3"), ConfigError);
  CHECK_THROWS_AS(c.set("train.lr", "fast"), ConfigError);
  CHECK_THROWS_AS(c.set("train.lr", "nan"), ConfigError);
  CHECK_THROWS_AS(c.set("model.disable", "everything"), ConfigError);
  c.set("synthetic.classes", "1");
  CHECK_THROWS_AS(c.resolve(), ConfigError);
  RunConfig d;
  d.set("model.heads", "7");
  CHECK_THROWS_AS(d.resolve(), ConfigError);
}

TEST_CASE("disabling focal zeroes lambda") {
  RunConfig c;
  c.set("model.disable", "moe,focal");
  c.resolve();
  CHECK(c.focal_disabled);
  CHECK(c.train.loss.lambda == 0.0);
  CHECK_FALSE(c.model.components.moe);
}

TEST_CASE("ini file loading") {
  const fs::path p = fs::temp_directory_path() / ("frameattn_cfg_" + std::to_string(::getpid()) + ".ini");
  {
    std::ofstream out(p);
    out << "[run]\nseed = 5\n\n[model]\nd_model = 16\nheads = 2\ndisable = pe\n\n[train]\nepochs = 3\n";
  }
  RunConfig c;
  c.load_ini(p);
  c.resolve();
  CHECK(c.seed == 5);
  CHECK(c.model.d_model == 16);
  CHECK_FALSE(c.model.components.pe);
  CHECK(c.train.epochs == 3);
  {
    std::ofstream out(p);
    out << "[train]\nspeed = 3\n";
  }
  RunConfig bad;
  CHECK_THROWS_AS(bad.load_ini(p), ConfigError);
  fs::remove(p);
  CHECK_THROWS(bad.load_ini(p));
}

TEST_CASE("json round trip echoes every key") {
  RunConfig c;
  c.set("model.disable", "intra,focal");
  c.set("train.batch_size", "32");
  c.set("synthetic.noise", "0.3");
  c.resolve();
  const auto j = c.to_json();
  RunConfig d;
  d.load_json(j);
  d.resolve();
  CHECK(d.to_json() == j);
  for (const auto& key : RunConfig::keys()) {
    const auto dot = key.find('.');
    INFO(key);
    CHECK(j.contains(key.substr(0, dot)));
    CHECK(j[key.substr(0, dot)].contains(key.substr(dot + 1)));
  }
  CHECK(j["resolved"]["window_len"] == 24);
}

TEST_CASE("key list covers every section") {
  const auto keys = RunConfig::keys();
  for (const char* k : {"run.seed", "model.disable", "window.size", "train.strategy", "loss.lambda", "data.dir",
                        "synthetic.context"}) {
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
  }
}
