// SPDX-License-Identifier: Apache-2.0
#include "frameattn/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "frameattn/error.hpp"

namespace frameattn {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    std::string(expected) + ")");
}

std::uint64_t to_u64(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, raw, "a non-negative integer");
  return out;
}

std::size_t to_size(std::string_view key, std::string_view raw) { return static_cast<std::size_t>(to_u64(key, raw)); }

double to_double(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) {
    bad_value(key, raw, "a finite number");
  }
  return d;
}

bool to_bool(std::string_view key, std::string_view raw) {
  std::string v = trim(raw);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, raw, "true or false");
}

LabelRule to_label_rule(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  if (v == "majority") return LabelRule::kMajority;
  if (v == "last" || v == "last-sample" || v == "last_sample") return LabelRule::kLastSample;
  bad_value(key, raw, "majority or last-sample");
}

std::string label_rule_name(LabelRule r) { return r == LabelRule::kMajority ? "majority" : "last-sample"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

#define FA_SIZE(name, member)                                                                       \
  Field {                                                                                           \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_size(k, v); }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }                                 \
  }
#define FA_DOUBLE(name, member)                                                                       \
  Field {                                                                                             \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_double(k, v); }, \
        [](const RunConfig& c) { return nlohmann::json(c.member); }                                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"run.seed", [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = to_u64(k, v); },
       [](const RunConfig& c) { return nlohmann::json(c.seed); }},
      {"run.out", [](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = trim(v); },
       [](const RunConfig& c) { return nlohmann::json(c.out_dir.string()); }},

      FA_SIZE("model.d_model", model.d_model),
      FA_SIZE("model.heads", model.heads),
      FA_SIZE("model.experts", model.experts),
      FA_SIZE("model.classes", model.classes),
      FA_SIZE("model.conv_blocks", model.conv_blocks),
      FA_SIZE("model.kernel", model.kernel),
      FA_DOUBLE("model.dropout", model.dropout),
      {"model.disable",
       [](RunConfig& c, std::string_view, std::string_view v) {
         bool focal = false;
         c.model.components = Components::from_disabled(trim(v), &focal);
         c.focal_disabled = focal;
       },
       [](const RunConfig& c) {
         std::string d = c.model.components.disabled();
         if (c.focal_disabled) d += d.empty() ? "focal" : ",focal";
         return nlohmann::json(d);
       }},

      FA_SIZE("window.size", window.window),
      FA_SIZE("window.step", window.step),
      {"window.label_rule",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.window.label_rule = to_label_rule(k, v); },
       [](const RunConfig& c) { return nlohmann::json(label_rule_name(c.window.label_rule)); }},

      FA_SIZE("train.epochs", train.epochs),
      FA_SIZE("train.batch_size", train.batch_size),
      FA_DOUBLE("train.lr", train.lr),
      FA_DOUBLE("train.weight_decay", train.weight_decay),
      FA_SIZE("train.plateau_patience", train.plateau_patience),
      FA_DOUBLE("train.lr_factor", train.lr_factor),
      FA_DOUBLE("train.min_lr", train.min_lr),
      FA_DOUBLE("train.grad_clip", train.grad_clip),
      {"train.strategy",
       [](RunConfig& c, std::string_view, std::string_view v) { c.train.strategy = parse_strategy(trim(v)); },
       [](const RunConfig& c) { return nlohmann::json(strategy_name(c.train.strategy)); }},

      FA_DOUBLE("loss.lambda", train.loss.lambda),
      FA_DOUBLE("loss.beta", train.loss.beta),
      FA_DOUBLE("loss.gamma", train.loss.gamma),

      {"data.dir", [](RunConfig& c, std::string_view, std::string_view v) { c.data_dir = trim(v); },
       [](const RunConfig& c) { return nlohmann::json(c.data_dir.string()); }},
      FA_SIZE("data.val_sessions", split.val_sessions),
      FA_SIZE("data.test_sessions", split.test_sessions),

      FA_SIZE("synthetic.classes", synthetic.classes),
      FA_SIZE("synthetic.channels", synthetic.channels),
      FA_SIZE("synthetic.sessions", synthetic.sessions),
      FA_SIZE("synthetic.length", synthetic.length),
      FA_DOUBLE("synthetic.dwell_windows", synthetic.dwell_windows),
      FA_SIZE("synthetic.dwell_step", synthetic.dwell_step),
      {"synthetic.context",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synthetic.context = to_bool(k, v); },
       [](const RunConfig& c) { return nlohmann::json(c.synthetic.context); }},
      FA_DOUBLE("synthetic.noise", synthetic.noise),
      FA_DOUBLE("synthetic.sample_rate", synthetic.sample_rate),
      FA_DOUBLE("synthetic.regime_switch", synthetic.regime_switch),
  };
  return table;
}

#undef FA_SIZE
#undef FA_DOUBLE

std::string json_scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.emplace_back(f.key);
  return k;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void RunConfig::load_ini(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(path.string() + ": key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void RunConfig::load_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  for (const auto& [section, body] : j.items()) {
    if (section == "resolved") continue;
    if (!body.is_object()) throw ConfigError("run configuration section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) set(section + "." + key, json_scalar_text(value));
  }
}

RunConfig RunConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  RunConfig c;
  c.load_json(j);
  return c;
}

void RunConfig::resolve() {
  train.seed = seed;
  synthetic.seed = seed;
  if (focal_disabled) train.loss.lambda = 0.0;
  window.validate();
  model.window_len = window.window;
  model.validate();
  train.validate();
  synthetic.validate();
  if (split.val_sessions < 1) throw ConfigError("data.val_sessions must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    j[key.substr(0, dot)][key.substr(dot + 1)] = f.get(*this);
  }
  // Values derived from other settings or from the data; informational only.
  j["resolved"] = {{"window_len", model.window_len}, {"channels", model.channels}};
  return j;
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace frameattn
