// SPDX-License-Identifier: Apache-2.0
#include "frameattn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "frameattn/error.hpp"
#include "frameattn/rng.hpp"

namespace frameattn {
namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synthetic: " + m); };
  if (classes < 2) fail("classes must be >= 2, got " + std::to_string(classes));
  if (channels < 1) fail("channels must be >= 1");
  if (sessions < 1) fail("sessions must be >= 1");
  if (length < 1) fail("length must be >= 1");
  if (!(dwell_windows >= 3.0)) fail("mean dwell must be >= 3 windows");
  if (dwell_step < 1) fail("dwell_step must be >= 1");
  if (!(noise >= 0.0)) fail("noise must be non-negative");
  if (!(sample_rate > 0.0)) fail("sample_rate must be positive");
  if (!(regime_switch > 0.0 && regime_switch <= 0.5)) fail("regime_switch must lie in (0, 0.5]");
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"classes", classes},       {"channels", channels},       {"sessions", sessions},
          {"length", length},         {"dwell_windows", dwell_windows}, {"dwell_step", dwell_step},
          {"context", context},       {"noise", noise},             {"sample_rate", sample_rate},
          {"regime_switch", regime_switch}, {"seed", seed}};
}

std::vector<int> class_regimes(std::size_t classes) {
  std::vector<int> r(classes, 2);
  r[0] = 0;
  if (classes > 1) r[1] = 1;
  for (std::size_t c = 2; c + 1 < classes; c += 2) {
    r[c] = 0;
    r[c + 1] = 1;
  }
  return r;
}

std::size_t emitted_class(std::size_t k, const SyntheticConfig& config) {
  if (!config.context || k < 2) return k;
  const auto regimes = class_regimes(config.classes);
  if (regimes[k] == 1) return k - 1;
  return k;
}

std::vector<ClassSignature> class_signatures(const SyntheticConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, stream_id("signatures")));
  const std::size_t d = config.channels;
  std::vector<ClassSignature> sig(config.classes);
  std::vector<std::vector<double>> placed;
  for (std::size_t k = 0; k < config.classes; ++k) {
    ClassSignature& s = sig[k];
    // Rejection-sample offsets so that distinct signatures stay well apart.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      s.offset.assign(d, 0.0);
      for (double& o : s.offset) o = rng.uniform(-1.5, 1.5);
      const bool far = std::all_of(placed.begin(), placed.end(), [&s](const std::vector<double>& p) {
        double dist = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) dist += (p[c] - s.offset[c]) * (p[c] - s.offset[c]);
        return std::sqrt(dist) >= 1.0;
      });
      if (far) break;
    }
    placed.push_back(s.offset);
    s.amplitude.resize(d);
    s.frequency.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
      s.amplitude[c] = rng.uniform(0.3, 1.0);
      s.frequency[c] = rng.uniform(0.3, 3.0);
    }
  }
  return sig;
}

namespace {

std::vector<std::size_t> regime_members(const std::vector<int>& regimes, int regime) {
  std::vector<std::size_t> m;
  for (std::size_t c = 0; c < regimes.size(); ++c) {
    if (regimes[c] == regime || regimes[c] == 2) m.push_back(c);
  }
  return m;
}

constexpr int kCoverageAttempts = 64;

}  // namespace

std::vector<Recording> generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const auto signatures = class_signatures(config);
  const auto regimes = class_regimes(config.classes);
  const std::vector<std::size_t> members[2] = {regime_members(regimes, 0), regime_members(regimes, 1)};
  const double switch_prob[2] = {config.regime_switch, std::min(1.0, 2.0 * config.regime_switch)};
  const std::size_t d = config.channels;

  std::vector<Recording> out;
  for (std::size_t s = 0; s < config.sessions; ++s) {
    Rng rng(derive_seed(config.seed, 1000 + s));
    char name[32];
    std::snprintf(name, sizeof name, "session_%02zu", s);
    Recording rec;
    // Redraw (continuing the same stream) until every class occurs; sessions
    // too short for that keep the last draw.
    for (int attempt = 0; attempt < kCoverageAttempts; ++attempt) {
      rec = Recording{};
      rec.session_id = name;
      rec.channels = d;
      rec.sample_rate = config.sample_rate;
      rec.samples.reserve(config.length * d);
      rec.labels.reserve(config.length);

      // Start in A with probability 2/3, the stationary share of regime A.
      int regime = rng.uniform() < 2.0 / 3.0 ? 0 : 1;
      std::size_t activity = members[regime][rng.below(members[regime].size())];
      std::size_t t = 0;
      while (t < config.length) {
        const double span = config.dwell_windows * static_cast<double>(config.dwell_step) * rng.uniform(0.5, 1.5);
        const std::size_t dur = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(span)));
        const ClassSignature& sig = signatures[emitted_class(activity, config)];
        std::vector<double> phase(d);
        for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < dur && t < config.length; ++i, ++t) {
          const double time = static_cast<double>(i) / config.sample_rate;
          for (std::size_t c = 0; c < d; ++c) {
            const double wave = std::sin(2.0 * std::numbers::pi * sig.frequency[c] * time + phase[c]);
            rec.samples.push_back(sig.offset[c] + sig.amplitude[c] * wave + config.noise * rng.normal());
          }
          rec.labels.push_back(static_cast<int>(activity));
        }

        // Next activity.
        std::vector<std::size_t> options;
        for (std::size_t m : members[regime]) {
          if (m != activity) options.push_back(m);
        }
        if (options.empty() || rng.uniform() < switch_prob[regime]) {
          regime = 1 - regime;
          activity = static_cast<std::size_t>(regime);  // the other regime's anchor
        } else {
          activity = options[rng.below(options.size())];
        }
      }
      std::vector<bool> seen(config.classes, false);
      for (int l : rec.labels) seen[static_cast<std::size_t>(l)] = true;
      if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) break;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_synthetic_dataset(const std::vector<Recording>& recordings, const SyntheticConfig& config,
                             const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  nlohmann::json files = nlohmann::json::array();
  for (const auto& r : recordings) {
    const fs::path file = dir / (r.session_id + ".csv");
    write_recording_csv(r, file);
    files.push_back(file.filename().string());
  }
  nlohmann::json manifest = {{"generator", "frameattn-synthetic"},
                             {"seed", config.seed},
                             {"config", config.to_json()},
                             {"sessions", files}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

}  // namespace frameattn
