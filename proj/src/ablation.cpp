// SPDX-License-Identifier: Apache-2.0
#include "frameattn/ablation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "frameattn/error.hpp"

namespace frameattn {

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> v = {
      {"baseline", "intra,inter,pe,moe,gate,focal"},
      {"intra", "inter,pe,moe,gate,focal"},
      {"inter", "intra,moe,gate,focal"},
      {"intra+inter", "moe,gate,focal"},
      {"full", ""},
      {"isolated", "inter,pe,gate"},
  };
  return v;
}

const AblationVariant& find_variant(std::string_view name) {
  for (const auto& v : ablation_variants()) {
    if (v.name == name) return v;
  }
  std::string known;
  for (const auto& v : ablation_variants()) known += (known.empty() ? "" : ", ") + v.name;
  throw ConfigError("unknown ablation variant '" + std::string(name) + "' (known: " + known + ")");
}

void AblationGrid::validate() const {
  if (strategies.empty() || batch_sizes.empty() || variants.empty()) throw ConfigError("ablation grid is empty");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  for (std::size_t b : batch_sizes) {
    if (b < 1) throw ConfigError("ablation batch sizes must be >= 1");
  }
  for (const auto& v : variants) find_variant(v);
}

std::vector<AblationCell> run_ablation(const RunConfig& base, std::span<const Recording> recordings,
                                       const AblationGrid& grid, const std::function<void(const std::string&)>& log) {
  grid.validate();
  RunConfig resolved = base;
  resolved.resolve();
  const DataSplits data = make_splits(recordings, resolved.window, resolved.split);

  std::vector<AblationCell> cells;
  for (Strategy strategy : grid.strategies) {
    for (std::size_t batch_size : grid.batch_sizes) {
      for (const auto& name : grid.variants) {
        const AblationVariant& variant = find_variant(name);
        AblationCell cell;
        cell.strategy = strategy;
        cell.batch_size = batch_size;
        cell.variant = variant.name;
        cell.disable = variant.disable;
        const auto start = std::chrono::steady_clock::now();
        try {
          RunConfig rc = base;
          rc.set("model.disable", variant.disable);
          if (base.focal_disabled && !rc.focal_disabled) rc.train.loss.lambda = LossConfig{}.lambda;
          rc.train.strategy = strategy;
          rc.train.batch_size = batch_size;
          rc.model.channels = data.train.channels;
          for (std::uint64_t seed : grid.seeds) {
            rc.seed = seed;
            rc.resolve();
            const TrainResult r = train(rc.model, data, rc.train);
            cell.test_f1.push_back(r.test.mean_f1);
            if (log) {
              char buf[160];
              std::snprintf(buf, sizeof buf, "  %s / B=%zu / %s / seed %llu: test mean F1 %.4f (best epoch %zu)",
                            std::string(strategy_name(strategy)).c_str(), batch_size, variant.name.c_str(),
                            static_cast<unsigned long long>(seed), r.test.mean_f1, r.best_epoch);
              log(buf);
            }
          }
          double sum = 0.0;
          for (double f : cell.test_f1) sum += f;
          cell.mean_f1 = sum / static_cast<double>(cell.test_f1.size());
          double sq = 0.0;
          for (double f : cell.test_f1) sq += (f - cell.mean_f1) * (f - cell.mean_f1);
          cell.std_f1 = cell.test_f1.size() > 1 ? std::sqrt(sq / static_cast<double>(cell.test_f1.size() - 1)) : 0.0;
        } catch (const Error& e) {
          cell.ok = false;
          cell.error = e.what();
          if (log) log("  cell failed: " + cell.error);
        }
        cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string disabled_field(std::string d) {
  if (d.empty()) return "none";
  for (char& c : d) {
    if (c == ',') c = ';';
  }
  return d;
}

}  // namespace

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationCell> cells) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "strategy,batch_size,variant,disabled,seeds,mean_f1,std_f1,per_seed_f1,status\n";
  char num[64];
  for (const auto& c : cells) {
    std::string per_seed;
    for (double f : c.test_f1) {
      std::snprintf(num, sizeof num, "%.6f", f);
      per_seed += (per_seed.empty() ? "" : ";") + std::string(num);
    }
    out << strategy_name(c.strategy) << ',' << c.batch_size << ',' << csv_field(c.variant) << ','
        << disabled_field(c.disable) << ',' << c.test_f1.size() << ',';
    if (c.ok) {
      std::snprintf(num, sizeof num, "%.6f,", c.mean_f1);
      out << num;
      std::snprintf(num, sizeof num, "%.6f,", c.std_f1);
      out << num;
    } else {
      out << ",,";
    }
    out << per_seed << ',' << (c.ok ? std::string("ok") : csv_field("failed: " + c.error)) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace frameattn
