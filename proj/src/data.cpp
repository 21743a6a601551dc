// SPDX-License-Identifier: Apache-2.0
#include "frameattn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "frameattn/error.hpp"

namespace frameattn {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  // from_chars rejects a leading '+'.
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

}  // namespace

Recording read_recording_csv(const fs::path& file, std::size_t* dropped_rows) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw DataError(file.string() + ": empty file");

  const auto header = split(line);
  if (header.size() < 3 || header.front() != "t" || header.back() != "label") {
    throw ParseError(where(file, 1) + ": header must be 't,ch1..chD,label', got '" + std::string(trim(line)) + "'");
  }
  const std::size_t channels = header.size() - 2;

  struct Row {
    double t;
    std::size_t order;
  };
  std::vector<Row> rows;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dropped = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw ParseError(where(file, lineno) + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    double t = 0.0;
    if (!parse_double(fields.front(), t)) throw ParseError(where(file, lineno) + ": bad timestamp '" + std::string(fields.front()) + "'");
    int label = 0;
    if (!parse_int(fields.back(), label) || label < 0) {
      throw ParseError(where(file, lineno) + ": bad label '" + std::string(fields.back()) + "'");
    }
    std::vector<double> row(channels);
    bool finite = std::isfinite(t);
    for (std::size_t c = 0; c < channels; ++c) {
      if (!parse_double(fields[c + 1], row[c])) {
        throw ParseError(where(file, lineno) + ": bad value '" + std::string(fields[c + 1]) + "'");
      }
      finite = finite && std::isfinite(row[c]);
    }
    if (!finite) {
      ++dropped;
      continue;
    }
    rows.push_back({t, rows.size()});
    values.insert(values.end(), row.begin(), row.end());
    labels.push_back(label);
  }
  if (rows.empty()) throw DataError(file.string() + ": no samples");

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&rows](std::size_t a, std::size_t b) { return rows[a].t < rows[b].t; });

  Recording rec;
  rec.session_id = file.stem().string();
  rec.channels = channels;
  rec.samples.reserve(values.size());
  rec.labels.reserve(labels.size());
  for (std::size_t i : order) {
    rec.samples.insert(rec.samples.end(), values.begin() + static_cast<std::ptrdiff_t>(i * channels),
                       values.begin() + static_cast<std::ptrdiff_t>((i + 1) * channels));
    rec.labels.push_back(labels[i]);
  }
  if (order.size() > 1) {
    std::vector<double> dts;
    for (std::size_t i = 1; i < order.size(); ++i) dts.push_back(rows[order[i]].t - rows[order[i - 1]].t);
    std::nth_element(dts.begin(), dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2), dts.end());
    const double dt = dts[dts.size() / 2];
    rec.sample_rate = dt > 0.0 ? 1.0 / dt : 0.0;
  }
  if (dropped_rows) *dropped_rows = dropped;
  return rec;
}

LoadResult load_recordings(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (files.empty()) throw DataError("no .csv sessions in " + dir.string());
  LoadResult result;
  for (const auto& f : files) {
    std::size_t dropped = 0;
    result.recordings.push_back(read_recording_csv(f, &dropped));
    result.dropped_rows += dropped;
  }
  const std::size_t d = result.recordings.front().channels;
  for (const auto& r : result.recordings) {
    if (r.channels != d) {
      throw DataError("session " + r.session_id + " has " + std::to_string(r.channels) + " channels, expected " +
                      std::to_string(d));
    }
  }
  return result;
}

void write_recording_csv(const Recording& recording, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "t";
  for (std::size_t c = 0; c < recording.channels; ++c) out << ",ch" << (c + 1);
  out << ",label\n";
  const double rate = recording.sample_rate > 0.0 ? recording.sample_rate : 1.0;
  char buf[64];
  for (std::size_t t = 0; t < recording.length(); ++t) {
    std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(t) / rate);
    out << buf;
    for (std::size_t c = 0; c < recording.channels; ++c) {
      std::snprintf(buf, sizeof buf, ",%.9g", recording.at(t, c));
      out << buf;
    }
    out << ',' << recording.labels[t] << '\n';
  }
  if (!out) throw IoError("failed writing " + file.string());
}

NormalizerStats fit_normalizer(std::span<const Recording> train) {
  if (train.empty()) throw DataError("normalizer: no training recordings");
  const std::size_t d = train.front().channels;
  NormalizerStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  std::size_t n = 0;
  for (const auto& r : train) {
    for (std::size_t t = 0; t < r.length(); ++t)
      for (std::size_t c = 0; c < d; ++c) s.mean[c] += r.at(t, c);
    n += r.length();
  }
  if (n == 0) throw DataError("normalizer: training recordings are empty");
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (const auto& r : train) {
    for (std::size_t t = 0; t < r.length(); ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        const double dv = r.at(t, c) - s.mean[c];
        s.stddev[c] += dv * dv;
      }
    }
  }
  for (double& v : s.stddev) v = std::sqrt(v / static_cast<double>(n));
  return s;
}

Recording apply_normalizer(const Recording& recording, const NormalizerStats& stats) {
  if (stats.mean.size() != recording.channels) throw DataError("normalizer channel count mismatch");
  Recording out = recording;
  for (std::size_t t = 0; t < out.length(); ++t) {
    for (std::size_t c = 0; c < out.channels; ++c) {
      if (stats.stddev[c] < kConstantChannelStd) continue;
      double& v = out.samples[t * out.channels + c];
      v = (v - stats.mean[c]) / stats.stddev[c];
    }
  }
  return out;
}

Recording denormalize(const Recording& recording, const NormalizerStats& stats) {
  if (stats.mean.size() != recording.channels) throw DataError("normalizer channel count mismatch");
  Recording out = recording;
  for (std::size_t t = 0; t < out.length(); ++t) {
    for (std::size_t c = 0; c < out.channels; ++c) {
      if (stats.stddev[c] < kConstantChannelStd) continue;
      double& v = out.samples[t * out.channels + c];
      v = v * stats.stddev[c] + stats.mean[c];
    }
  }
  return out;
}

void WindowSpec::validate() const {
  if (window == 0) throw ConfigError("window: size must be positive");
  if (step < 1 || step > window) {
    throw ConfigError("window: step must satisfy 1 <= step <= window, got step " + std::to_string(step) +
                      " for window " + std::to_string(window));
  }
}

std::size_t window_count(std::size_t length, std::size_t window, std::size_t step) {
  if (length < window || step == 0) return 0;
  return (length - window) / step + 1;
}

int window_label(std::span<const int> labels, LabelRule rule) {
  if (labels.empty()) throw ContractError("window_label: empty window");
  const int last = labels.back();
  if (rule == LabelRule::kLastSample) return last;
  std::map<int, std::size_t> counts;
  std::size_t top = 0;
  for (int l : labels) top = std::max(top, ++counts[l]);
  // Among tied labels, the one occurring latest in the window wins.
  for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
    if (counts[*it] == top) return *it;
  }
  return last;
}

std::vector<Frame> sliding_window(const Recording& recording, const WindowSpec& spec, std::size_t session,
                                  std::size_t first_chrono, std::vector<std::string>* warnings) {
  spec.validate();
  const std::size_t count = window_count(recording.length(), spec.window, spec.step);
  if (count == 0) {
    if (warnings) {
      warnings->push_back("session " + recording.session_id + ": length " + std::to_string(recording.length()) +
                          " shorter than window " + std::to_string(spec.window) + "; no frames");
    }
    return {};
  }
  std::vector<Frame> frames;
  frames.reserve(count);
  const std::size_t d = recording.channels;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * spec.step;
    Frame f;
    f.data.assign(recording.samples.begin() + static_cast<std::ptrdiff_t>(start * d),
                  recording.samples.begin() + static_cast<std::ptrdiff_t>((start + spec.window) * d));
    f.label = window_label(std::span(recording.labels).subspan(start, spec.window), spec.label_rule);
    f.chrono_index = first_chrono + i;
    f.session = session;
    f.start = start;
    frames.push_back(std::move(f));
  }
  return frames;
}

FrameSet segment(std::span<const Recording> recordings, const WindowSpec& spec) {
  spec.validate();
  FrameSet set;
  set.window = spec.window;
  set.channels = recordings.empty() ? 0 : recordings.front().channels;
  for (std::size_t s = 0; s < recordings.size(); ++s) {
    if (recordings[s].channels != set.channels) throw DataError("segment: sessions disagree on channel count");
    set.sessions.push_back(recordings[s].session_id);
    auto frames = sliding_window(recordings[s], spec, s, set.frames.size(), &set.warnings);
    std::move(frames.begin(), frames.end(), std::back_inserter(set.frames));
  }
  return set;
}

Tensor FrameSet::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("FrameSet::batch: empty batch");
  const std::size_t per = window * channels;
  std::vector<double> data;
  data.reserve(indices.size() * per);
  for (std::size_t i : indices) {
    const auto& f = frames.at(i);
    data.insert(data.end(), f.data.begin(), f.data.end());
  }
  return Tensor({indices.size(), window, channels}, std::move(data));
}

std::vector<int> FrameSet::labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(frames.at(i).label);
  return out;
}

}  // namespace frameattn
