// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "frameattn/tensor.hpp"

namespace frameattn {

// One continuous session: L samples x D channels plus a label per sample.
struct Recording {
  std::string session_id;
  std::size_t channels = 0;
  std::vector<double> samples;  // row-major [L x D]
  std::vector<int> labels;      // [L]
  double sample_rate = 0.0;

  std::size_t length() const { return labels.size(); }
  double at(std::size_t t, std::size_t c) const { return samples[t * channels + c]; }
};

struct LoadResult {
  std::vector<Recording> recordings;  // lexicographic by file name
  std::size_t dropped_rows = 0;       // rows with non-finite channel readings
};

// Reads every *.csv in `dir` (header `t,ch1,...,chD,label`). Rows are sorted by
// timestamp; rows with a non-finite reading are dropped and counted.
LoadResult load_recordings(const std::filesystem::path& dir);
Recording read_recording_csv(const std::filesystem::path& file, std::size_t* dropped_rows = nullptr);
void write_recording_csv(const Recording& recording, const std::filesystem::path& file);

// Per-channel population statistics of the training split.
struct NormalizerStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Channels with stddev below this are passed through untouched.
inline constexpr double kConstantChannelStd = 1e-8;

NormalizerStats fit_normalizer(std::span<const Recording> train);
Recording apply_normalizer(const Recording& recording, const NormalizerStats& stats);
Recording denormalize(const Recording& recording, const NormalizerStats& stats);

enum class LabelRule { kMajority, kLastSample };

struct WindowSpec {
  std::size_t window = 24;
  std::size_t step = 12;
  LabelRule label_rule = LabelRule::kMajority;

  void validate() const;
};

struct Frame {
  std::vector<double> data;  // [T x D]
  int label = 0;
  std::size_t chrono_index = 0;  // global rank over (session, start)
  std::size_t session = 0;       // index into FrameSet::sessions
  std::size_t start = 0;         // first sample within the session
};

// floor((L - T) / S) + 1 for L >= T, else 0.
std::size_t window_count(std::size_t length, std::size_t window, std::size_t step);

// Majority vote with ties going to the label of the window's last sample.
int window_label(std::span<const int> labels, LabelRule rule);

// Frames of one recording; chrono indices start at `first_chrono`. A recording
// shorter than the window yields no frames and appends a warning.
std::vector<Frame> sliding_window(const Recording& recording, const WindowSpec& spec, std::size_t session,
                                  std::size_t first_chrono, std::vector<std::string>* warnings = nullptr);

struct FrameSet {
  std::size_t window = 0;
  std::size_t channels = 0;
  std::vector<Frame> frames;
  std::vector<std::string> sessions;
  std::vector<std::string> warnings;

  std::size_t size() const { return frames.size(); }
  // [B x T x D] tensor of the selected frames, in the given order.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> labels(std::span<const std::size_t> indices) const;
};

// Segments recordings in order; chrono_index runs 0..N-1 over (session, start).
FrameSet segment(std::span<const Recording> recordings, const WindowSpec& spec);

}  // namespace frameattn
