// SPDX-License-Identifier: Apache-2.0
#include "frameattn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "frameattn/error.hpp"

namespace frameattn {
namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string file) : buf_(buf), file_(std::move(file)) {}

  template <typename T>
  T get(const std::string& what) {
    if (buf_.size() - pos_ < sizeof(T)) fail("truncated while reading " + what);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string bytes(std::size_t n, const std::string& what) {
    if (buf_.size() - pos_ < n) fail("truncated while reading " + what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

  [[noreturn]] void fail(const std::string& m) const { throw FormatError(file_ + ": " + m); }

 private:
  const std::string& buf_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const fs::path& path, std::span<const CheckpointRecord> records) {
  std::string out = std::string(kCheckpointMagic) + "\n";
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.tensor.rank()));
    for (std::size_t e : r.tensor.shape()) put<std::uint64_t>(out, e);
    for (double v : r.tensor.data()) put<double>(out, v);
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(buf, path.string());

  const auto newline = buf.find('\n');
  const std::string header = buf.substr(0, newline == std::string::npos ? std::min<std::size_t>(buf.size(), 32) : newline);
  if (header != kCheckpointMagic) {
    if (header.rfind("FRAMEATTN v", 0) == 0) {
      throw IncompatibleVersionError(path.string() + ": checkpoint version '" + header.substr(10) +
                                     "' is not supported (expected v1)");
    }
    in.fail("not a frameattn checkpoint (bad header)");
  }
  in.skip(newline + 1);

  const auto count = in.get<std::uint32_t>("record count");
  std::vector<CheckpointRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "record " + std::to_string(i);
    const auto name_len = in.get<std::uint32_t>(where + " name length");
    if (name_len == 0 || name_len > 4096) in.fail(where + ": implausible name length " + std::to_string(name_len));
    std::string name = in.bytes(name_len, where + " name");
    const std::string rec = "record '" + name + "'";
    const auto rank = in.get<std::uint32_t>(rec + " rank");
    if (rank == 0 || rank > 8) in.fail(rec + ": invalid rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      const auto e = in.get<std::uint64_t>(rec + " extents");
      if (e == 0 || e > (std::uint64_t{1} << 32)) in.fail(rec + ": invalid extent " + std::to_string(e));
      n *= e;
      if (n > (std::uint64_t{1} << 32)) in.fail(rec + ": tensor too large");
      shape.push_back(static_cast<std::size_t>(e));
    }
    if (in.remaining() / sizeof(double) < n) in.fail("truncated payload in " + rec);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = in.get<double>(rec + " payload");
    records.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (in.remaining() != 0) in.fail(std::to_string(in.remaining()) + " trailing bytes after the last record");
  return records;
}

void save_model(const fs::path& path, const ModelParams& params, const NormalizerStats* stats) {
  std::vector<CheckpointRecord> records;
  for (const auto& p : params.named()) records.push_back({p.name, p.tensor});
  if (stats != nullptr) {
    records.push_back({"norm.mean", Tensor({stats->mean.size()}, stats->mean)});
    records.push_back({"norm.std", Tensor({stats->stddev.size()}, stats->stddev)});
  }
  write_checkpoint(path, records);
}

std::size_t checkpoint_classes(std::span<const CheckpointRecord> records) {
  for (const auto& r : records) {
    if (r.name == "classifier.bias") return r.tensor.numel();
  }
  throw FormatError("checkpoint has no classifier.bias record");
}

ModelParams load_model(const fs::path& path, const ModelConfig& config, NormalizerStats* stats) {
  const auto records = read_checkpoint(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r.tensor).second) throw FormatError(path.string() + ": duplicate record '" + r.name + "'");
  }

  const std::size_t classes = checkpoint_classes(records);
  if (classes != config.classes) {
    throw ConfigError("class count mismatch: checkpoint has C=" + std::to_string(classes) + ", configuration has C=" +
                      std::to_string(config.classes));
  }

  // Validate everything against a freshly laid-out model before copying.
  ModelParams params = ModelParams::init(config, 0);
  const auto expected = params.named();
  for (const auto& p : expected) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing tensor '" + p.name + "' required by the model");
    if (it->second->shape() != p.tensor.shape()) {
      throw ConfigError("tensor '" + p.name + "': checkpoint shape " + shape_str(it->second->shape()) +
                        ", model expects " + shape_str(p.tensor.shape()));
    }
  }
  const std::size_t extra = records.size() - expected.size();
  const bool has_norm = by_name.count("norm.mean") && by_name.count("norm.std");
  if (extra != (has_norm ? 2u : 0u)) {
    for (const auto& r : records) {
      bool known = r.name == "norm.mean" || r.name == "norm.std";
      for (const auto& p : expected) known = known || p.name == r.name;
      if (!known) throw ConfigError("checkpoint tensor '" + r.name + "' does not belong to the configured model");
    }
  }
  if (has_norm && by_name["norm.mean"]->numel() != by_name["norm.std"]->numel()) {
    throw FormatError(path.string() + ": normalizer mean/std lengths differ");
  }

  for (const auto& p : expected) {
    Tensor dst = p.tensor;
    const auto src = by_name[p.name]->data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
  if (stats != nullptr) {
    *stats = {};
    if (has_norm) {
      const auto m = by_name["norm.mean"]->data();
      const auto s = by_name["norm.std"]->data();
      stats->mean.assign(m.begin(), m.end());
      stats->stddev.assign(s.begin(), s.end());
    }
  }
  return params;
}

}  // namespace frameattn
