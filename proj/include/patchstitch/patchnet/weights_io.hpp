// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// STNW weights container, all integers little-endian:
//
//   "STNW"  u32 version  u32 tensor_count
//   per tensor: u16 name_length, name (UTF-8), u8 rank, u32 dims[rank],
//               float32 values[prod(dims)]
//
// Besides the network tensors a file carries "meta.config" (n_heads, k_graph,
// attention scale, dropout, leaky slope, bn momentum, bn eps) and, for
// training checkpoints, "optim.step" and "optim.m/<name>", "optim.v/<name>".

#ifndef PATCHSTITCH_PATCHNET_WEIGHTS_IO_HPP
#define PATCHSTITCH_PATCHNET_WEIGHTS_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/patchnet/params.hpp"
#include "patchstitch/patchnet/train.hpp"

namespace patchstitch::net {

inline constexpr char kWeightsMagic[4] = {'S', 'T', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what + " (at byte " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated weights file");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<char>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline NamedTensor named(const std::string& name, const std::vector<std::size_t>& shape, const std::vector<double>& data) {
  NamedTensor t;
  t.name = name;
  for (auto d : shape) t.dims.push_back(static_cast<std::uint32_t>(d));
  t.values.assign(data.begin(), data.end());
  return t;
}

}  // namespace detail

inline std::vector<char> encode_weights(const std::vector<NamedTensor>& tensors) {
  detail::ByteWriter w;
  w.raw(std::string(kWeightsMagic, 4));
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw ConfigError("tensor name too long: " + t.name);
    if (t.dims.size() > 0xff) throw ConfigError("tensor rank too large: " + t.name);
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    std::size_t count = 1;
    for (auto d : t.dims) {
      w.u32(d);
      count *= d;
    }
    if (count != t.values.size()) throw ConfigError("tensor " + t.name + " has inconsistent size");
    for (float v : t.values) w.f32(v);
  }
  return w.bytes();
}

inline std::vector<NamedTensor> decode_weights(const std::vector<char>& bytes, const std::string& source = "weights") {
  detail::ByteReader r(bytes, source);
  if (r.raw(4) != std::string(kWeightsMagic, 4)) r.fail("not an STNW file (bad magic)");
  const auto version = r.u32();
  if (version != kWeightsVersion) r.fail("unsupported STNW version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.raw(r.u16());
    const auto rank = r.u8();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    if (n * 4 > r.remaining()) r.fail("tensor " + t.name + " extends past end of file");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32();
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after last tensor");
  return out;
}

inline std::vector<NamedTensor> to_named_tensors(const NetworkParams& params, const AdamState* optimizer = nullptr) {
  std::vector<NamedTensor> out;
  const auto& c = params.config;
  out.push_back(detail::named("meta.config", {7},
                              {static_cast<double>(c.n_heads), static_cast<double>(c.k_graph),
                               static_cast<double>(c.attention_scale), c.dropout, c.leaky_slope, c.bn_momentum,
                               c.bn_eps}));
  for (const auto& [name, t] : params.tensors()) out.push_back(detail::named(name, t.shape, t.data));
  if (optimizer) {
    out.push_back(detail::named("optim.step", {1}, {static_cast<double>(optimizer->step)}));
    for (const auto& [name, t] : params.tensors()) {
      if (NetworkParams::is_buffer(name)) continue;
      auto pick = [&](const std::map<std::string, std::vector<double>>& src) {
        auto it = src.find(name);
        return it == src.end() ? std::vector<double>(t.size(), 0.0) : it->second;
      };
      out.push_back(detail::named("optim.m/" + name, t.shape, pick(optimizer->m)));
      out.push_back(detail::named("optim.v/" + name, t.shape, pick(optimizer->v)));
    }
  }
  return out;
}

struct LoadedWeights {
  NetworkParams params;
  std::optional<AdamState> optimizer;
};

/// Rebuilds parameters from decoded tensors; every network tensor must be
/// present with the expected shape.
inline LoadedWeights from_named_tensors(const std::vector<NamedTensor>& tensors, const std::string& source = "weights") {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto require = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError(source + ": missing required tensor " + name);
    return *it->second;
  };

  const auto& meta = require("meta.config");
  if (meta.values.size() != 7) throw DataError(source + ": meta.config must hold 7 values");
  NetworkConfig cfg;
  cfg.n_heads = static_cast<std::size_t>(meta.values[0]);
  cfg.k_graph = static_cast<std::size_t>(meta.values[1]);
  cfg.attention_scale = static_cast<AttentionScale>(static_cast<int>(meta.values[2]));
  cfg.dropout = meta.values[3];
  cfg.leaky_slope = meta.values[4];
  cfg.bn_momentum = meta.values[5];
  cfg.bn_eps = meta.values[6];
  const auto& conv1 = require("qst.conv1.weight");
  const auto& conv2 = require("qst.conv2.weight");
  const auto& fc1 = require("qst.fc1.weight");
  if (conv1.dims.size() != 2 || conv2.dims.size() != 2 || fc1.dims.size() != 2)
    throw DataError(source + ": QST weights must be matrices");
  cfg.qst_width1 = conv1.dims[1];
  cfg.qst_width2 = conv2.dims[1];
  cfg.qst_hidden = fc1.dims[1];
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw DataError(source + ": " + e.what());
  }

  LoadedWeights out{NetworkParams::layout(cfg), std::nullopt};
  for (auto& [name, t] : out.params.tensors()) {
    const auto& src = require(name);
    std::vector<std::size_t> shape(src.dims.begin(), src.dims.end());
    if (shape != t.shape) throw DataError(source + ": tensor " + name + " has unexpected shape");
    t.data.assign(src.values.begin(), src.values.end());
  }
  if (by_name.count("optim.step")) {
    AdamState st;
    st.step = static_cast<std::size_t>(require("optim.step").values.at(0));
    for (const auto& [name, t] : out.params.tensors()) {
      if (NetworkParams::is_buffer(name)) continue;
      const auto& m = require("optim.m/" + name);
      const auto& v = require("optim.v/" + name);
      if (m.values.size() != t.size() || v.values.size() != t.size())
        throw DataError(source + ": optimizer state for " + name + " has unexpected size");
      st.m[name].assign(m.values.begin(), m.values.end());
      st.v[name].assign(v.values.begin(), v.values.end());
    }
    out.optimizer = std::move(st);
  }
  return out;
}

inline void save_weights(const std::filesystem::path& path, const NetworkParams& params,
                         const AdamState* optimizer = nullptr) {
  const auto bytes = encode_weights(to_named_tensors(params, optimizer));
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline LoadedWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weights file " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_named_tensors(decode_weights(bytes, path.string()), path.string());
}

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_WEIGHTS_IO_HPP
