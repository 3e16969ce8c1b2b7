// Copyright 2026 The bifsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string_view>
#include <vector>

#include "bifsnn/core.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/network.hpp"

namespace bifsnn {

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr char kCheckpointMagic[8] = {'B', 'I', 'F', 'S', 'N', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A trained network together with the grid it was trained on and the hash
/// of the configuration that produced it. Layout: docs/checkpoint.md.
struct Checkpoint {
  Network net;
  TimeGrid grid;
  std::uint64_t config_hash = 0;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
  }
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p_ + at_, n);
    at_ += n;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::size_t remaining() const { return n_ - at_; }

 private:
  void need(std::size_t n) const {
    require(n <= n_ - at_, ErrorKind::TruncatedFile, "checkpoint truncated");
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(p_[at_ + i]) << (8 * i);
    }
    at_ += sizeof(U);
    return v;
  }
  const unsigned char* p_;
  std::size_t n_;
  std::size_t at_ = 0;
};

inline std::uint64_t checksum(const unsigned char* p, std::size_t n) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(p), n));
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(ck.config_hash);
  w.f64(ck.grid.duration);
  w.f64(ck.grid.dt);
  w.u64(ck.grid.steps);
  w.u32(static_cast<std::uint32_t>(ck.net.layers.size()));
  for (const auto& layer : ck.net.layers) {
    w.u64(layer.n_out());
    w.u64(layer.n_in());
    const auto& p = layer.neuron;
    for (double v : {p.gamma, p.R, p.tau_m, p.u_rest, p.u_firing, p.refractory,
                     layer.tau_s}) {
      w.f64(v);
    }
    for (double v : layer.W.data()) w.f64(v);
    for (double v : p.lambda.data()) w.f64(v);
  }
  auto& b = w.bytes();
  const std::uint64_t sum = detail::checksum(b.data(), b.size());
  w.u64(sum);
  return std::move(b);
}

inline Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= sizeof kCheckpointMagic + 8, ErrorKind::TruncatedFile,
          "checkpoint truncated");
  require(std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) == 0,
          ErrorKind::BadMagic, "not a checkpoint file");
  const std::size_t body = bytes.size() - 8;
  detail::ByteReader tail(bytes.data() + body, 8);
  require(tail.u64() == detail::checksum(bytes.data(), body), ErrorKind::BadFormat,
          "checkpoint checksum mismatch");

  detail::ByteReader r(bytes.data(), body);
  char magic[8];
  r.raw(magic, sizeof magic);
  require(r.u32() == kCheckpointVersion, ErrorKind::BadFormat,
          "unsupported checkpoint version");
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.grid.duration = r.f64();
  ck.grid.dt = r.f64();
  ck.grid.steps = r.u64();
  const std::uint32_t layers = r.u32();
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint64_t n_out = r.u64(), n_in = r.u64();
    require(n_out <= (1u << 24) && n_in <= (1u << 24) &&
                (n_out * n_in + n_out * n_out) * 8 <= r.remaining(),
            ErrorKind::TruncatedFile, "checkpoint layer payload truncated");
    Layer layer;
    auto& p = layer.neuron;
    p.gamma = r.f64();
    p.R = r.f64();
    p.tau_m = r.f64();
    p.u_rest = r.f64();
    p.u_firing = r.f64();
    p.refractory = r.f64();
    layer.tau_s = r.f64();
    layer.W = Matrix(n_out, n_in);
    for (double& v : layer.W.data()) v = r.f64();
    p.lambda = Matrix(n_out, n_out);
    for (double& v : p.lambda.data()) v = r.f64();
    ck.net.layers.push_back(std::move(layer));
  }
  require(r.remaining() == 0, ErrorKind::BadFormat, "trailing checkpoint bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace bifsnn
