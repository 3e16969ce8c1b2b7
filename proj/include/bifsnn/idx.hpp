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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bifsnn/encoding.hpp"
#include "bifsnn/error.hpp"

namespace bifsnn {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io,
          "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b,
                               std::size_t at) {
  require(at + 4 <= b.size(), ErrorKind::TruncatedFile, "IDX header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline void append_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v >> 24));
  b.push_back(static_cast<unsigned char>(v >> 16));
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}

}  // namespace detail

/// Parses IDX image bytes: big-endian magic 0x803, count, rows, cols, then
/// row-major unsigned bytes scaled by 1/255. `limit` caps how many images
/// are decoded (0 means all).
inline std::vector<Image> parse_idx_images(const std::vector<unsigned char>& bytes,
                                           std::size_t limit = 0) {
  require(detail::read_be32(bytes, 0) == kIdxImageMagic, ErrorKind::BadMagic,
          "not an IDX image file");
  const std::uint64_t count = detail::read_be32(bytes, 4);
  const std::uint64_t rows = detail::read_be32(bytes, 8);
  const std::uint64_t cols = detail::read_be32(bytes, 12);
  // Guard the product before it is used for sizes.
  require(rows <= 1u << 16 && cols <= 1u << 16 && rows * cols <= (1u << 24),
          ErrorKind::DimensionOverflow, "IDX image dimensions too large");
  const std::uint64_t pixels = rows * cols;
  require(count == 0 || pixels <= (std::uint64_t{1} << 40) / count,
          ErrorKind::DimensionOverflow, "IDX payload size overflows");
  require(16 + count * pixels <= bytes.size(), ErrorKind::TruncatedFile,
          "IDX image payload truncated");
  const std::size_t n =
      limit == 0 ? count : std::min<std::size_t>(limit, count);
  std::vector<Image> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> px(pixels);
    const unsigned char* src = bytes.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) px[p] = src[p] / 255.0;
    out.emplace_back(rows, cols, std::move(px));
  }
  return out;
}

inline std::vector<std::size_t> parse_idx_labels(const std::vector<unsigned char>& bytes,
                                                 std::size_t limit = 0) {
  require(detail::read_be32(bytes, 0) == kIdxLabelMagic, ErrorKind::BadMagic,
          "not an IDX label file");
  const std::uint64_t count = detail::read_be32(bytes, 4);
  require(8 + count <= bytes.size(), ErrorKind::TruncatedFile,
          "IDX label payload truncated");
  const std::size_t n =
      limit == 0 ? count : std::min<std::size_t>(limit, count);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = bytes[8 + i];
  return out;
}

inline std::vector<Image> load_idx_images(const std::filesystem::path& path,
                                          std::size_t limit = 0) {
  return parse_idx_images(detail::read_all_bytes(path), limit);
}

inline std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path,
                                                std::size_t limit = 0) {
  return parse_idx_labels(detail::read_all_bytes(path), limit);
}

/// Images and labels must pair up one to one.
inline void check_idx_pair(const std::vector<Image>& images,
                           const std::vector<std::size_t>& labels) {
  require(images.size() == labels.size(), ErrorKind::CountMismatch,
          "image count " + std::to_string(images.size()) + " != label count " +
              std::to_string(labels.size()));
}

/// Serializes images back to IDX bytes (pixels rounded to the nearest byte).
inline std::vector<unsigned char> encode_idx_images(const std::vector<Image>& images) {
  std::vector<unsigned char> b;
  const std::size_t rows = images.empty() ? 0 : images.front().height;
  const std::size_t cols = images.empty() ? 0 : images.front().width;
  detail::append_be32(b, kIdxImageMagic);
  detail::append_be32(b, static_cast<std::uint32_t>(images.size()));
  detail::append_be32(b, static_cast<std::uint32_t>(rows));
  detail::append_be32(b, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    require(img.height == rows && img.width == cols,
            ErrorKind::ShapeMismatch, "images differ in shape");
    for (double v : img.pixels) {
      b.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  return b;
}

inline std::vector<unsigned char> encode_idx_labels(const std::vector<std::size_t>& labels) {
  std::vector<unsigned char> b;
  detail::append_be32(b, kIdxLabelMagic);
  detail::append_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) {
    require(l < 256, ErrorKind::BadFormat, "label does not fit a byte");
    b.push_back(static_cast<unsigned char>(l));
  }
  return b;
}

}  // namespace bifsnn
