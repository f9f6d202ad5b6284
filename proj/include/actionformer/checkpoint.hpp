// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_CHECKPOINT_HPP
#define ACTIONFORMER_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "actionformer/error.hpp"
#include "actionformer/tensor.hpp"

// Checkpoint layout (all integers little-endian):
//   "AFCK" | u32 version | u32 count |
//   count x ( u16 name_len | name bytes | u8 dtype | u8 rank | rank x u32 dim | values )
// dtype 0 = f32, 1 = f64.

namespace actionformer {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One tensor as stored on disk. Values are kept in their stored precision.
struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<float> f32;
  std::vector<double> f64;

  std::size_t numel() const { return shape_numel(shape); }

  template <typename T>
  std::vector<T> as() const {
    if (dtype == DType::kF32) return std::vector<T>(f32.begin(), f32.end());
    return std::vector<T>(f64.begin(), f64.end());
  }
};

template <typename T>
CheckpointEntry make_checkpoint_entry(std::string name, const Shape& shape, std::span<const T> values) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.shape = shape;
  if constexpr (std::is_same_v<T, float>) {
    e.dtype = DType::kF32;
    e.f32.assign(values.begin(), values.end());
  } else {
    e.dtype = DType::kF64;
    e.f64.assign(values.begin(), values.end());
  }
  return e;
}

namespace detail {

template <typename U>
void write_pod(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is, const std::string& path) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) fail(ErrorKind::kFormat, "truncated file: " + path);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  os.write("AFCK", 4);
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    require(e.name.size() <= 0xFFFF, ErrorKind::kInvalidArgument, "tensor name too long");
    require(e.shape.size() <= 0xFF, ErrorKind::kInvalidArgument, "tensor rank too large");
    detail::write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(e.dtype));
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    if (e.dtype == DType::kF32) {
      require(e.f32.size() == e.numel(), ErrorKind::kShapeMismatch, "entry size mismatch: " + e.name);
      os.write(reinterpret_cast<const char*>(e.f32.data()),
               static_cast<std::streamsize>(e.f32.size() * sizeof(float)));
    } else {
      require(e.f64.size() == e.numel(), ErrorKind::kShapeMismatch, "entry size mismatch: " + e.name);
      os.write(reinterpret_cast<const char*>(e.f64.data()),
               static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
    }
  }
  if (!os) fail(ErrorKind::kIo, "write failed: " + path);
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open checkpoint: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AFCK", 4) != 0) fail(ErrorKind::kFormat, "bad checkpoint magic: " + path);
  const auto version = detail::read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    fail(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::read_pod<std::uint32_t>(is, path);
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = detail::read_pod<std::uint16_t>(is, path);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    const auto dtype = detail::read_pod<std::uint8_t>(is, path);
    if (dtype > 1) fail(ErrorKind::kFormat, "unknown dtype in checkpoint: " + path);
    e.dtype = static_cast<DType>(dtype);
    const auto rank = detail::read_pod<std::uint8_t>(is, path);
    for (std::uint8_t r = 0; r < rank; ++r) e.shape.push_back(detail::read_pod<std::uint32_t>(is, path));
    const std::size_t n = e.numel();
    if (e.dtype == DType::kF32) {
      e.f32.resize(n);
      is.read(reinterpret_cast<char*>(e.f32.data()), static_cast<std::streamsize>(n * sizeof(float)));
    } else {
      e.f64.resize(n);
      is.read(reinterpret_cast<char*>(e.f64.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!is) fail(ErrorKind::kFormat, "truncated checkpoint payload: " + path);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_CHECKPOINT_HPP
