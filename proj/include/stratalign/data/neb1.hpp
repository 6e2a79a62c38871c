// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// NEB1-style container shared by embedding banks, neural arrays and
// checkpoints:
//
//   offset 0   4 bytes   magic ("NEB1" or "NCK1")
//   offset 4   u32 LE    format version (1)
//   offset 8   u32 LE    header length H in bytes
//   offset 12  H bytes   UTF-8 JSON header
//   offset 12+H          little-endian IEEE-754 float32 payload
//
// The payload length is implied by the header; readers reject files whose
// payload is shorter (truncated) or longer (size mismatch) than declared.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratalign/core/error.hpp"

namespace stratalign::neb1 {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::string_view kBankMagic = "NEB1";
inline constexpr std::string_view kCheckpointMagic = "NCK1";

struct Container {
  nlohmann::json header;
  std::vector<float> payload;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

inline void put_floats(std::string& out, const std::vector<float>& values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data() + start, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) out[start + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    }
  }
}

inline std::vector<float> get_floats(std::string_view in, std::size_t offset, std::size_t count) {
  std::vector<float> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count) std::memcpy(values.data(), in.data() + offset, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(in, offset + 4 * i));
  }
  return values;
}

}  // namespace detail

/// Serializes header + payload. The header is dumped compactly with sorted
/// keys, so equal containers always produce identical bytes.
inline std::string encode(std::string_view magic, const Container& c) {
  const std::string header = c.header.dump();
  std::string out;
  out.reserve(12 + header.size() + c.payload.size() * 4);
  out.append(magic);
  detail::put_u32(out, kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.append(header);
  detail::put_floats(out, c.payload);
  return out;
}

/// Parses a container. `payload_floats` maps the parsed header to the number
/// of floats the payload must hold.
template <class PayloadSize>
Container decode(std::string_view magic, std::string_view bytes, PayloadSize&& payload_floats) {
  if (bytes.size() < 12) throw DataError(DataErrorCode::truncated, "file shorter than the fixed preamble");
  if (bytes.substr(0, 4) != magic)
    throw DataError(DataErrorCode::bad_magic, "expected '" + std::string(magic) + "'");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kVersion)
    throw DataError(DataErrorCode::version_mismatch, "file version " + std::to_string(version) + ", reader supports " +
                                                         std::to_string(kVersion));
  const std::uint32_t header_len = detail::get_u32(bytes, 8);
  if (bytes.size() - 12 < header_len) throw DataError(DataErrorCode::truncated, "header extends past end of file");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::invalid, std::string("header is not valid JSON: ") + e.what());
  }
  const std::size_t expected = payload_floats(c.header);
  const std::size_t available = bytes.size() - 12 - header_len;
  if (available < expected * 4)
    throw DataError(DataErrorCode::truncated, "payload holds " + std::to_string(available) + " bytes, header declares " +
                                                  std::to_string(expected * 4));
  if (available != expected * 4)
    throw DataError(DataErrorCode::size_mismatch, "payload holds " + std::to_string(available) +
                                                      " bytes, header declares " + std::to_string(expected * 4));
  c.payload = detail::get_floats(bytes, 12 + header_len, expected);
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrorCode::io, "short write to " + path.string());
}

}  // namespace stratalign::neb1
