#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "rfsep/error.hpp"

// Little-endian byte packing shared by the checkpoint and sigpack formats.
namespace rfsep::bytes {

using Buffer = std::vector<std::uint8_t>;

inline void put_u32(Buffer& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Buffer& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(Buffer& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(Buffer& out, const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t at) {
  return std::bit_cast<double>(get_u64(in, at));
}

inline Buffer read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot open '" + path + "' for reading");
  Buffer data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error(ErrorCode::io, "short write to '" + path + "'");
}

// 64-bit FNV-1a, rendered as 16 hex digits. Used for manifest content hashes.
inline std::string fnv1a_hex(std::span<const std::uint8_t> data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

/// Splits a "MAGIC8 | u32 length | JSON" header off a file image. Returns the
/// JSON text and the byte offset where the payload section starts.
inline std::pair<std::string, std::size_t> split_header(std::span<const std::uint8_t> file,
                                                        std::string_view magic) {
  if (file.size() < magic.size() || std::memcmp(file.data(), magic.data(), magic.size()) != 0) {
    throw Error(ErrorCode::format, "bad magic at byte offset 0");
  }
  if (file.size() < magic.size() + 4) {
    throw Error(ErrorCode::format, "truncated header at byte offset " + std::to_string(magic.size()));
  }
  const std::uint32_t len = get_u32(file, magic.size());
  const std::size_t json_at = magic.size() + 4;
  if (file.size() < json_at + len) {
    throw Error(ErrorCode::format, "truncated manifest at byte offset " + std::to_string(file.size()) +
                                       " (need " + std::to_string(json_at + len) + ")");
  }
  return {std::string(reinterpret_cast<const char*>(file.data()) + json_at, len), json_at + len};
}

inline Buffer join_header(std::string_view magic, const std::string& json) {
  Buffer out(magic.begin(), magic.end());
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  put_string(out, json);
  return out;
}

}  // namespace rfsep::bytes
