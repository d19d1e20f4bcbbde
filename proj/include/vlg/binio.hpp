// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "vlg/common.hpp"

// Little-endian primitives shared by the archive and checkpoint formats.
// Multi-byte integers are written byte-by-byte so the files are identical
// regardless of host endianness.

namespace vlg::binio {

inline void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline void write_f32_array(std::ostream& os, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) write_f32(os, data[i]);
}

// Strings are a u16 length followed by UTF-8 bytes.
inline void write_str(std::ostream& os, const std::string& s) {
  if (s.size() > 0xffff)
    throw ValidationError("string too long for u16 length: " +
                          std::to_string(s.size()) + " bytes");
  write_u16(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_bytes(std::istream& is, void* out, std::size_t n,
                       const char* what) {
  is.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw TruncatedError(std::string("truncated payload while reading ") + what);
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  read_bytes(is, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is, const char* what) {
  std::uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void read_f32_array(std::istream& is, float* out, std::size_t n,
                           const char* what) {
  std::vector<unsigned char> buf(n * 4);
  read_bytes(is, buf.data(), buf.size(), what);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k)
      bits |= static_cast<std::uint32_t>(buf[i * 4 + k]) << (8 * k);
    std::memcpy(&out[i], &bits, 4);
  }
}

inline std::string read_str(std::istream& is, const char* what) {
  const std::uint16_t len = read_u16(is, what);
  std::string s(len, '\0');
  if (len > 0) read_bytes(is, s.data(), len, what);
  return s;
}

}  // namespace vlg::binio
