// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian primitive readers/writers for the index and checkpoint files.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "protoedit/error.hpp"

namespace protoedit::binio {

template <class T>
  requires std::is_arithmetic_v<T>
void write(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <class T>
  requires std::is_arithmetic_v<T>
T read(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), bytes.size())) throw IoError("unexpected end of binary file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 24) {
  const auto n = read<std::uint32_t>(in);
  if (n > max_len) throw IoError("string length out of range in binary file");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError("unexpected end of binary file");
  return s;
}

inline void write_magic(std::ostream& out, const char (&magic)[5], std::uint8_t version) {
  out.write(magic, 4);
  write<std::uint8_t>(out, version);
}

/// Returns the stored version after checking the magic bytes.
inline std::uint8_t read_magic(std::istream& in, const char (&magic)[5]) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw IoError(std::string("bad magic header, expected ") + magic);
  }
  return read<std::uint8_t>(in);
}

}  // namespace protoedit::binio
