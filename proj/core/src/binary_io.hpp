#pragma once

// Little-endian stream helpers shared by the binary file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "zerodiff/errors.hpp"
#include "zerodiff/matrix.hpp"

namespace zdiff::detail {

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes.data(), sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  value = byteswap_if_big(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError(std::string("truncated binary file while reading ") + what);
  return byteswap_if_big(value);
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char got[4] = {};
  in.read(got, 4);
  if (!in || std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected \"") + magic + "\"");
  }
}

inline void write_short_string(std::ostream& out, const std::string& s) {
  if (s.size() > 0xFFFF) throw FormatError("string longer than 65535 bytes: " + s.substr(0, 32));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_short_string(std::istream& in, const char* what) {
  const auto len = read_le<std::uint16_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw FormatError(std::string("truncated binary file while reading ") + what);
  return s;
}

inline void write_matrix_f32(std::ostream& out, const Matrix& m) {
  for (double v : m.values()) write_le<float>(out, static_cast<float>(v));
}

inline Matrix read_matrix_f32(std::istream& in, std::size_t rows, std::size_t cols,
                              const char* what) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = read_le<float>(in, what);
  if (!m.all_finite()) throw FormatError(std::string("non-finite value in ") + what);
  return m;
}

}  // namespace zdiff::detail
