#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string_view>

#include "vbad/errors.hpp"

namespace vbad::detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), b.size());
}

inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw IoError("unexpected end of file");
  }
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
         (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

inline void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline float get_f32(std::istream& is) {
  return std::bit_cast<float>(get_u32(is));
}

inline void put_f32s(std::ostream& os, std::span<const float> values) {
  for (float v : values) put_f32(os, v);
}

inline void get_f32s(std::istream& is, std::span<float> out) {
  for (float& v : out) v = get_f32(is);
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::array<char, 4> got{};
  if (!is.read(got.data(), got.size()) ||
      std::string_view(got.data(), got.size()) != magic) {
    throw IoError("bad magic, expected " + std::string(magic));
  }
}

inline void expect_eof(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing bytes after payload");
  }
}

}  // namespace vbad::detail
