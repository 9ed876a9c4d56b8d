#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

namespace pve::io {

/// Little-endian primitive writers/readers shared by the checkpoint and
/// dataset formats.

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[std::size_t(i)] = char((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 8);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[std::size_t(i)] = char((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 4);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_f32s(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * sizeof(float)));
  } else {
    for (float v : values) put_f32(os, v);
  }
}

inline void put_tag(std::ostream& os, const char (&tag)[5]) { os.write(tag, 4); }

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void bytes(char* dst, std::size_t n) {
    is_.read(dst, std::streamsize(n));
    if (std::size_t(is_.gcount()) != n) throw std::runtime_error(what_ + ": truncated file");
  }

  std::uint64_t u64() {
    std::array<unsigned char, 8> b{};
    bytes(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[std::size_t(i)];
    return v;
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    bytes(reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[std::size_t(i)];
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void f32s(std::span<float> dst) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(reinterpret_cast<char*>(dst.data()), dst.size() * sizeof(float));
    } else {
      for (auto& v : dst) v = f32();
    }
  }

  /// Reads a 4-byte tag; returns an empty string at clean end of stream.
  std::string tag() {
    std::string t(4, '\0');
    is_.read(t.data(), 4);
    if (is_.gcount() == 0) return {};
    if (is_.gcount() != 4) throw std::runtime_error(what_ + ": truncated section tag");
    return t;
  }

  const std::string& what() const { return what_; }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace pve::io
