#pragma once

// Little-endian byte writer/reader shared by the checkpoint and feature
// file containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "geotext/error.hpp"

namespace geotext::binio {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string& buffer() noexcept { return buf_; }
  std::size_t size() const noexcept { return buf_.size(); }

 private:
  std::string buf_;
};

/// Bounds-checked reader; any overrun throws FormatError mentioning `what`.
class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) { return take(n); }
  std::string str32() { return std::string(bytes(u32())); }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw FormatError(what_ + ": unexpected end of data (truncated)");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace geotext::binio
