#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gama/error.hpp"

namespace gama::io {

uint32_t crc32(std::span<const uint8_t> bytes);

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { put(v); }
  void u32(uint32_t v) { put(v); }
  void f32(float v) { put(v); }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void text(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void f32s(std::span<const float> values);

  /// Appends CRC32 over everything written so far.
  void seal() { u32(crc32(buf_)); }
  const std::vector<uint8_t>& buffer() const { return buf_; }

 private:
  template <typename V>
  void put(V v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    uint8_t raw[sizeof(V)];
    std::memcpy(raw, &v, sizeof(V));
    buf_.insert(buf_.end(), raw, raw + sizeof(V));
  }

  std::vector<uint8_t> buf_;
};

/// Bounds-checked little-endian reader; every overrun is a "truncated" data error.
class ByteReader {
 public:
  ByteReader(std::span<const uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  uint8_t u8() { return get<uint8_t>(); }
  uint16_t u16() { return get<uint16_t>(); }
  uint32_t u32() { return get<uint32_t>(); }
  float f32() { return get<float>(); }
  std::string text(std::size_t n);
  void f32s(std::span<float> out);
  std::span<const uint8_t> raw(std::size_t n);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::span<const uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// Splits off and verifies the trailing CRC32; returns the covered payload.
std::span<const uint8_t> verify_crc(std::span<const uint8_t> file, const std::string& what);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes as 16 lowercase hex digits.
std::string file_checksum(const std::filesystem::path& path);
std::string hex32(uint32_t v);

}  // namespace gama::io
