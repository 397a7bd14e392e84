#include "gama/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace gama::io {

uint32_t crc32(std::span<const uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<uint32_t>(crc);
}

void ByteWriter::f32s(std::span<const float> values) {
  const auto* p = reinterpret_cast<const uint8_t*>(values.data());
  buf_.insert(buf_.end(), p, p + values.size_bytes());
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw Error(ErrorKind::data, what_ + ": truncated file");
}

std::string ByteReader::text(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::f32s(std::span<float> out) {
  need(out.size_bytes());
  std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

std::span<const uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::span<const uint8_t> verify_crc(std::span<const uint8_t> file, const std::string& what) {
  if (file.size() < 4) throw Error(ErrorKind::data, what + ": truncated file");
  auto payload = file.first(file.size() - 4);
  uint32_t stored;
  std::memcpy(&stored, file.data() + payload.size(), 4);
  if (crc32(payload) != stored) throw Error(ErrorKind::data, what + ": checksum failure");
  return payload;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::data, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::data, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

std::string hex32(uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

// Not CRC32: every sealed file ends in the CRC of its payload, and the CRC of
// such a file is the same constant for all of them.
std::string file_checksum(const std::filesystem::path& path) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : read_file(path)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gama::io
