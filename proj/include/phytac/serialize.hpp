#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "phytac/errors.hpp"

namespace phytac {

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t crc = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32(const std::vector<unsigned char>& bytes) {
  return crc32(bytes.data(), bytes.size());
}

// Binary record container.
//
//   bytes 0..3   magic "PHYT"
//   bytes 4..7   u32 LE format version (currently 1)
//   bytes 8..11  u32 LE dims: floats per record; 0 = variable-length mode
//   records      fixed mode:    dims x f32 LE, then u32 LE CRC-32 of those
//                               payload bytes
//                variable mode: u32 LE count, count x f32 LE, then u32 LE
//                               CRC-32 of the payload bytes (count included)
//
// Values are doubles in memory and 32-bit floats on disk.
namespace phyt {

constexpr char kMagic[4] = {'P', 'H', 'Y', 'T'};
constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFFu));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFFu));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xFFu));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xFFu));
}

inline void put_f32(std::vector<unsigned char>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

}  // namespace detail

class Writer {
 public:
  // dims > 0: every record holds exactly `dims` floats.
  // dims == 0: records carry their own length word.
  Writer(const std::string& path, std::uint32_t dims)
      : path_(path), dims_(dims) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) throw artifact_error("cannot open for writing: " + path);
    std::vector<unsigned char> header;
    header.insert(header.end(), kMagic, kMagic + 4);
    detail::put_u32(header, kVersion);
    detail::put_u32(header, dims_);
    write_bytes(header);
  }

  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
  ~Writer() {
    if (f_) std::fclose(f_);
  }

  // Returns the byte offset of the record just written.
  std::uint64_t write_record(const std::vector<double>& values) {
    if (!f_) throw artifact_error("writer already finished: " + path_);
    if (dims_ > 0 && values.size() != dims_)
      throw contract_error("record has " + std::to_string(values.size()) +
                           " values, container dims = " +
                           std::to_string(dims_));
    const std::uint64_t offset = pos_;
    std::vector<unsigned char> payload;
    payload.reserve(4 * (values.size() + 1));
    if (dims_ == 0)
      detail::put_u32(payload, static_cast<std::uint32_t>(values.size()));
    for (double v : values) detail::put_f32(payload, v);
    detail::put_u32(payload, crc32(payload));
    write_bytes(payload);
    return offset;
  }

  void finish() {
    if (!f_) return;
    if (std::fclose(f_) != 0) {
      f_ = nullptr;
      throw artifact_error("write failure closing: " + path_);
    }
    f_ = nullptr;
  }

 private:
  void write_bytes(const std::vector<unsigned char>& b) {
    if (std::fwrite(b.data(), 1, b.size(), f_) != b.size())
      throw artifact_error("write failure: " + path_);
    pos_ += b.size();
  }

  std::string path_;
  std::uint32_t dims_;
  std::FILE* f_ = nullptr;
  std::uint64_t pos_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "rb");
    if (!f_) throw artifact_error("cannot open: " + path);
    unsigned char header[12];
    if (std::fread(header, 1, 12, f_) != 12)
      throw artifact_error("truncated header: " + path);
    if (std::memcmp(header, kMagic, 4) != 0)
      throw artifact_error("bad magic bytes (not a PHYT file): " + path);
    version_ = detail::get_u32(header + 4);
    if (version_ != kVersion)
      throw artifact_error("unsupported format version " +
                           std::to_string(version_) + " in " + path);
    dims_ = detail::get_u32(header + 8);
    pos_ = 12;
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;
  ~Reader() {
    if (f_) std::fclose(f_);
  }

  std::uint32_t dims() const { return dims_; }
  std::uint32_t version() const { return version_; }
  std::uint64_t offset() const { return pos_; }

  // Sequential read; false cleanly at end of file.
  bool next_record(std::vector<double>& out) {
    std::uint32_t count = dims_;
    std::vector<unsigned char> payload;
    if (dims_ == 0) {
      unsigned char lenb[4];
      const std::size_t got = std::fread(lenb, 1, 4, f_);
      if (got == 0) return false;
      if (got != 4) throw artifact_error("truncated record in " + path_);
      count = detail::get_u32(lenb);
      payload.insert(payload.end(), lenb, lenb + 4);
    }
    const std::size_t body = 4 * static_cast<std::size_t>(count);
    const std::size_t head = payload.size();
    payload.resize(head + body + 4);
    const std::size_t got =
        std::fread(payload.data() + head, 1, body + 4, f_);
    if (dims_ > 0 && got == 0) return false;
    if (got != body + 4) throw artifact_error("truncated record in " + path_);
    const std::uint32_t stored = detail::get_u32(payload.data() + head + body);
    payload.resize(head + body);
    if (crc32(payload) != stored)
      throw artifact_error("checksum mismatch in " + path_);
    out.resize(count);
    for (std::uint32_t i = 0; i < count; ++i)
      out[i] = detail::get_f32(payload.data() + head + 4 * i);
    pos_ += payload.size() + 4;
    return true;
  }

  // Random access via a byte offset previously returned by Writer.
  std::vector<double> record_at(std::uint64_t offset) {
    if (std::fseek(f_, static_cast<long>(offset), SEEK_SET) != 0)
      throw artifact_error("seek failure in " + path_);
    pos_ = offset;
    std::vector<double> out;
    if (!next_record(out))
      throw artifact_error("truncated record in " + path_);
    return out;
  }

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
  std::uint32_t version_ = 0;
  std::uint32_t dims_ = 0;
  std::uint64_t pos_ = 0;
};

}  // namespace phyt
}  // namespace phytac
