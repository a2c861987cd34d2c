#pragma once

// Little-endian byte buffers with a trailing CRC32 framing.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fdd/error.hpp"

namespace fdd::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class T>
  void put(T v) {
    bytes(&v, sizeof v);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }

  /// Appends CRC32 of everything written so far.
  std::vector<std::uint8_t> seal() {
    const std::uint32_t crc = crc32_of(buf_.data(), buf_.size());
    put(crc);
    return std::move(buf_);
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  /// Verifies and strips the trailing CRC32. magic is checked first so a
  /// foreign file is reported as such rather than as a checksum failure.
  ByteReader(std::vector<std::uint8_t> data, const char (&magic)[5],
             const std::string& what)
      : data_(std::move(data)), what_(what) {
    if (data_.size() < 4 || std::memcmp(data_.data(), magic, 4) != 0) {
      throw ChecksumError(what_ + ": header magic mismatch (expected \"" +
                          std::string(magic, 4) + "\")");
    }
    if (data_.size() < 8) throw ChecksumError(what_ + ": truncated file");
    std::uint32_t stored;
    std::memcpy(&stored, data_.data() + data_.size() - 4, 4);
    end_ = data_.size() - 4;
    if (crc32_of(data_.data(), end_) != stored) {
      throw ChecksumError(what_ + ": CRC32 mismatch (corrupt or truncated)");
    }
    pos_ = 4;
  }

  void bytes(void* p, std::size_t n) {
    if (n > end_ - pos_) throw ChecksumError(what_ + ": truncated body");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  bool at_end() const { return pos_ == end_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  std::vector<std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path);
}

}  // namespace fdd::io
