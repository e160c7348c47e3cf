// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte streams shared by the binary containers.
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <zlib.h>

namespace mrgnf::io {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

}  // namespace detail

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    v = detail::to_little(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void magic(const char (&m)[5]) { buf_.append(m, 4); }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  template <typename T>
  void array(const T* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v, n * sizeof(T));
    } else {
      for (std::size_t i = 0; i < n; ++i) put(v[i]);
    }
  }
  std::size_t size() const { return buf_.size(); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string what) : buf_(std::move(data)), what_(std::move(what)) {}

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n, const std::string& field) const {
    if (remaining() < n) throw FormatError(what_ + ": truncated while reading " + field);
  }
  template <typename T>
  T get(const std::string& field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return detail::to_little(v);
  }
  void magic(const char (&m)[5]) {
    need(4, "magic");
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0)
      throw FormatError(what_ + ": bad magic (expected '" + std::string(m, 4) + "')");
    pos_ += 4;
  }
  std::string str(const std::string& field) {
    const auto n = get<std::uint32_t>(field + " length");
    need(n, field);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  void array(T* v, std::size_t n, const std::string& field) {
    if (n > remaining() / sizeof(T)) throw FormatError(what_ + ": truncated while reading " + field);
    std::memcpy(v, buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    if constexpr (std::endian::native != std::endian::little)
      for (std::size_t i = 0; i < n; ++i) v[i] = detail::to_little(v[i]);
  }
  /// Raw view of the next n bytes (clamped to what remains) without consuming them.
  std::string peek(std::size_t n) const { return buf_.substr(pos_, std::min(n, remaining())); }
  void skip(std::size_t n) { pos_ += std::min(n, remaining()); }
  const std::string& what() const { return what_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::uint32_t crc32_of(const void* p, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  const auto* b = static_cast<const Bytef*>(p);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, b, chunk);
    b += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace mrgnf::io
