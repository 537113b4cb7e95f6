#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "subseg/errors.hpp"

namespace subseg {

// Little-endian binary reader that tracks its byte offset so corruption can
// be reported precisely. Every read throws format_error on truncation.
class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw format_error("cannot open '" + path + "' for reading", 0);
  }

  std::size_t offset() const { return offset_; }

  void read_exact(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw format_error("'" + path_ + "': truncated while reading " + what, offset_);
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read_exact(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

  float f32(const char* what) {
    const std::uint32_t raw = u32(what);
    return std::bit_cast<float>(raw);
  }

  double f64(const char* what) {
    unsigned char b[8];
    read_exact(b, 8, what);
    std::uint64_t raw = 0;
    for (int i = 7; i >= 0; --i) raw = raw << 8 | b[i];
    return std::bit_cast<double>(raw);
  }

  std::string bytes(std::size_t n, const char* what) {
    std::string s(n, '\0');
    read_exact(s.data(), n, what);
    return s;
  }

  // True when the stream holds no further bytes.
  bool at_end() {
    return in_.peek() == std::ifstream::traits_type::eof();
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

class ByteWriter {
 public:
  explicit ByteWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw format_error("cannot open '" + path + "' for writing", 0);
  }

  void write(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }

  void u32(std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    write(b, 4);
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void f64(double v) {
    std::uint64_t raw = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(raw >> (8 * i));
    write(b, 8);
  }

  void bytes(const std::string& s) { write(s.data(), s.size()); }

  void close() {
    out_.close();
    if (!out_) throw format_error("failed writing '" + path_ + "'", 0);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace subseg
