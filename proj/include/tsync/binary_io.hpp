// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>

#include "tsync/errors.hpp"

namespace tsync::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open '" + path + "' for writing");
  }

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  void u8(std::uint8_t v) { raw(v); }
  void u32(std::uint32_t v) { raw(v); }
  void f32(float v) { raw(v); }

  void finish() {
    out_.flush();
    if (!out_) throw DataError("write failed on '" + path_ + "'");
  }

 private:
  template <typename T>
  void raw(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open '" + path + "' for reading");
  }

  void expect_magic(std::string_view m) {
    std::array<char, 8> buf{};
    read_bytes(buf.data(), m.size());
    if (std::string_view(buf.data(), m.size()) != m)
      fail("bad magic, expected '" + std::string(m) + "'");
  }
  std::uint8_t u8() { return raw<std::uint8_t>(); }
  std::uint32_t u32() { return raw<std::uint32_t>(); }
  float f32() { return raw<float>(); }

  void expect_eof() {
    if (in_.peek() != std::char_traits<char>::eof()) fail("trailing bytes");
  }

  [[noreturn]] void fail(const std::string& what) {
    throw DataError(path_ + ": " + what + " at offset " + std::to_string(offset_));
  }

 private:
  void read_bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("unexpected end of file");
    offset_ += n;
  }

  template <typename T>
  T raw() {
    T v;
    read_bytes(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  std::string path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

}  // namespace tsync::io
