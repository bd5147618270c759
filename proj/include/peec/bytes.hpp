#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "peec/errors.hpp"

namespace peec::bytes {

// Little-endian byte packing, independent of host order.

class Writer {
public:
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

  void u8(std::uint8_t v) { buf_.push_back(v); }

  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void raw(std::span<const std::uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
  }

  void raw(std::string_view s) {
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  /// u16 length prefix + UTF-8 bytes.
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw ValueError("str16: string too long");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  void require(size_t n, const char* what) const {
    if (remaining() < n) {
      throw TruncationError(std::string(what) + ": expected " +
                            std::to_string(n) + " more bytes at offset " +
                            std::to_string(pos_) + ", only " +
                            std::to_string(remaining()) + " available");
    }
  }

  std::uint8_t u8(const char* what = "u8") {
    require(1, what);
    return data_[pos_++];
  }

  std::uint16_t u16(const char* what = "u16") {
    require(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(data_[pos_++]) << (8 * i);
    return v;
  }

  std::uint32_t u32(const char* what = "u32") {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }

  std::uint64_t u64(const char* what = "u64") {
    require(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }

  float f32(const char* what = "f32") {
    return std::bit_cast<float>(u32(what));
  }

  double f64(const char* what = "f64") {
    return std::bit_cast<double>(u64(what));
  }

  std::span<const std::uint8_t> raw(size_t n, const char* what = "raw") {
    require(n, what);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::string str16(const char* what = "str16") {
    const std::uint16_t n = u16(what);
    auto span = raw(n, what);
    return std::string(reinterpret_cast<const char*>(span.data()), n);
  }

private:
  std::span<const std::uint8_t> data_;
  size_t pos_ = 0;
};

inline void write_file(const std::string& path,
                       std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> data(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) throw IoError("read failed: " + path);
  return data;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::string data(static_cast<size_t>(size), '\0');
  in.read(data.data(), size);
  if (!in) throw IoError("read failed: " + path);
  return data;
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path);
}

} // namespace peec::bytes
