#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "gdprkv/common.hpp"

namespace gdprkv {

/// Little-endian append-only encoder.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::string& out) : out_(&out) {}

  void u8(std::uint8_t v) { buf().push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void raw(std::string_view bytes) { buf().append(bytes); }

  /// u16 length prefix; throws BadMeta when the string does not fit.
  void str16(std::string_view s);
  /// u32 length prefix.
  void str32(std::string_view s);

  std::string& bytes() { return buf(); }
  std::string take() { return std::move(buf()); }

 private:
  std::string& buf() { return out_ ? *out_ : own_; }

  template <typename T>
  void put_le(T v) {
    char tmp[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      tmp[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    buf().append(tmp, sizeof(T));
  }

  std::string own_;
  std::string* out_ = nullptr;
};

/// Little-endian decoder over a borrowed buffer. Reads past the end throw
/// `Error(CorruptLog)`.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  std::string_view raw(std::size_t n) { return take(n); }
  std::string_view str16() { return take(u16()); }
  std::string_view str32() { return take(u32()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view take(std::size_t n);

  template <typename T>
  T get_le() {
    auto s = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    }
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

using Digest = std::array<unsigned char, 32>;

Digest sha256(std::string_view data);
Digest sha256(std::string_view salt, std::string_view data);
std::string digest_bytes(const Digest& d);

/// CRC-32 (IEEE 802.3 polynomial, as used by zlib/PNG).
std::uint32_t crc32_ieee(std::string_view data);

std::string to_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
/// Throws `Error(BadMeta)` on malformed input.
std::string base64_decode(std::string_view text);

/// Escapes bytes outside printable ASCII plus `%`, `,`, `=` as `%XX` so a
/// token can sit inside comma lists and key=value fields.
std::string percent_encode(std::string_view bytes);
std::string percent_decode(std::string_view text);

}  // namespace gdprkv
