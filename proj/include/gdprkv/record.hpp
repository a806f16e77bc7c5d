#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "gdprkv/common.hpp"

namespace gdprkv {

/// GDPR metadata carried by every record.
struct RecordMeta {
  std::string owner;          // data subject
  TokenSet purposes;          // whitelist; empty means no processing allowed
  TokenSet objections;        // blacklist; wins over the whitelist
  std::optional<Timestamp> expiry;
  TokenSet recipients;
  std::string origin = "direct";
  TokenSet allowed_regions;   // empty means unrestricted
  Timestamp created_at = 0;

  friend bool operator==(const RecordMeta&, const RecordMeta&) = default;
};

struct Record {
  Bytes key;
  Bytes value;
  RecordMeta meta;

  friend bool operator==(const Record&, const Record&) = default;
};

enum class OpKind : std::uint8_t {
  Read = 1 << 0,
  Write = 1 << 1,
  Delete = 1 << 2,
  Admin = 1 << 3,
};

/// Bitmask over OpKind.
class OpSet {
 public:
  constexpr OpSet() = default;
  constexpr OpSet(std::initializer_list<OpKind> ops) {
    for (auto op : ops) bits_ |= static_cast<std::uint8_t>(op);
  }
  static constexpr OpSet from_bits(std::uint8_t bits) {
    OpSet s;
    s.bits_ = bits & 0x0f;
    return s;
  }
  static constexpr OpSet all() { return from_bits(0x0f); }

  constexpr bool contains(OpKind op) const { return bits_ & static_cast<std::uint8_t>(op); }
  constexpr std::uint8_t bits() const { return bits_; }

  friend constexpr bool operator==(OpSet, OpSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

std::string_view to_string(OpKind op);
/// Parses "read,write,delete,admin" (any subset, any order).
OpSet parse_ops(std::string_view text);
std::string format_ops(OpSet ops);

/// Purpose token that matches any purpose in a grant's allowed set.
inline constexpr std::string_view kAnyPurpose = "*";

struct AclGrant {
  std::string actor;
  OpSet allowed_ops;
  TokenSet allowed_purposes;
  std::optional<Timestamp> valid_until;

  bool expired_at(Timestamp now) const { return valid_until && now > *valid_until; }
  bool allows_purpose(std::string_view purpose) const {
    return allowed_purposes.count(purpose) > 0 || allowed_purposes.count(kAnyPurpose) > 0;
  }

  friend bool operator==(const AclGrant&, const AclGrant&) = default;
};

// Binary encodings used inside audit payloads and state dumps.
void encode_record_body(std::string& out, const Record& r);
/// Decodes a record body; `key` is supplied by the enclosing frame.
Record decode_record_body(std::string_view key, std::string_view body);
void encode_grant_body(std::string& out, const AclGrant& g);
AclGrant decode_grant_body(std::string_view actor, std::string_view body);

std::string join_tokens(const TokenSet& set);
TokenSet split_tokens(std::string_view text);

/// Human-readable one-line metadata rendering (`owner=alice purposes=ads ...`),
/// used by GETMETA replies and subject reports.
std::string format_meta(const RecordMeta& meta);

}  // namespace gdprkv
