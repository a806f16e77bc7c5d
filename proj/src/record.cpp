#include "gdprkv/record.hpp"

#include "gdprkv/codec.hpp"

namespace gdprkv {

std::string_view to_string(OpKind op) {
  switch (op) {
    case OpKind::Read: return "read";
    case OpKind::Write: return "write";
    case OpKind::Delete: return "delete";
    case OpKind::Admin: return "admin";
  }
  return "?";
}

OpSet parse_ops(std::string_view text) {
  std::uint8_t bits = 0;
  for (const auto& tok : split_tokens(text)) {
    if (tok == "read") bits |= static_cast<std::uint8_t>(OpKind::Read);
    else if (tok == "write") bits |= static_cast<std::uint8_t>(OpKind::Write);
    else if (tok == "delete") bits |= static_cast<std::uint8_t>(OpKind::Delete);
    else if (tok == "admin") bits |= static_cast<std::uint8_t>(OpKind::Admin);
    else if (tok == "all") bits |= 0x0f;
    else throw Error(ErrorCode::BadMeta, "unknown operation kind: " + tok);
  }
  return OpSet::from_bits(bits);
}

std::string format_ops(OpSet ops) {
  std::string out;
  for (auto op : {OpKind::Read, OpKind::Write, OpKind::Delete, OpKind::Admin}) {
    if (!ops.contains(op)) continue;
    if (!out.empty()) out.push_back(',');
    out.append(to_string(op));
  }
  return out;
}

namespace {

void put_set(ByteWriter& w, const TokenSet& set) {
  if (set.size() > 0xffff) throw Error(ErrorCode::BadMeta, "too many tokens in set");
  w.u16(static_cast<std::uint16_t>(set.size()));
  for (const auto& t : set) w.str16(t);
}

TokenSet get_set(ByteReader& r) {
  TokenSet set;
  auto n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) set.emplace(r.str16());
  return set;
}

void put_opt_ts(ByteWriter& w, const std::optional<Timestamp>& ts) {
  w.u8(ts ? 1 : 0);
  w.i64(ts.value_or(0));
}

std::optional<Timestamp> get_opt_ts(ByteReader& r) {
  bool present = r.u8() != 0;
  auto v = r.i64();
  return present ? std::optional<Timestamp>(v) : std::nullopt;
}

}  // namespace

void encode_record_body(std::string& out, const Record& r) {
  ByteWriter w(out);
  w.str32(r.value);
  w.str16(r.meta.owner);
  put_set(w, r.meta.purposes);
  put_set(w, r.meta.objections);
  put_opt_ts(w, r.meta.expiry);
  put_set(w, r.meta.recipients);
  w.str16(r.meta.origin);
  put_set(w, r.meta.allowed_regions);
  w.i64(r.meta.created_at);
}

Record decode_record_body(std::string_view key, std::string_view body) {
  ByteReader rd(body);
  Record r;
  r.key = Bytes(key);
  r.value = Bytes(rd.str32());
  r.meta.owner = std::string(rd.str16());
  r.meta.purposes = get_set(rd);
  r.meta.objections = get_set(rd);
  r.meta.expiry = get_opt_ts(rd);
  r.meta.recipients = get_set(rd);
  r.meta.origin = std::string(rd.str16());
  r.meta.allowed_regions = get_set(rd);
  r.meta.created_at = rd.i64();
  if (!rd.done()) throw Error(ErrorCode::CorruptLog, "trailing bytes in record payload");
  return r;
}

void encode_grant_body(std::string& out, const AclGrant& g) {
  ByteWriter w(out);
  w.u8(g.allowed_ops.bits());
  put_set(w, g.allowed_purposes);
  put_opt_ts(w, g.valid_until);
}

AclGrant decode_grant_body(std::string_view actor, std::string_view body) {
  ByteReader rd(body);
  AclGrant g;
  g.actor = std::string(actor);
  g.allowed_ops = OpSet::from_bits(rd.u8());
  g.allowed_purposes = get_set(rd);
  g.valid_until = get_opt_ts(rd);
  if (!rd.done()) throw Error(ErrorCode::CorruptLog, "trailing bytes in grant payload");
  return g;
}

std::string join_tokens(const TokenSet& set) {
  std::string out;
  for (const auto& t : set) {
    if (!out.empty()) out.push_back(',');
    out += percent_encode(t);
  }
  return out;
}

TokenSet split_tokens(std::string_view text) {
  TokenSet set;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    auto end = comma == std::string_view::npos ? text.size() : comma;
    if (end > start) set.emplace(percent_decode(text.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return set;
}

std::string format_meta(const RecordMeta& meta) {
  std::string out = "owner=" + percent_encode(meta.owner);
  out += " purposes=" + join_tokens(meta.purposes);
  out += " objections=" + join_tokens(meta.objections);
  out += " expiry=" + (meta.expiry ? std::to_string(*meta.expiry) : std::string("-"));
  out += " recipients=" + join_tokens(meta.recipients);
  out += " origin=" + percent_encode(meta.origin);
  out += " regions=" + join_tokens(meta.allowed_regions);
  out += " created_at=" + std::to_string(meta.created_at);
  return out;
}

}  // namespace gdprkv
