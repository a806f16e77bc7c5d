#include "gdprkv/audit_log.hpp"

#include <fstream>
#include <iterator>
#include <unordered_map>

#include "gdprkv/codec.hpp"

namespace gdprkv {

std::string_view to_string(Opcode op) {
  switch (op) {
    case Opcode::Put: return "PUT";
    case Opcode::Get: return "GET";
    case Opcode::Del: return "DEL";
    case Opcode::TtlSet: return "TTLSET";
    case Opcode::TtlClear: return "TTLCLEAR";
    case Opcode::Grant: return "GRANT";
    case Opcode::Revoke: return "REVOKE";
    case Opcode::Object: return "OBJECT";
    case Opcode::Forget: return "FORGET";
    case Opcode::ExpireErase: return "EXPIRE_ERASE";
    case Opcode::Compact: return "COMPACT";
    case Opcode::Export: return "EXPORT";
    case Opcode::AccessReport: return "ACCESSRPT";
    case Opcode::AuditQuery: return "AUDITQ";
  }
  return "?";
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Ok: return "OK";
    case Outcome::Denied: return "DENIED";
    case Outcome::NotFound: return "NOT_FOUND";
    case Outcome::Error: return "ERROR";
  }
  return "?";
}

Outcome outcome_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::AccessDenied:
    case ErrorCode::PurposeDenied:
    case ErrorCode::RegionDenied:
    case ErrorCode::NoAuth:
      return Outcome::Denied;
    case ErrorCode::NotFound:
      return Outcome::NotFound;
    default:
      return Outcome::Error;
  }
}

bool is_mutation(Opcode op) {
  switch (op) {
    case Opcode::Put:
    case Opcode::Del:
    case Opcode::TtlSet:
    case Opcode::TtlClear:
    case Opcode::Grant:
    case Opcode::Revoke:
    case Opcode::Object:
    case Opcode::Forget:
    case Opcode::ExpireErase:
    case Opcode::Compact:
      return true;
    default:
      return false;
  }
}

bool is_subject_op(Opcode op) {
  return op == Opcode::Object || op == Opcode::Forget || op == Opcode::Export ||
         op == Opcode::AccessReport;
}

std::string format_entry(const AuditEntry& e) {
  std::string out = "seq=" + std::to_string(e.seq);
  out += " ts=" + std::to_string(e.ts);
  out += " op=";
  out += to_string(e.opcode);
  out += " outcome=";
  out += to_string(e.outcome);
  out += " actor=" + percent_encode(e.actor);
  if (!e.purpose.empty()) out += " purpose=" + percent_encode(e.purpose);
  if (!e.key.empty()) out += " key=" + percent_encode(e.key);
  if (is_subject_op(e.opcode)) {
    if (auto s = decode_subject_payload(e.payload)) out += " subject=" + percent_encode(*s);
  }
  out += " payload_len=" + std::to_string(e.payload.size());
  return out;
}

std::string encode_subject_payload(std::string_view subject, std::uint64_t count,
                                   std::string_view digest) {
  ByteWriter w;
  w.str16(subject);
  w.u64(count);
  w.str16(digest);
  return w.take();
}

std::optional<std::string> decode_subject_payload(std::string_view payload) {
  try {
    ByteReader r(payload);
    std::string subject(r.str16());
    r.u64();
    r.str16();
    if (!r.done()) return std::nullopt;
    return subject;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string log_header() {
  ByteWriter w;
  w.raw(kLogMagic);
  w.u16(kLogVersion);
  return w.take();
}

void encode_frame_into(std::string& out, const AuditEntry& e) {
  auto start = out.size();
  ByteWriter w(out);
  w.u32(0);  // patched below
  w.u64(e.seq);
  w.i64(e.ts);
  w.u8(static_cast<std::uint8_t>(e.opcode));
  w.u8(static_cast<std::uint8_t>(e.outcome));
  w.str16(e.actor);
  w.str16(e.purpose);
  w.str32(e.key);
  w.str32(e.payload);
  auto body = std::string_view(out).substr(start + 4);
  auto crc = crc32_ieee(body);
  w.u32(crc);
  auto frame_len = static_cast<std::uint32_t>(out.size() - start - 4);
  for (int i = 0; i < 4; ++i) out[start + i] = static_cast<char>((frame_len >> (8 * i)) & 0xff);
}

std::string encode_frame(const AuditEntry& e) {
  std::string out;
  encode_frame_into(out, e);
  return out;
}

FsyncPolicy FsyncPolicy::parse(std::string_view text) {
  if (text == "always") return always();
  if (text == "none" || text == "no") return none();
  if (text == "every" || text == "everysec") return every(1000);
  if (text.rfind("every:", 0) == 0 || text.rfind("every(", 0) == 0) {
    auto digits = text.substr(6);
    if (!digits.empty() && digits.back() == ')') digits.remove_suffix(1);
    try {
      auto ms = std::stoul(std::string(digits));
      if (ms == 0) throw Error(ErrorCode::BadConfig, "fsync interval must be positive");
      return every(static_cast<std::uint32_t>(ms));
    } catch (const std::logic_error&) {
    }
  }
  throw Error(ErrorCode::BadConfig, "bad fsync policy: " + std::string(text));
}

std::string FsyncPolicy::to_string() const {
  switch (mode) {
    case Mode::Always: return "always";
    case Mode::None: return "none";
    case Mode::Every: return "every:" + std::to_string(interval_ms);
  }
  return "?";
}

std::string_view to_string(LogViolation::Kind kind) {
  switch (kind) {
    case LogViolation::Kind::BadHeader: return "bad_header";
    case LogViolation::Kind::Truncated: return "truncated";
    case LogViolation::Kind::Crc: return "crc";
    case LogViolation::Kind::Decode: return "decode";
    case LogViolation::Kind::SeqGap: return "seq_gap";
    case LogViolation::Kind::TsRegression: return "ts_regression";
  }
  return "?";
}

namespace {

std::uint32_t peek_u32(std::string_view data, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
  }
  return v;
}

AuditEntry decode_body(std::string_view body) {
  ByteReader r(body);
  AuditEntry e;
  e.seq = r.u64();
  e.ts = r.i64();
  auto op = r.u8();
  if (op < 1 || op > 14) throw Error(ErrorCode::CorruptLog, "unknown opcode " + std::to_string(op));
  e.opcode = static_cast<Opcode>(op);
  auto outcome = r.u8();
  if (outcome > 3) throw Error(ErrorCode::CorruptLog, "unknown outcome " + std::to_string(outcome));
  e.outcome = static_cast<Outcome>(outcome);
  e.actor = std::string(r.str16());
  e.purpose = std::string(r.str16());
  e.key = Bytes(r.str32());
  e.payload = Bytes(r.str32());
  if (!r.done()) throw Error(ErrorCode::CorruptLog, "trailing bytes in frame body");
  return e;
}

}  // namespace

VerifyReport scan_log(std::string_view data, const Cipher& cipher, const EntrySink& sink) {
  VerifyReport rep;
  rep.bytes = data.size();
  auto violate = [&](LogViolation::Kind kind, std::uint64_t offset, std::string msg) {
    rep.violation = LogViolation{kind, rep.last_good_seq + 1, offset, std::move(msg)};
    return rep;
  };

  if (data.size() < kLogHeaderSize || data.substr(0, 4) != kLogMagic) {
    return violate(LogViolation::Kind::BadHeader, 0, "missing GKVL magic");
  }
  auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(data[4]) |
                                            (static_cast<unsigned char>(data[5]) << 8));
  if (version != kLogVersion) {
    return violate(LogViolation::Kind::BadHeader, 4, "unsupported version " + std::to_string(version));
  }

  const bool sealed = !cipher.is_null();
  std::size_t pos = kLogHeaderSize;
  std::string opened;
  while (pos < data.size()) {
    const auto unit_offset = pos;
    if (data.size() - pos < 4) {
      return violate(LogViolation::Kind::Truncated, unit_offset, "partial length prefix");
    }
    auto len = peek_u32(data, pos);
    if (data.size() - pos - 4 < len) {
      return violate(LogViolation::Kind::Truncated, unit_offset, "frame extends past end of file");
    }
    auto unit = data.substr(pos + 4, len);
    pos += 4 + static_cast<std::size_t>(len);

    std::string_view body;
    if (sealed) {
      try {
        opened = cipher.open(unit);
      } catch (const Error& e) {
        return violate(LogViolation::Kind::Crc, unit_offset, e.what());
      }
      if (opened.size() < 4 || peek_u32(opened, 0) != opened.size() - 4) {
        return violate(LogViolation::Kind::Decode, unit_offset, "bad inner frame length");
      }
      body = std::string_view(opened).substr(4);
    } else {
      body = unit;
    }

    if (body.size() < 4) return violate(LogViolation::Kind::Truncated, unit_offset, "frame too short");
    auto payload = body.substr(0, body.size() - 4);
    auto stored_crc = peek_u32(body, body.size() - 4);
    if (crc32_ieee(payload) != stored_crc) {
      return violate(LogViolation::Kind::Crc, unit_offset, "crc mismatch");
    }

    AuditEntry e;
    try {
      e = decode_body(payload);
    } catch (const Error& err) {
      return violate(LogViolation::Kind::Decode, unit_offset, err.what());
    }
    if (e.seq != rep.last_good_seq + 1) {
      return violate(LogViolation::Kind::SeqGap, unit_offset,
                     "expected seq " + std::to_string(rep.last_good_seq + 1) + ", found " +
                         std::to_string(e.seq));
    }
    if (rep.entries > 0 && e.ts < rep.last_ts) {
      return violate(LogViolation::Kind::TsRegression, unit_offset,
                     "timestamp goes backwards at seq " + std::to_string(e.seq));
    }
    rep.last_good_seq = e.seq;
    rep.last_ts = e.ts;
    ++rep.entries;
    if (sink) sink(std::move(e));
  }
  return rep;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

VerifyReport verify_log(const std::string& path, const Cipher& cipher) {
  return scan_log(read_file(path), cipher);
}

std::vector<AuditEntry> read_log_bytes(std::string_view data, const Cipher& cipher) {
  std::vector<AuditEntry> out;
  auto rep = scan_log(data, cipher, [&](AuditEntry&& e) { out.push_back(std::move(e)); });
  if (!rep.ok()) {
    throw Error(ErrorCode::CorruptLog,
                std::string(to_string(rep.violation->kind)) + ": " + rep.violation->message +
                    " (last good seq " + std::to_string(rep.last_good_seq) + ")");
  }
  return out;
}

std::vector<AuditEntry> read_log(const std::string& path, const Cipher& cipher) {
  return read_log_bytes(read_file(path), cipher);
}

std::vector<AuditEntry> query_entries(const std::vector<AuditEntry>& entries,
                                      const AuditFilter& filter) {
  std::vector<AuditEntry> out;
  std::unordered_map<std::string, std::string> owners;
  for (const auto& e : entries) {
    std::optional<std::string> subject;
    if (is_subject_op(e.opcode)) {
      subject = decode_subject_payload(e.payload);
    } else if (!e.key.empty()) {
      if (e.opcode == Opcode::Put && e.outcome == Outcome::Ok) {
        try {
          owners[e.key] = decode_record_body(e.key, e.payload).meta.owner;
        } catch (const Error&) {
          // redacted history entry
        }
      }
      if (auto it = owners.find(e.key); it != owners.end()) subject = it->second;
    }

    bool match = true;
    if (filter.subject && subject != filter.subject) match = false;
    if (filter.key && e.key != *filter.key) match = false;
    if (filter.actor && e.actor != *filter.actor) match = false;
    if (filter.from && e.ts < *filter.from) match = false;
    if (filter.to && e.ts > *filter.to) match = false;
    if (match) out.push_back(e);

    if ((e.opcode == Opcode::Del || e.opcode == Opcode::ExpireErase) && e.outcome == Outcome::Ok) {
      owners.erase(e.key);
    }
    if (e.is_compaction_marker()) owners.clear();
  }
  return out;
}

}  // namespace gdprkv
