#include "gdprkv/compliance.hpp"

#include <charconv>

#include "gdprkv/codec.hpp"

namespace gdprkv {

namespace {

bool may_act_for(const Store& store, std::string_view subject, std::string_view actor) {
  return (!actor.empty() && actor == subject) || store.is_admin(actor);
}

std::string render_export_line(const Record& r) {
  std::string line;
  line += "key=" + percent_encode(r.key);
  line += "\tvalue_b64=" + base64_encode(r.value);
  line += "\towner=" + percent_encode(r.meta.owner);
  line += "\tpurposes=" + join_tokens(r.meta.purposes);
  line += "\tobjections=" + join_tokens(r.meta.objections);
  line += "\texpiry_ts=" + (r.meta.expiry ? std::to_string(*r.meta.expiry) : std::string("-"));
  line += "\torigin=" + percent_encode(r.meta.origin);
  line += "\trecipients=" + join_tokens(r.meta.recipients);
  line += "\tcreated_at=" + std::to_string(r.meta.created_at);
  line += '\n';
  return line;
}

Timestamp parse_ts(std::string_view v) {
  Timestamp out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw Error(ErrorCode::BadMeta, "bad timestamp '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace

std::string SubjectReport::render() const {
  std::string out = "subject=" + percent_encode(subject) + " generated_at=" +
                    std::to_string(generated_at) + " records=" + std::to_string(entries.size()) + "\n";
  for (const auto& e : entries) {
    out += "key=" + percent_encode(e.key);
    out += " purposes=" + join_tokens(e.purposes);
    out += " objections=" + join_tokens(e.objections);
    out += " recipients=" + join_tokens(e.recipients);
    out += " origin=" + percent_encode(e.origin);
    out += " storage_period=" + e.storage_period;
    out += " created_at=" + std::to_string(e.created_at);
    out += '\n';
  }
  return out;
}

SubjectReport subject_access(Store& store, std::string_view subject, std::string_view actor) {
  store.count_command();
  if (!may_act_for(store, subject, actor)) {
    store.reject(Opcode::AccessReport, ErrorCode::AccessDenied, actor, {}, {},
                 encode_subject_payload(subject, 0), "actor is neither the subject nor an admin");
  }
  SubjectReport rep;
  rep.subject = std::string(subject);
  rep.generated_at = store.clock().now();
  for (const auto& key : store.keys_by_owner(subject)) {
    const auto& m = store.keyspace().find(key)->meta;
    rep.entries.push_back(SubjectReportEntry{
        key, m.purposes, m.objections, m.recipients, m.origin,
        m.expiry ? std::to_string(*m.expiry) : std::string(kIndefiniteStorage), m.created_at});
  }
  store.audit(Opcode::AccessReport, Outcome::Ok, actor, {}, {},
              encode_subject_payload(subject, rep.entries.size(), digest_bytes(sha256(rep.render()))));
  return rep;
}

std::string export_portable(Store& store, std::string_view subject, std::string_view actor) {
  store.count_command();
  if (!may_act_for(store, subject, actor)) {
    store.reject(Opcode::Export, ErrorCode::AccessDenied, actor, {}, {},
                 encode_subject_payload(subject, 0), "actor is neither the subject nor an admin");
  }
  std::string out;
  auto keys = store.keys_by_owner(subject);
  for (const auto& key : keys) out += render_export_line(*store.keyspace().find(key));
  store.audit(Opcode::Export, Outcome::Ok, actor, {}, {},
              encode_subject_payload(subject, keys.size(), digest_bytes(sha256(out))));
  return out;
}

std::vector<Record> parse_portable(std::string_view stream) {
  static constexpr std::string_view kFields[] = {"key",        "value_b64", "owner",
                                                 "purposes",   "objections", "expiry_ts",
                                                 "origin",     "recipients", "created_at"};
  std::vector<Record> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < stream.size()) {
    auto nl = stream.find('\n', pos);
    if (nl == std::string_view::npos) throw Error(ErrorCode::BadMeta, "export stream must end with a newline");
    auto line = stream.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    std::string_view values[9];
    std::size_t field = 0;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      auto part = line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start);
      if (field >= 9) throw Error(ErrorCode::BadMeta, "line " + std::to_string(line_no) + ": too many fields");
      auto eq = part.find('=');
      if (eq == std::string_view::npos || part.substr(0, eq) != kFields[field]) {
        throw Error(ErrorCode::BadMeta, "line " + std::to_string(line_no) + ": expected field " +
                                            std::string(kFields[field]));
      }
      values[field++] = part.substr(eq + 1);
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (field != 9) throw Error(ErrorCode::BadMeta, "line " + std::to_string(line_no) + ": missing fields");

    Record r;
    r.key = percent_decode(values[0]);
    r.value = base64_decode(values[1]);
    r.meta.owner = percent_decode(values[2]);
    r.meta.purposes = split_tokens(values[3]);
    r.meta.objections = split_tokens(values[4]);
    if (values[5] != "-") r.meta.expiry = parse_ts(values[5]);
    r.meta.origin = percent_decode(values[6]);
    r.meta.recipients = split_tokens(values[7]);
    r.meta.created_at = parse_ts(values[8]);
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t import_portable(Store& store, std::string_view stream, std::string_view actor) {
  auto records = parse_portable(stream);
  for (auto& r : records) {
    store.count_command();
    store.restore_record(std::move(r), actor);
  }
  return records.size();
}

std::size_t forget_subject(Store& store, std::string_view subject, std::string_view actor) {
  store.count_command();
  if (!may_act_for(store, subject, actor)) {
    store.reject(Opcode::Forget, ErrorCode::AccessDenied, actor, {}, {},
                 encode_subject_payload(subject, 0), "actor is neither the subject nor an admin");
  }
  auto keys = store.keyspace().all_keys_of(subject);
  store.audit(Opcode::Forget, Outcome::Ok, actor, {}, {}, encode_subject_payload(subject, keys.size()));
  for (const auto& k : keys) store.erase_internal(k, Opcode::Del, "forget");
  if (store.config().erasure_mode == ErasureMode::Realtime) store.compact_internal();
  return keys.size();
}

std::size_t object_subject(Store& store, std::string_view subject, std::string_view purpose,
                           std::string_view actor) {
  store.count_command();
  if (!may_act_for(store, subject, actor)) {
    store.reject(Opcode::Object, ErrorCode::AccessDenied, actor, purpose, {},
                 encode_subject_payload(subject, 0), "actor is neither the subject nor an admin");
  }
  if (purpose.empty()) {
    store.reject(Opcode::Object, ErrorCode::BadMeta, actor, purpose, {},
                 encode_subject_payload(subject, 0), "objection needs a purpose");
  }
  auto keys = store.keyspace().all_keys_of(subject);
  store.audit(Opcode::Object, Outcome::Ok, actor, purpose, {}, encode_subject_payload(subject, keys.size()));
  const std::string p(purpose);
  for (const auto& k : keys) store.add_objection(k, p);
  return keys.size();
}

std::vector<AuditEntry> breach_trail(Store& store, const AuditFilter& filter, std::string_view actor) {
  store.count_command();
  if (!store.is_admin(actor)) {
    store.reject(Opcode::AuditQuery, ErrorCode::AccessDenied, actor, {}, {}, {},
                 "audit queries require admin");
  }
  store.log().flush();
  std::vector<AuditEntry> matches;
  try {
    matches = query_entries(read_log(store.log().path(), store.log().cipher()), filter);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CorruptLog) throw;
    store.reject(Opcode::AuditQuery, ErrorCode::CorruptLog, actor, {}, {}, {}, e.what());
  }
  ByteWriter w;
  w.u64(matches.size());
  store.audit(Opcode::AuditQuery, Outcome::Ok, actor, {}, {}, w.take());
  return matches;
}

}  // namespace gdprkv
