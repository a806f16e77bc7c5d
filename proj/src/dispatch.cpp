#include <charconv>
#include <openssl/crypto.h>

#include "gdprkv/codec.hpp"
#include "gdprkv/compliance.hpp"
#include "gdprkv/server.hpp"

namespace gdprkv {

namespace {

struct CommandShape {
  std::string_view name;
  std::size_t positional;
  bool extra_meta;  // key=value arguments accepted after the positionals
};

constexpr CommandShape kCommands[] = {
    {"AUTH", 2, false},       {"PUT", 2, true},        {"GET", 1, true},
    {"GETMETA", 1, true},     {"DEL", 1, false},       {"TTLSET", 2, false},
    {"TTLCLEAR", 1, false},   {"OBJECT", 2, false},    {"GRANT", 1, true},
    {"REVOKE", 1, false},     {"SUBJACCESS", 1, false}, {"SUBJEXPORT", 1, false},
    {"SUBJFORGET", 1, false}, {"AUDITQ", 0, true},     {"COMPACT", 0, false},
    {"INFO", 0, false},
};

const CommandShape* find_shape(std::string_view name) {
  for (const auto& c : kCommands) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

Timestamp parse_int(std::string_view text, ErrorCode code, std::string_view what) {
  Timestamp v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
    throw Error(code, "bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

std::string_view meta_or(const Command& cmd, std::string_view key, std::string_view fallback = {}) {
  const Bytes* v = cmd.find(key);
  return v ? std::string_view(*v) : fallback;
}

void check_meta_keys(const Command& cmd, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : cmd.meta) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw Error(ErrorCode::Arity, "unexpected argument '" + k + "' for " + cmd.name);
  }
}

Reply run_put(Store& store, const Command& cmd, const std::string& actor) {
  check_meta_keys(cmd, {"purpose", "owner", "purposes", "objections", "recipients", "origin",
                        "regions", "expiry", "ttl_ms"});
  RecordMeta meta;
  meta.owner = std::string(meta_or(cmd, "owner"));
  meta.purposes = split_tokens(meta_or(cmd, "purposes"));
  meta.objections = split_tokens(meta_or(cmd, "objections"));
  meta.recipients = split_tokens(meta_or(cmd, "recipients"));
  if (const Bytes* o = cmd.find("origin")) meta.origin = *o;
  meta.allowed_regions = split_tokens(meta_or(cmd, "regions"));
  if (const Bytes* e = cmd.find("expiry")) meta.expiry = parse_int(*e, ErrorCode::BadTtl, "expiry");
  if (const Bytes* t = cmd.find("ttl_ms")) {
    meta.expiry = store.clock().now() + parse_int(*t, ErrorCode::BadTtl, "ttl_ms") * kMicrosPerMilli;
  }
  auto purpose = meta_or(cmd, "purpose");
  auto res = store.put(cmd.positional[0], cmd.positional[1], std::move(meta), actor, purpose);
  return Reply::simple(res == PutResult::Created ? "CREATED" : "UPDATED");
}

Reply run_grant(Store& store, const Command& cmd, const std::string& actor) {
  check_meta_keys(cmd, {"ops", "purposes", "valid_until"});
  AclGrant g;
  g.actor = cmd.positional[0];
  g.allowed_ops = parse_ops(meta_or(cmd, "ops"));
  g.allowed_purposes = split_tokens(meta_or(cmd, "purposes"));
  if (const Bytes* v = cmd.find("valid_until")) {
    g.valid_until = parse_int(*v, ErrorCode::BadMeta, "valid_until");
  }
  store.grant(std::move(g), actor);
  return Reply::ok();
}

Reply run_auditq(Store& store, const Command& cmd, const std::string& actor) {
  check_meta_keys(cmd, {"subject", "key", "actor", "from", "to"});
  AuditFilter f;
  if (const Bytes* v = cmd.find("subject")) f.subject = *v;
  if (const Bytes* v = cmd.find("key")) f.key = *v;
  if (const Bytes* v = cmd.find("actor")) f.actor = *v;
  if (const Bytes* v = cmd.find("from")) f.from = parse_int(*v, ErrorCode::BadMeta, "from");
  if (const Bytes* v = cmd.find("to")) f.to = parse_int(*v, ErrorCode::BadMeta, "to");
  std::vector<Reply> lines;
  for (const auto& e : breach_trail(store, f, actor)) lines.push_back(Reply::bulk(format_entry(e)));
  return Reply::array(std::move(lines));
}

}  // namespace

bool secrets_match(std::string_view expected, std::string_view given) {
  auto a = sha256(expected);
  auto b = sha256(given);
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string Dispatcher::info() const { return store_.metrics().render() + store_.config().echo(); }

Reply Dispatcher::dispatch(const std::vector<Bytes>& args, Session& session) {
  try {
    if (args.empty()) return Reply::error(ErrorCode::ProtoError, "empty command");
    std::string name = args[0];
    for (auto& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return execute(name, args, session);
  } catch (const Error& e) {
    return Reply::error(e.code(), e.what());
  } catch (const std::exception& e) {
    return Reply::error_text(std::string("INTERNAL ") + e.what());
  }
}

Reply Dispatcher::execute(const std::string& name, const std::vector<Bytes>& args, Session& session) {
  const CommandShape* shape = find_shape(name);
  if (!shape) return Reply::error(ErrorCode::UnknownCommand, "unknown command '" + args[0] + "'");
  if (args.size() < shape->positional + 1 || (!shape->extra_meta && args.size() != shape->positional + 1)) {
    return Reply::error(ErrorCode::Arity, "wrong number of arguments for " + name);
  }
  Command cmd = split_command(args, shape->positional);

  if (name == "INFO") return Reply::bulk(info());
  if (name == "AUTH") {
    const auto& table = store_.config().auth;
    auto it = table.find(cmd.positional[0]);
    // Compare against a dummy secret for unknown actors so timing does not
    // reveal which actors exist.
    bool ok = secrets_match(it == table.end() ? std::string_view("\x01") : std::string_view(it->second),
                            cmd.positional[1]) &&
              it != table.end();
    if (!ok) {
      session = Session{};
      return Reply::error(ErrorCode::NoAuth, "invalid credentials");
    }
    session.actor = cmd.positional[0];
    session.authenticated = true;
    return Reply::ok();
  }
  if (!session.authenticated) return Reply::error(ErrorCode::NoAuth, "authenticate first");

  const std::string& actor = session.actor;
  const auto& p = cmd.positional;
  if (name == "PUT") return run_put(store_, cmd, actor);
  if (name == "GET" || name == "GETMETA") {
    check_meta_keys(cmd, {"purpose"});
    auto purpose = meta_or(cmd, "purpose");
    if (name == "GET") return Reply::bulk(store_.get(p[0], actor, purpose).value);
    return Reply::bulk(format_meta(store_.get_meta(p[0], actor, purpose)));
  }
  if (name == "DEL") return Reply::integer_reply(store_.del(p[0], actor) ? 1 : 0);
  if (name == "TTLSET") {
    store_.set_ttl(p[0], parse_int(p[1], ErrorCode::BadTtl, "expiry"), actor);
    return Reply::ok();
  }
  if (name == "TTLCLEAR") {
    store_.clear_ttl(p[0], actor);
    return Reply::ok();
  }
  if (name == "OBJECT") {
    return Reply::integer_reply(static_cast<std::int64_t>(object_subject(store_, p[0], p[1], actor)));
  }
  if (name == "GRANT") return run_grant(store_, cmd, actor);
  if (name == "REVOKE") return Reply::integer_reply(store_.revoke(p[0], actor) ? 1 : 0);
  if (name == "SUBJACCESS") return Reply::bulk(subject_access(store_, p[0], actor).render());
  if (name == "SUBJEXPORT") return Reply::bulk(export_portable(store_, p[0], actor));
  if (name == "SUBJFORGET") {
    return Reply::integer_reply(static_cast<std::int64_t>(forget_subject(store_, p[0], actor)));
  }
  if (name == "AUDITQ") return run_auditq(store_, cmd, actor);
  if (name == "COMPACT") {
    auto r = store_.compact(actor);
    return Reply::bulk("history_entries=" + std::to_string(r.history_entries) +
                       "\nsnapshot_entries=" + std::to_string(r.snapshot_entries) +
                       "\nredacted_entries=" + std::to_string(r.redacted_entries) +
                       "\nforgotten_subjects=" + std::to_string(r.forgotten_subjects) +
                       "\nbytes_before=" + std::to_string(r.bytes_before) +
                       "\nbytes_after=" + std::to_string(r.bytes_after) + "\n");
  }
  return Reply::error(ErrorCode::UnknownCommand, "unknown command '" + args[0] + "'");
}

}  // namespace gdprkv
