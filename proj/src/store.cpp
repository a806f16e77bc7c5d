#include "gdprkv/store.hpp"

#include <filesystem>

#include "gdprkv/codec.hpp"

namespace gdprkv {

ReplayedState replay_entries(const std::vector<AuditEntry>& entries) {
  ReplayedState st;
  st.entries = entries.size();
  st.last_seq = entries.empty() ? 0 : entries.back().seq;

  std::size_t start = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].is_compaction_marker()) start = i + 1;
  }

  auto& ks = st.keyspace;
  for (std::size_t i = start; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!is_mutation(e.opcode) || e.outcome != Outcome::Ok) continue;
    switch (e.opcode) {
      case Opcode::Put:
        ks.upsert(decode_record_body(e.key, e.payload));
        break;
      case Opcode::Del:
      case Opcode::ExpireErase:
        ks.erase(e.key);
        break;
      case Opcode::TtlSet: {
        ByteReader r(e.payload);
        ks.set_expiry(e.key, r.i64());
        break;
      }
      case Opcode::TtlClear:
        ks.set_expiry(e.key, std::nullopt);
        break;
      case Opcode::Grant:
        st.grants.put(decode_grant_body(e.key, e.payload));
        break;
      case Opcode::Revoke:
        st.grants.erase(e.key);
        break;
      case Opcode::Object: {
        auto subject = decode_subject_payload(e.payload);
        if (!subject) throw Error(ErrorCode::CorruptLog, "bad OBJECT payload at seq " + std::to_string(e.seq));
        for (const auto& k : ks.all_keys_of(*subject)) ks.add_objection(k, e.purpose);
        break;
      }
      case Opcode::Forget: {
        auto subject = decode_subject_payload(e.payload);
        if (!subject) throw Error(ErrorCode::CorruptLog, "bad FORGET payload at seq " + std::to_string(e.seq));
        for (const auto& k : ks.all_keys_of(*subject)) ks.erase(k);
        break;
      }
      default:
        break;
    }
  }
  return st;
}

ReplayedState replay_log(const std::string& path, const Cipher& cipher) {
  return replay_entries(read_log(path, cipher));
}

std::string dump_state(const Keyspace& keyspace, const GrantTable& grants) {
  std::string out = keyspace.dump();
  ByteWriter w(out);
  auto list = grants.list();
  w.u64(list.size());
  for (const auto& g : list) {
    w.str16(g.actor);
    encode_grant_body(out, g);
  }
  return out;
}

std::string StoreMetrics::render() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) {
    out.append(k);
    out.push_back('=');
    out.append(v);
    out.push_back('\n');
  };
  line("ops_total", std::to_string(ops_total));
  line("denied_total", std::to_string(denied_total));
  line("expired_erased", std::to_string(expired_erased));
  line("forget_erased", std::to_string(forget_erased));
  line("pending_expired", std::to_string(pending_expired));
  line("log_entries", std::to_string(log_entries));
  line("log_bytes", std::to_string(log_bytes));
  line("compactions", std::to_string(compactions));
  line("records", std::to_string(records));
  line("max_erasure_delay_us", std::to_string(max_erasure_delay));
  line("mean_erasure_delay_us", std::to_string(static_cast<std::int64_t>(mean_erasure_delay)));
  line("fsync_mode", fsync_mode);
  line("expiry_strategy", expiry_strategy);
  return out;
}

Store::Store(const ComplianceConfig& config, const Clock& clock)
    : config_(config), clock_(clock), rng_(config.rng_seed) {
  config_.lazy.validate();
  for (const auto& admin : config_.admins) {
    bootstrap_.put(AclGrant{admin, OpSet::all(), TokenSet{std::string(kAnyPurpose)}, std::nullopt});
  }
}

std::unique_ptr<Store> Store::open(const ComplianceConfig& config, const Clock& clock) {
  std::unique_ptr<Store> store(new Store(config, clock));
  auto cipher = config.make_cipher();
  std::error_code ec;
  if (std::filesystem::exists(config.log_path, ec) && std::filesystem::file_size(config.log_path, ec) > 0) {
    auto st = replay_log(config.log_path, *cipher);
    store->keyspace_ = std::move(st.keyspace);
    store->grants_ = std::move(st.grants);
  }
  store->log_ = AuditLog::open(config.log_path, AuditLog::Options{config.fsync, cipher});
  store->last_compaction_ = clock.now();
  return store;
}

void Store::require_healthy() const {
  if (log_->failed()) {
    throw Error(ErrorCode::IoError, "audit log unavailable; store is refusing operations");
  }
}

void Store::audit(Opcode op, Outcome outcome, std::string_view actor, std::string_view purpose,
                  std::string_view key, std::string payload) {
  AuditEntry e;
  e.ts = clock_.now();
  e.opcode = op;
  e.outcome = outcome;
  e.actor = std::string(actor);
  e.purpose = std::string(purpose);
  e.key = Bytes(key);
  e.payload = std::move(payload);
  log_->append(std::move(e));
}

void Store::reject(Opcode op, ErrorCode code, std::string_view actor, std::string_view purpose,
                   std::string_view key, std::string payload, const std::string& message) {
  auto outcome = outcome_for(code);
  audit(op, outcome, actor, purpose, key, std::move(payload));
  if (outcome == Outcome::Denied) ++denied_total_;
  throw Error(code, message);
}

const AclGrant* Store::effective_grant(std::string_view actor) const {
  if (const auto* g = bootstrap_.find(actor)) return g;
  return grants_.find(actor);
}

Decision Store::check_access(std::string_view actor, OpKind op, std::string_view purpose,
                             const RecordMeta* record) const {
  return gdprkv::check_access(effective_grant(actor), op, purpose, record, clock_.now());
}

bool Store::is_admin(std::string_view actor) const {
  return check_access(actor, OpKind::Admin, {}, nullptr).allowed;
}

void Store::erase_internal(const Bytes& key, Opcode op, std::string_view purpose) {
  const auto* rec = keyspace_.find(key);
  if (!rec) return;
  auto expiry = rec->meta.expiry;
  audit(op, Outcome::Ok, kSystemActor, purpose, key, {});
  keyspace_.erase(key);
  if (op == Opcode::ExpireErase) {
    ++expired_erased_;
    erasure_stats_.record(expiry.value_or(0), clock_.now());
  } else {
    ++forget_erased_;
  }
}

bool Store::passive_check(const Bytes& key) {
  const auto* rec = keyspace_.find(key);
  if (!rec || !rec->meta.expiry || !is_expired(*rec->meta.expiry, clock_.now())) return false;
  erase_internal(key, Opcode::ExpireErase, {});
  return true;
}

PutResult Store::apply_put(Record record, std::string_view actor, std::string_view purpose) {
  std::string payload;
  encode_record_body(payload, record);
  audit(Opcode::Put, Outcome::Ok, actor, purpose, record.key, std::move(payload));
  return keyspace_.upsert(std::move(record)) ? PutResult::Created : PutResult::Updated;
}

PutResult Store::put(const Bytes& key, const Bytes& value, RecordMeta meta, std::string_view actor,
                     std::string_view purpose) {
  require_healthy();
  ++ops_total_;
  const auto now = clock_.now();
  if (key.empty() || meta.owner.empty()) {
    reject(Opcode::Put, ErrorCode::BadMeta, actor, purpose, key, {}, "key and owner must be non-empty");
  }
  auto decision = check_access(actor, OpKind::Write, purpose, nullptr);
  const auto* grant = effective_grant(actor);
  if (!decision.allowed || purpose.empty() || !grant->allows_purpose(purpose)) {
    reject(Opcode::Put, ErrorCode::AccessDenied, actor, purpose, key, {},
           "actor lacks a write grant for this purpose");
  }
  if (!meta.allowed_regions.empty() && !meta.allowed_regions.count(config_.server_region)) {
    reject(Opcode::Put, ErrorCode::RegionDenied, actor, purpose, key, {},
           "record may not reside in region " + config_.server_region);
  }
  if (meta.expiry && is_expired(*meta.expiry, now)) {
    reject(Opcode::Put, ErrorCode::BadTtl, actor, purpose, key, {}, "expiry must lie in the future");
  }
  passive_check(key);
  const auto* existing = keyspace_.find(key);
  meta.created_at = existing ? existing->meta.created_at : now;
  return apply_put(Record{key, value, std::move(meta)}, actor, purpose);
}

PutResult Store::restore_record(Record record, std::string_view actor) {
  require_healthy();
  if (record.key.empty() || record.meta.owner.empty()) {
    reject(Opcode::Put, ErrorCode::BadMeta, actor, "import", record.key, {}, "key and owner must be non-empty");
  }
  if (!is_admin(actor)) {
    reject(Opcode::Put, ErrorCode::AccessDenied, actor, "import", record.key, {}, "import requires admin");
  }
  if (!record.meta.allowed_regions.empty() && !record.meta.allowed_regions.count(config_.server_region)) {
    reject(Opcode::Put, ErrorCode::RegionDenied, actor, "import", record.key, {},
           "record may not reside in region " + config_.server_region);
  }
  if (record.meta.expiry && is_expired(*record.meta.expiry, clock_.now())) {
    reject(Opcode::Put, ErrorCode::BadTtl, actor, "import", record.key, {}, "record already expired");
  }
  passive_check(record.key);
  return apply_put(std::move(record), actor, "import");
}

ReadResult Store::get(const Bytes& key, std::string_view actor, std::string_view purpose) {
  require_healthy();
  ++ops_total_;
  passive_check(key);
  auto base = check_access(actor, OpKind::Read, purpose, nullptr);
  if (!base.allowed || purpose.empty()) {
    reject(Opcode::Get, ErrorCode::AccessDenied, actor, purpose, key, {},
           "actor lacks a read grant for this purpose");
  }
  const auto* rec = keyspace_.find(key);
  if (!rec) reject(Opcode::Get, ErrorCode::NotFound, actor, purpose, key, {}, "no such key");
  auto decision = check_access(actor, OpKind::Read, purpose, &rec->meta);
  if (!decision.allowed) {
    reject(Opcode::Get, decision.reason, actor, purpose, key, {},
           "purpose not permitted for this record");
  }
  audit(Opcode::Get, Outcome::Ok, actor, purpose, key, digest_bytes(sha256(rec->value)));
  return ReadResult{rec->value, rec->meta};
}

RecordMeta Store::get_meta(const Bytes& key, std::string_view actor, std::string_view purpose) {
  require_healthy();
  ++ops_total_;
  passive_check(key);
  auto base = check_access(actor, OpKind::Read, purpose, nullptr);
  if (!base.allowed || purpose.empty()) {
    reject(Opcode::Get, ErrorCode::AccessDenied, actor, purpose, key, {},
           "actor lacks a read grant for this purpose");
  }
  const auto* rec = keyspace_.find(key);
  if (!rec) reject(Opcode::Get, ErrorCode::NotFound, actor, purpose, key, {}, "no such key");
  auto decision = check_access(actor, OpKind::Read, purpose, &rec->meta);
  if (!decision.allowed) {
    reject(Opcode::Get, decision.reason, actor, purpose, key, {},
           "purpose not permitted for this record");
  }
  audit(Opcode::Get, Outcome::Ok, actor, purpose, key, digest_bytes(sha256(format_meta(rec->meta))));
  return rec->meta;
}

bool Store::del(const Bytes& key, std::string_view actor) {
  require_healthy();
  ++ops_total_;
  if (!check_access(actor, OpKind::Delete, {}, nullptr).allowed) {
    reject(Opcode::Del, ErrorCode::AccessDenied, actor, {}, key, {}, "actor lacks a delete grant");
  }
  passive_check(key);
  bool existed = keyspace_.find(key) != nullptr;
  audit(Opcode::Del, existed ? Outcome::Ok : Outcome::NotFound, actor, {}, key, {});
  if (existed) keyspace_.erase(key);
  return existed;
}

void Store::set_ttl(const Bytes& key, Timestamp expiry, std::string_view actor) {
  require_healthy();
  ++ops_total_;
  if (!check_access(actor, OpKind::Write, {}, nullptr).allowed) {
    reject(Opcode::TtlSet, ErrorCode::AccessDenied, actor, {}, key, {}, "actor lacks a write grant");
  }
  passive_check(key);
  if (!keyspace_.find(key)) reject(Opcode::TtlSet, ErrorCode::NotFound, actor, {}, key, {}, "no such key");
  if (is_expired(expiry, clock_.now())) {
    reject(Opcode::TtlSet, ErrorCode::BadTtl, actor, {}, key, {}, "expiry must lie in the future");
  }
  ByteWriter w;
  w.i64(expiry);
  audit(Opcode::TtlSet, Outcome::Ok, actor, {}, key, w.take());
  keyspace_.set_expiry(key, expiry);
}

void Store::clear_ttl(const Bytes& key, std::string_view actor) {
  require_healthy();
  ++ops_total_;
  if (!check_access(actor, OpKind::Write, {}, nullptr).allowed) {
    reject(Opcode::TtlClear, ErrorCode::AccessDenied, actor, {}, key, {}, "actor lacks a write grant");
  }
  passive_check(key);
  if (!keyspace_.find(key)) reject(Opcode::TtlClear, ErrorCode::NotFound, actor, {}, key, {}, "no such key");
  audit(Opcode::TtlClear, Outcome::Ok, actor, {}, key, {});
  keyspace_.set_expiry(key, std::nullopt);
}

void Store::grant(AclGrant grant, std::string_view admin_actor) {
  require_healthy();
  ++ops_total_;
  if (!is_admin(admin_actor)) {
    reject(Opcode::Grant, ErrorCode::AccessDenied, admin_actor, {}, grant.actor, {},
           "granting requires an admin grant");
  }
  if (grant.actor.empty() || grant.actor.front() == '@') {
    reject(Opcode::Grant, ErrorCode::BadMeta, admin_actor, {}, grant.actor, {}, "invalid actor token");
  }
  std::string payload;
  encode_grant_body(payload, grant);
  audit(Opcode::Grant, Outcome::Ok, admin_actor, {}, grant.actor, std::move(payload));
  grants_.put(std::move(grant));
}

bool Store::revoke(std::string_view actor, std::string_view admin_actor) {
  require_healthy();
  ++ops_total_;
  if (!is_admin(admin_actor)) {
    reject(Opcode::Revoke, ErrorCode::AccessDenied, admin_actor, {}, actor, {},
           "revoking requires an admin grant");
  }
  bool existed = grants_.find(actor) != nullptr;
  audit(Opcode::Revoke, existed ? Outcome::Ok : Outcome::NotFound, admin_actor, {}, actor, {});
  grants_.erase(actor);
  return existed;
}

std::vector<Bytes> Store::keys_by_owner(std::string_view subject) const {
  return keyspace_.keys_by_owner(subject, clock_.now());
}

std::vector<Bytes> Store::keys_by_purpose(std::string_view purpose) const {
  return keyspace_.keys_by_purpose(purpose, clock_.now());
}

std::size_t Store::lazy_tick() {
  require_healthy();
  const auto now = clock_.now();
  auto expired = [&](const Bytes& k) {
    const auto* r = keyspace_.find(k);
    return r && r->meta.expiry && is_expired(*r->meta.expiry, now);
  };
  auto erase = [&](const Bytes& k) { erase_internal(k, Opcode::ExpireErase, {}); };
  return lazy_expire_tick(keyspace_.expire_set(), config_.lazy, rng_, expired, erase);
}

std::size_t Store::eager_tick() {
  require_healthy();
  const auto now = clock_.now();
  return eager_expire_sweep(keyspace_.indices().by_expiry, now,
                            [&](const Bytes& k, Timestamp) { erase_internal(k, Opcode::ExpireErase, {}); });
}

std::size_t Store::expiry_tick() {
  return config_.expiry_strategy == ExpiryStrategy::Eager ? eager_tick() : lazy_tick();
}

void Store::maintenance() {
  expiry_tick();
  if (config_.compaction_interval_s > 0 &&
      clock_.now() - last_compaction_ >= config_.compaction_interval_s * kMicrosPerSecond) {
    compact_internal();
  }
}

CompactionResult Store::compact(std::string_view actor) {
  require_healthy();
  ++ops_total_;
  if (!is_admin(actor)) {
    reject(Opcode::Compact, ErrorCode::AccessDenied, actor, {}, {}, {}, "compaction requires admin");
  }
  CompactionInput in{keyspace_.sorted_records(), grants_.list(), clock_.now(), std::string(actor)};
  auto res = log_->compact(in);
  ++compactions_;
  last_compaction_ = clock_.now();
  return res;
}

CompactionResult Store::compact_internal() {
  require_healthy();
  CompactionInput in{keyspace_.sorted_records(), grants_.list(), clock_.now(), std::string(kSystemActor)};
  auto res = log_->compact(in);
  ++compactions_;
  last_compaction_ = clock_.now();
  return res;
}

StoreMetrics Store::metrics() const {
  StoreMetrics m;
  m.ops_total = ops_total_;
  m.denied_total = denied_total_;
  m.expired_erased = expired_erased_;
  m.forget_erased = forget_erased_;
  m.pending_expired = keyspace_.pending_expired(clock_.now());
  m.log_entries = log_->entries();
  m.log_bytes = log_->bytes();
  m.compactions = compactions_;
  m.records = keyspace_.size();
  m.max_erasure_delay = erasure_stats_.max_delay();
  m.mean_erasure_delay = erasure_stats_.mean_delay();
  m.fsync_mode = config_.fsync.to_string();
  m.expiry_strategy = std::string(to_string(config_.expiry_strategy));
  return m;
}

}  // namespace gdprkv
