#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gdprkv/access.hpp"
#include "gdprkv/audit_log.hpp"
#include "gdprkv/config.hpp"
#include "gdprkv/expiry.hpp"
#include "gdprkv/keyspace.hpp"

namespace gdprkv {

/// State rebuilt from a log.
struct ReplayedState {
  Keyspace keyspace;
  GrantTable grants;
  std::uint64_t last_seq = 0;
  std::uint64_t entries = 0;
};

/// Applies the mutation entries of `entries` in order. Entries before the
/// last COMPACT marker are history and are skipped; read entries and
/// failed operations change nothing.
ReplayedState replay_entries(const std::vector<AuditEntry>& entries);
/// Throws `Error(CorruptLog)` naming the last good seq.
ReplayedState replay_log(const std::string& path, const Cipher& cipher);

/// Deterministic binary dump of keyspace plus grant table.
std::string dump_state(const Keyspace& keyspace, const GrantTable& grants);

struct StoreMetrics {
  std::uint64_t ops_total = 0;
  std::uint64_t denied_total = 0;
  std::uint64_t expired_erased = 0;
  std::uint64_t forget_erased = 0;
  std::uint64_t pending_expired = 0;
  std::uint64_t log_entries = 0;
  std::uint64_t log_bytes = 0;
  std::uint64_t compactions = 0;
  std::uint64_t records = 0;
  Timestamp max_erasure_delay = 0;
  double mean_erasure_delay = 0.0;
  std::string fsync_mode;
  std::string expiry_strategy;

  /// "name=value" lines.
  std::string render() const;
};

enum class PutResult { Created, Updated };

struct ReadResult {
  Bytes value;
  RecordMeta meta;
};

/// The GDPR-aware keyspace. Every client-visible operation writes exactly
/// one audit entry before it takes effect or returns; a failed audit write
/// aborts the operation and leaves the store refusing all further work.
///
/// Not thread-safe: callers serialize all access (see Server).
class Store {
 public:
  /// Opens (replaying) or creates the log at `config.log_path`.
  static std::unique_ptr<Store> open(const ComplianceConfig& config, const Clock& clock);

  PutResult put(const Bytes& key, const Bytes& value, RecordMeta meta, std::string_view actor,
                std::string_view purpose);
  ReadResult get(const Bytes& key, std::string_view actor, std::string_view purpose);
  RecordMeta get_meta(const Bytes& key, std::string_view actor, std::string_view purpose);
  bool del(const Bytes& key, std::string_view actor);
  void set_ttl(const Bytes& key, Timestamp expiry, std::string_view actor);
  void clear_ttl(const Bytes& key, std::string_view actor);

  void grant(AclGrant grant, std::string_view admin_actor);
  bool revoke(std::string_view actor, std::string_view admin_actor);

  /// Pure decision for `actor` against `record` (null for key-less checks).
  Decision check_access(std::string_view actor, OpKind op, std::string_view purpose,
                        const RecordMeta* record) const;
  bool is_admin(std::string_view actor) const;

  std::vector<Bytes> keys_by_owner(std::string_view subject) const;
  std::vector<Bytes> keys_by_purpose(std::string_view purpose) const;

  /// Erases `key` if its expiry has passed. Returns true when erased.
  bool passive_check(const Bytes& key);
  std::size_t lazy_tick();
  std::size_t eager_tick();
  /// Runs the configured strategy.
  std::size_t expiry_tick();
  /// Expiry tick plus periodic compaction when due.
  void maintenance();

  /// Client-triggered compaction (admin only).
  CompactionResult compact(std::string_view actor);
  /// Compaction triggered by the store itself.
  CompactionResult compact_internal();

  StoreMetrics metrics() const;
  std::string dump() const { return dump_state(keyspace_, grants_); }

  const Keyspace& keyspace() const { return keyspace_; }
  const GrantTable& grants() const { return grants_; }
  const ErasureStats& erasure_stats() const { return erasure_stats_; }
  ErasureStats& erasure_stats() { return erasure_stats_; }
  const ComplianceConfig& config() const { return config_; }
  const Clock& clock() const { return clock_; }
  AuditLog& log() { return *log_; }
  const AuditLog& log() const { return *log_; }
  std::uint64_t internal_erasures() const { return expired_erased_ + forget_erased_; }

  // Building blocks for subject-level operations (compliance.hpp).

  /// Counts one client command.
  void count_command() { ++ops_total_; }
  void audit(Opcode op, Outcome outcome, std::string_view actor, std::string_view purpose,
             std::string_view key, std::string payload);
  /// Audits the failure and throws `Error(code)`.
  [[noreturn]] void reject(Opcode op, ErrorCode code, std::string_view actor,
                           std::string_view purpose, std::string_view key, std::string payload,
                           const std::string& message);
  /// Audited erasure of one record by the store itself.
  void erase_internal(const Bytes& key, Opcode op, std::string_view purpose);
  void add_objection(const Bytes& key, const std::string& purpose) {
    keyspace_.add_objection(key, purpose);
  }
  /// Put used by portable import: keeps created_at, no purpose check.
  PutResult restore_record(Record record, std::string_view actor);
  Keyspace& mutable_keyspace() { return keyspace_; }

 private:
  Store(const ComplianceConfig& config, const Clock& clock);

  const AclGrant* effective_grant(std::string_view actor) const;
  void require_healthy() const;
  PutResult apply_put(Record record, std::string_view actor, std::string_view purpose);

  ComplianceConfig config_;
  const Clock& clock_;
  std::unique_ptr<AuditLog> log_;
  Keyspace keyspace_;
  GrantTable grants_;
  GrantTable bootstrap_;
  ErasureStats erasure_stats_;
  std::mt19937_64 rng_;
  Timestamp last_compaction_ = 0;

  std::atomic<std::uint64_t> ops_total_{0};
  std::atomic<std::uint64_t> denied_total_{0};
  std::atomic<std::uint64_t> expired_erased_{0};
  std::atomic<std::uint64_t> forget_erased_{0};
  std::atomic<std::uint64_t> compactions_{0};
};

}  // namespace gdprkv
