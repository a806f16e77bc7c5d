#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "gdprkv/audit_log.hpp"
#include "gdprkv/cipher.hpp"
#include "gdprkv/expiry.hpp"

namespace gdprkv {

/// When erasure requests reach the persistence layer: immediately (forget
/// rewrites the log at once) or at the next periodic compaction.
enum class ErasureMode { Realtime, Eventual };

std::string_view to_string(ErasureMode m);
ErasureMode parse_erasure_mode(std::string_view text);

/// Deployment knobs placing a store on the real-time <-> eventual
/// compliance spectrum, plus server settings.
struct ComplianceConfig {
  std::string log_path = "gdprkv.log";
  FsyncPolicy fsync = FsyncPolicy::every(1000);
  ExpiryStrategy expiry_strategy = ExpiryStrategy::Lazy;
  LazyParams lazy;
  ErasureMode erasure_mode = ErasureMode::Eventual;
  std::int64_t compaction_interval_s = 3600;  // 0 disables periodic compaction
  std::string server_region = "eu-west";
  std::string cipher = "none";
  std::string key_file;
  std::uint64_t rng_seed = 0x5eed;

  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 7979;
  /// actor -> shared secret for AUTH.
  std::map<std::string, std::string, std::less<>> auth;
  /// Actors holding an implicit admin grant (all ops, any purpose).
  TokenSet admins;

  std::shared_ptr<Cipher> make_cipher() const;
  /// `key=value` lines echoing the knobs (no secrets).
  std::string echo() const;
};

/// Parses "key = value" lines; '#' starts a comment. Recognized keys:
/// log_path, fsync_mode, fsync_interval_ms, expiry_strategy,
/// expiry_tick_ms, expiry_sample_size, expiry_repeat_threshold,
/// erasure_mode, compaction_interval_s, server_region, cipher, key_file,
/// rng_seed, bind, port, auth (value "actor:secret"), admin.
/// Throws `Error(BadConfig)` with the offending line number.
ComplianceConfig parse_config(std::string_view text);
ComplianceConfig load_config(const std::string& path);

}  // namespace gdprkv
