#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gdprkv {

/// Microseconds since the Unix epoch.
using Timestamp = std::int64_t;

/// Opaque byte string. Keys and values may contain arbitrary bytes.
using Bytes = std::string;

/// Ordered token set. Iteration order is bytewise ascending, which gives
/// every listing and serialization a deterministic order for free.
using TokenSet = std::set<std::string, std::less<>>;

constexpr Timestamp kMicrosPerMilli = 1000;
constexpr Timestamp kMicrosPerSecond = 1000 * 1000;

enum class ErrorCode {
  AccessDenied,
  PurposeDenied,
  RegionDenied,
  NotFound,
  BadMeta,
  BadTtl,
  IoError,
  CorruptLog,
  ProtoError,
  NoAuth,
  Arity,
  UnknownCommand,
  BadSpec,
  BadConfig,
  ConnectError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Time source. Every component that reads the time takes one of these so
/// tests can drive time explicitly.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start = 0) : now_(start) {}

  Timestamp now() const override { return now_.load(std::memory_order_relaxed); }
  void set(Timestamp t) { now_.store(t, std::memory_order_relaxed); }
  void advance(Timestamp delta) { now_.fetch_add(delta, std::memory_order_relaxed); }

 private:
  std::atomic<Timestamp> now_;
};

/// A record with an expiry is expired once the clock reaches the expiry
/// instant. Used by every read path, listing and expiry strategy.
constexpr bool is_expired(Timestamp expiry, Timestamp now) noexcept {
  return expiry <= now;
}

}  // namespace gdprkv
