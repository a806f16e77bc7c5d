#pragma once

// Append-only audit journal.
//
// On-disk layout (little-endian):
//   file    := "GKVL" u16(version=1) unit*
//   unit    := frame                        (null cipher)
//            | u32(sealed_len) sealed(frame) (any other cipher)
//   frame   := u32(frame_len) body u32(crc32_ieee(body))
//   body    := u64 seq | u64 ts_us | u8 opcode | u8 outcome
//              | u16 actor_len actor | u16 purpose_len purpose
//              | u32 key_len key | u32 payload_len payload
// frame_len counts every byte after the frame_len field, crc included.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gdprkv/cipher.hpp"
#include "gdprkv/common.hpp"
#include "gdprkv/record.hpp"

namespace gdprkv {

enum class Opcode : std::uint8_t {
  Put = 1,
  Get = 2,
  Del = 3,
  TtlSet = 4,
  TtlClear = 5,
  Grant = 6,
  Revoke = 7,
  Object = 8,
  Forget = 9,
  ExpireErase = 10,
  Compact = 11,
  Export = 12,
  AccessReport = 13,
  AuditQuery = 14,
};

enum class Outcome : std::uint8_t { Ok = 0, Denied = 1, NotFound = 2, Error = 3 };

std::string_view to_string(Opcode op);
std::string_view to_string(Outcome outcome);
Outcome outcome_for(ErrorCode code);

/// Whether replay must apply an entry with this opcode.
bool is_mutation(Opcode op);

/// Internal actors. Real actor tokens never start with '@'.
inline constexpr std::string_view kSystemActor = "@system";
inline constexpr std::string_view kSnapshotActor = "@snapshot";

struct AuditEntry {
  std::uint64_t seq = 0;
  Timestamp ts = 0;
  Opcode opcode = Opcode::Get;
  Outcome outcome = Outcome::Ok;
  std::string actor;
  std::string purpose;  // empty when absent
  Bytes key;            // empty when absent
  Bytes payload;

  /// Entries written by compaction to carry live state; not operations.
  bool is_snapshot() const { return actor == kSnapshotActor; }
  /// A successful compaction; later entries start a new segment.
  bool is_compaction_marker() const { return opcode == Opcode::Compact && outcome == Outcome::Ok; }

  friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

/// One-line rendering for query output.
std::string format_entry(const AuditEntry& e);

// Payload helpers for subject-level operations (OBJECT, FORGET, EXPORT,
// ACCESSRPT): u16 subject | u64 count | u16 digest_len digest.
std::string encode_subject_payload(std::string_view subject, std::uint64_t count,
                                   std::string_view digest = {});
/// Returns nullopt when the payload is not a subject payload (e.g. redacted).
std::optional<std::string> decode_subject_payload(std::string_view payload);
bool is_subject_op(Opcode op);

inline constexpr std::string_view kLogMagic = "GKVL";
inline constexpr std::uint16_t kLogVersion = 1;
inline constexpr std::size_t kLogHeaderSize = 6;

std::string log_header();
/// Encodes a complete frame, frame_len prefix and crc included.
std::string encode_frame(const AuditEntry& e);
void encode_frame_into(std::string& out, const AuditEntry& e);

struct FsyncPolicy {
  enum class Mode { Always, Every, None };
  Mode mode = Mode::Every;
  std::uint32_t interval_ms = 1000;

  static FsyncPolicy always() { return {Mode::Always, 0}; }
  static FsyncPolicy every(std::uint32_t ms) { return {Mode::Every, ms}; }
  static FsyncPolicy none() { return {Mode::None, 0}; }

  /// Accepts "always", "none", "every", "every:<ms>" and "everysec".
  static FsyncPolicy parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const FsyncPolicy&, const FsyncPolicy&) = default;
};

struct LogViolation {
  enum class Kind { BadHeader, Truncated, Crc, Decode, SeqGap, TsRegression };
  Kind kind;
  std::uint64_t seq = 0;     // seq expected at the violating frame
  std::uint64_t offset = 0;  // byte offset of the violating unit
  std::string message;
};

std::string_view to_string(LogViolation::Kind kind);

struct VerifyReport {
  std::uint64_t entries = 0;
  std::uint64_t last_good_seq = 0;
  std::uint64_t bytes = 0;
  Timestamp last_ts = 0;
  std::optional<LogViolation> violation;

  bool ok() const { return !violation.has_value(); }
};

using EntrySink = std::function<void(AuditEntry&&)>;

/// Parses `data` frame by frame, handing each good entry to `sink`, and
/// stops at the first violation.
VerifyReport scan_log(std::string_view data, const Cipher& cipher, const EntrySink& sink = {});

std::string read_file(const std::string& path);
VerifyReport verify_log(const std::string& path, const Cipher& cipher);

/// All entries; throws `Error(CorruptLog)` naming the last good seq.
std::vector<AuditEntry> read_log(const std::string& path, const Cipher& cipher);
std::vector<AuditEntry> read_log_bytes(std::string_view data, const Cipher& cipher);

struct AuditFilter {
  std::optional<std::string> subject;
  std::optional<Bytes> key;
  std::optional<std::string> actor;
  std::optional<Timestamp> from;  // inclusive
  std::optional<Timestamp> to;    // inclusive
};

/// Entries matching every provided filter, in seq order. Subjects are
/// resolved through the key -> owner mapping carried by PUT payloads and
/// through the subject field of subject-level operations.
std::vector<AuditEntry> query_entries(const std::vector<AuditEntry>& entries,
                                      const AuditFilter& filter);

struct CompactionInput {
  std::vector<Record> records;    // live records, any order
  std::vector<AclGrant> grants;   // grant table
  Timestamp ts = 0;
  std::string actor;              // who triggered the compaction
};

struct CompactionResult {
  std::uint64_t history_entries = 0;
  std::uint64_t snapshot_entries = 0;
  std::uint64_t redacted_entries = 0;
  std::uint64_t forgotten_subjects = 0;
  std::uint64_t bytes_before = 0;
  std::uint64_t bytes_after = 0;
};

/// Append-only writer for one log file.
///
/// Fsync modes:
///  - always: every append is written and fdatasync'ed before returning.
///  - every(i): every append is written to the OS; a background thread
///    fdatasyncs every i ms.
///  - none: appends are buffered in process (64 KiB) and written without
///    any fdatasync.
///
/// Any IO failure is sticky: the log refuses further appends.
class AuditLog {
 public:
  struct Options {
    FsyncPolicy fsync = FsyncPolicy::every(1000);
    std::shared_ptr<Cipher> cipher = std::make_shared<NullCipher>();
  };

  /// Opens or creates `path`. An existing file must verify cleanly.
  static std::unique_ptr<AuditLog> open(const std::string& path, Options options);

  ~AuditLog();
  AuditLog(const AuditLog&) = delete;
  AuditLog& operator=(const AuditLog&) = delete;

  /// Assigns the next seq (and clamps ts to keep it non-decreasing).
  /// Returns the assigned seq. Throws `Error(IoError)`.
  std::uint64_t append(AuditEntry entry);

  /// Moves buffered bytes to the OS.
  void flush();
  /// flush + fdatasync.
  void sync();

  /// Rewrites the log: history entries are kept with erased data redacted,
  /// then a COMPACT marker, then one synthetic entry per grant and live
  /// record. The old file is replaced atomically; on failure it is kept.
  CompactionResult compact(const CompactionInput& input);

  std::uint64_t last_seq() const { return last_seq_; }
  std::uint64_t entries() const { return last_seq_; }
  std::uint64_t bytes() const { return written_.load() + buffer_.size(); }
  /// Bytes known to be on stable storage.
  std::uint64_t durable_bytes() const { return durable_.load(); }
  Timestamp last_ts() const { return last_ts_; }
  bool failed() const { return failed_.load(); }
  const std::string& path() const { return path_; }
  const FsyncPolicy& fsync_policy() const { return options_.fsync; }
  const Cipher& cipher() const { return *options_.cipher; }

 private:
  AuditLog(std::string path, Options options);

  void open_fd(bool truncate);
  void close_fd();
  void write_all(std::string_view bytes);
  void start_flusher();
  void stop_flusher();
  void flusher_loop();
  [[noreturn]] void fail(const std::string& what);

  std::string path_;
  Options options_;
  int fd_ = -1;
  std::uint64_t last_seq_ = 0;
  Timestamp last_ts_ = 0;
  std::string buffer_;
  std::string scratch_;
  std::atomic<std::uint64_t> written_{0};
  std::atomic<std::uint64_t> durable_{0};
  std::atomic<bool> failed_{false};

  std::thread flusher_;
  std::mutex flusher_mu_;
  std::condition_variable flusher_cv_;
  bool stop_ = false;
};

}  // namespace gdprkv
