#include <fcntl.h>
#include <openssl/rand.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <unordered_map>
#include <unordered_set>

#include "gdprkv/audit_log.hpp"
#include "gdprkv/codec.hpp"

namespace gdprkv {

namespace {

constexpr std::size_t kBufferLimit = 64 * 1024;

void append_unit(std::string& out, std::string_view frame, Cipher& cipher) {
  if (cipher.is_null()) {
    out.append(frame);
    return;
  }
  auto sealed = cipher.seal(frame);
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(sealed.size()));
  w.raw(sealed);
}

std::string errno_message(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

void fsync_parent_dir(const std::string& path) {
  auto dir = std::filesystem::path(path).parent_path();
  if (dir.empty()) dir = ".";
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

AuditLog::AuditLog(std::string path, Options options)
    : path_(std::move(path)), options_(std::move(options)) {
  if (!options_.cipher) options_.cipher = std::make_shared<NullCipher>();
}

std::unique_ptr<AuditLog> AuditLog::open(const std::string& path, Options options) {
  std::unique_ptr<AuditLog> log(new AuditLog(path, std::move(options)));
  std::error_code ec;
  auto size = std::filesystem::exists(path, ec) ? std::filesystem::file_size(path, ec) : 0;
  if (size > 0) {
    auto rep = verify_log(path, *log->options_.cipher);
    if (!rep.ok()) {
      throw Error(ErrorCode::CorruptLog,
                  "cannot append to " + path + ": " + rep.violation->message + " (last good seq " +
                      std::to_string(rep.last_good_seq) + ")");
    }
    log->last_seq_ = rep.last_good_seq;
    log->last_ts_ = rep.last_ts;
    log->open_fd(false);
    log->written_ = size;
    log->durable_ = size;
  } else {
    log->open_fd(true);
    log->write_all(log_header());
    log->written_ = kLogHeaderSize;
    if (::fdatasync(log->fd_) != 0) log->fail(errno_message("fdatasync " + path));
    log->durable_ = kLogHeaderSize;
  }
  log->start_flusher();
  return log;
}

AuditLog::~AuditLog() {
  stop_flusher();
  if (fd_ >= 0 && !failed_) {
    try {
      sync();
    } catch (const Error&) {
    }
  }
  close_fd();
}

void AuditLog::open_fd(bool truncate) {
  int flags = O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC | (truncate ? O_TRUNC : 0);
  fd_ = ::open(path_.c_str(), flags, 0644);
  if (fd_ < 0) {
    failed_ = true;
    throw Error(ErrorCode::IoError, errno_message("open " + path_));
  }
}

void AuditLog::close_fd() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void AuditLog::fail(const std::string& what) {
  failed_ = true;
  throw Error(ErrorCode::IoError, what);
}

void AuditLog::write_all(std::string_view bytes) {
  while (!bytes.empty()) {
    auto n = ::write(fd_, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(errno_message("write " + path_));
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::uint64_t AuditLog::append(AuditEntry entry) {
  if (failed_) throw Error(ErrorCode::IoError, "audit log " + path_ + " has failed; refusing writes");
  entry.seq = last_seq_ + 1;
  entry.ts = std::max(entry.ts, last_ts_);

  scratch_.clear();
  encode_frame_into(scratch_, entry);

  switch (options_.fsync.mode) {
    case FsyncPolicy::Mode::None:
      append_unit(buffer_, scratch_, *options_.cipher);
      if (buffer_.size() >= kBufferLimit) flush();
      break;
    case FsyncPolicy::Mode::Every: {
      std::string unit;
      append_unit(unit, scratch_, *options_.cipher);
      write_all(unit);
      written_ += unit.size();
      break;
    }
    case FsyncPolicy::Mode::Always: {
      std::string unit;
      append_unit(unit, scratch_, *options_.cipher);
      write_all(unit);
      written_ += unit.size();
      if (::fdatasync(fd_) != 0) fail(errno_message("fdatasync " + path_));
      durable_ = written_.load();
      break;
    }
  }
  last_seq_ = entry.seq;
  last_ts_ = entry.ts;
  return entry.seq;
}

void AuditLog::flush() {
  if (buffer_.empty()) return;
  if (failed_) throw Error(ErrorCode::IoError, "audit log " + path_ + " has failed");
  write_all(buffer_);
  written_ += buffer_.size();
  buffer_.clear();
}

void AuditLog::sync() {
  flush();
  auto w = written_.load();
  if (::fdatasync(fd_) != 0) fail(errno_message("fdatasync " + path_));
  durable_ = w;
}

void AuditLog::start_flusher() {
  if (options_.fsync.mode != FsyncPolicy::Mode::Every) return;
  {
    std::lock_guard lock(flusher_mu_);
    stop_ = false;
  }
  flusher_ = std::thread([this] { flusher_loop(); });
}

void AuditLog::stop_flusher() {
  if (!flusher_.joinable()) return;
  {
    std::lock_guard lock(flusher_mu_);
    stop_ = true;
  }
  flusher_cv_.notify_all();
  flusher_.join();
}

void AuditLog::flusher_loop() {
  const auto interval = std::chrono::milliseconds(options_.fsync.interval_ms);
  std::unique_lock lock(flusher_mu_);
  while (!stop_) {
    flusher_cv_.wait_for(lock, interval, [this] { return stop_; });
    if (stop_) break;
    auto w = written_.load();
    if (w == durable_.load()) continue;
    if (::fdatasync(fd_) != 0) {
      failed_ = true;
      break;
    }
    durable_ = w;
  }
}

CompactionResult AuditLog::compact(const CompactionInput& input) {
  if (failed_) throw Error(ErrorCode::IoError, "audit log " + path_ + " has failed");
  stop_flusher();
  struct Restart {
    AuditLog* self;
    ~Restart() { self->start_flusher(); }
  } restart{this};

  flush();
  CompactionResult result;
  result.bytes_before = written_.load();
  auto old_entries = read_log(path_, *options_.cipher);

  // Subjects forgotten since the last compaction. Earlier ones were
  // redacted by the compaction that followed them.
  std::unordered_set<std::string> forgotten;
  std::size_t segment_start = 0;
  for (std::size_t i = 0; i < old_entries.size(); ++i) {
    if (old_entries[i].is_compaction_marker()) segment_start = i + 1;
  }
  for (std::size_t i = segment_start; i < old_entries.size(); ++i) {
    const auto& e = old_entries[i];
    if (e.opcode == Opcode::Forget && e.outcome == Outcome::Ok) {
      if (auto s = decode_subject_payload(e.payload)) forgotten.insert(*s);
    }
  }
  result.forgotten_subjects = forgotten.size();

  unsigned char salt_bytes[16];
  if (RAND_bytes(salt_bytes, sizeof(salt_bytes)) != 1) {
    throw Error(ErrorCode::IoError, "RAND_bytes failed");
  }
  const std::string salt(reinterpret_cast<char*>(salt_bytes), sizeof(salt_bytes));
  auto redact = [&](std::string_view x) -> std::string {
    if (x.empty()) return {};
    return "~" + to_hex(digest_bytes(sha256(salt, x)));
  };
  auto is_forgotten = [&](const std::string& s) { return forgotten.count(s) > 0; };

  std::string out = log_header();
  std::string frame;
  std::uint64_t seq = 0;
  Timestamp ts = 0;
  auto emit = [&](AuditEntry e) {
    e.seq = ++seq;
    e.ts = std::max(e.ts, ts);
    ts = e.ts;
    frame.clear();
    encode_frame_into(frame, e);
    append_unit(out, frame, *options_.cipher);
  };

  // key -> owner at the point each entry was written.
  std::unordered_map<std::string, std::string> owners;
  for (auto& e : old_entries) {
    bool belongs = false;
    std::optional<Record> put_image;
    if (is_subject_op(e.opcode)) {
      if (auto s = decode_subject_payload(e.payload)) belongs = is_forgotten(*s);
    } else if (!e.key.empty()) {
      if (auto it = owners.find(e.key); it != owners.end()) belongs = is_forgotten(it->second);
      if (e.opcode == Opcode::Put && e.outcome == Outcome::Ok) {
        try {
          put_image = decode_record_body(e.key, e.payload);
          belongs = belongs || is_forgotten(put_image->meta.owner);
          owners[e.key] = put_image->meta.owner;
        } catch (const Error&) {
          owners.erase(e.key);
        }
      }
      if ((e.opcode == Opcode::Del || e.opcode == Opcode::ExpireErase) && e.outcome == Outcome::Ok) {
        owners.erase(e.key);
      }
      // Grant and revoke entries are keyed by the grantee.
      belongs = belongs || is_forgotten(e.key);
    }
    if (e.is_compaction_marker()) owners.clear();
    if (e.is_snapshot()) continue;

    if (is_forgotten(e.actor)) e.actor = redact(e.actor);
    if (belongs) {
      e.key = redact(e.key);
      e.payload = redact(e.payload);
      ++result.redacted_entries;
    } else if (put_image) {
      put_image->value = redact(put_image->value);
      e.payload.clear();
      encode_record_body(e.payload, *put_image);
    }
    emit(std::move(e));
    ++result.history_entries;
  }

  auto records = input.records;
  std::sort(records.begin(), records.end(),
            [](const Record& a, const Record& b) { return a.key < b.key; });
  auto grants = input.grants;
  std::sort(grants.begin(), grants.end(),
            [](const AclGrant& a, const AclGrant& b) { return a.actor < b.actor; });

  AuditEntry marker;
  marker.ts = std::max(input.ts, ts);
  marker.opcode = Opcode::Compact;
  marker.outcome = Outcome::Ok;
  marker.actor = input.actor.empty() ? std::string(kSystemActor) : input.actor;
  {
    ByteWriter w(marker.payload);
    w.u64(result.history_entries);
    w.u64(records.size());
    w.u64(grants.size());
  }
  emit(std::move(marker));

  for (const auto& g : grants) {
    AuditEntry e;
    e.ts = ts;
    e.opcode = Opcode::Grant;
    e.actor = std::string(kSnapshotActor);
    e.key = g.actor;
    encode_grant_body(e.payload, g);
    emit(std::move(e));
  }
  for (const auto& r : records) {
    AuditEntry e;
    e.ts = ts;
    e.opcode = Opcode::Put;
    e.actor = std::string(kSnapshotActor);
    e.key = r.key;
    encode_record_body(e.payload, r);
    emit(std::move(e));
  }
  result.snapshot_entries = grants.size() + records.size();

  const std::string tmp = path_ + ".compact.tmp";
  int tfd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (tfd < 0) throw Error(ErrorCode::IoError, errno_message("open " + tmp));
  std::string_view rest = out;
  bool ok = true;
  while (ok && !rest.empty()) {
    auto n = ::write(tfd, rest.data(), rest.size());
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) ok = false;
    else rest.remove_prefix(static_cast<std::size_t>(n));
  }
  ok = ok && ::fdatasync(tfd) == 0;
  ::close(tfd);
  if (!ok || std::rename(tmp.c_str(), path_.c_str()) != 0) {
    auto msg = errno_message("compaction of " + path_);
    std::remove(tmp.c_str());
    throw Error(ErrorCode::IoError, msg);
  }
  fsync_parent_dir(path_);

  close_fd();
  open_fd(false);
  last_seq_ = seq;
  last_ts_ = ts;
  written_ = out.size();
  durable_ = out.size();
  result.bytes_after = out.size();
  return result;
}

}  // namespace gdprkv
