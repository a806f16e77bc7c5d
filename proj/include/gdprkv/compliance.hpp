#pragma once

#include <string>
#include <vector>

#include "gdprkv/store.hpp"

namespace gdprkv {

inline constexpr std::string_view kIndefiniteStorage = "indefinite-pending-policy";

struct SubjectReportEntry {
  Bytes key;
  TokenSet purposes;
  TokenSet objections;
  TokenSet recipients;
  std::string origin;
  std::string storage_period;  // expiry timestamp or kIndefiniteStorage
  Timestamp created_at = 0;

  friend bool operator==(const SubjectReportEntry&, const SubjectReportEntry&) = default;
};

struct SubjectReport {
  std::string subject;
  std::vector<SubjectReportEntry> entries;  // ascending by key
  Timestamp generated_at = 0;

  /// Text rendering: a header line then one line per entry.
  std::string render() const;
};

/// Right of access. `actor` must be the subject or an admin.
SubjectReport subject_access(Store& store, std::string_view subject, std::string_view actor);

/// Portability export: one line per live record of the subject, ascending
/// by key, fields in fixed order
///   key value_b64 owner purposes objections expiry_ts origin recipients created_at
/// separated by tabs, each as `name=value` with tokens percent-escaped and
/// sets comma-joined in ascending order; expiry_ts is `-` when unset.
std::string export_portable(Store& store, std::string_view subject, std::string_view actor);

/// Loads an export stream (admin only), preserving created_at. Returns the
/// number of records written.
std::size_t import_portable(Store& store, std::string_view stream, std::string_view actor);

/// Parses an export stream without touching a store.
std::vector<Record> parse_portable(std::string_view stream);

/// Right to be forgotten: erases every record of the subject. In realtime
/// erasure mode the log is compacted before returning.
std::size_t forget_subject(Store& store, std::string_view subject, std::string_view actor);

/// Right to object: adds `purpose` to the objections of every record of
/// the subject.
std::size_t object_subject(Store& store, std::string_view subject, std::string_view purpose,
                           std::string_view actor);

/// Audit-trail extraction for breach notification (admin only). The query
/// itself is audited after the matching entries are collected.
std::vector<AuditEntry> breach_trail(Store& store, const AuditFilter& filter, std::string_view actor);

}  // namespace gdprkv
