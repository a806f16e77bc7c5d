#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gdprkv/expiry.hpp"
#include "gdprkv/record.hpp"

namespace gdprkv {

using KeySet = std::set<Bytes, std::less<>>;

/// Secondary indices over the keyspace. Tokens with no keys are removed,
/// so each index equals the corresponding full-scan computation.
struct IndexSet {
  std::map<std::string, KeySet, std::less<>> by_owner;
  std::map<std::string, KeySet, std::less<>> by_purpose;  // whitelist purposes
  std::set<std::pair<Timestamp, Bytes>> by_expiry;

  friend bool operator==(const IndexSet&, const IndexSet&) = default;
};

/// Records plus their indices and the expire-flagged set. Pure data
/// structure: no access control, no auditing.
class Keyspace {
 public:
  const Record* find(std::string_view key) const;

  /// Inserts or replaces; returns true when the key was new.
  bool upsert(Record record);
  std::optional<Record> erase(std::string_view key);
  /// Returns false when the key does not exist.
  bool set_expiry(std::string_view key, std::optional<Timestamp> expiry);
  bool add_objection(std::string_view key, const std::string& purpose);

  std::size_t size() const { return records_.size(); }
  const std::unordered_map<Bytes, Record>& records() const { return records_; }
  const IndexSet& indices() const { return idx_; }
  ExpireSet<Bytes>& expire_set() { return expire_set_; }
  const ExpireSet<Bytes>& expire_set() const { return expire_set_; }

  /// Every indexed key of `owner`, expired or not, ascending.
  std::vector<Bytes> all_keys_of(std::string_view owner) const;
  /// Live (unexpired) keys of `owner`, ascending.
  std::vector<Bytes> keys_by_owner(std::string_view owner, Timestamp now) const;
  /// Live keys whose record may be processed for `purpose` (whitelisted,
  /// not objected to), ascending.
  std::vector<Bytes> keys_by_purpose(std::string_view purpose, Timestamp now) const;
  /// Number of keys whose expiry has passed but which are still stored.
  std::size_t pending_expired(Timestamp now) const;

  /// Records ascending by key, for snapshots.
  std::vector<Record> sorted_records() const;
  /// Deterministic binary rendering of all records.
  std::string dump() const;

  void clear();

 private:
  void index(const Record& r);
  void unindex(const Record& r);

  std::unordered_map<Bytes, Record> records_;
  IndexSet idx_;
  ExpireSet<Bytes> expire_set_;
};

}  // namespace gdprkv
