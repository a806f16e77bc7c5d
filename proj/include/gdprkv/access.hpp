#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gdprkv/record.hpp"

namespace gdprkv {

struct Decision {
  bool allowed = false;
  ErrorCode reason = ErrorCode::AccessDenied;  // meaningful only when denied

  static Decision allow() { return {true, ErrorCode::AccessDenied}; }
  static Decision deny(ErrorCode why) { return {false, why}; }

  friend bool operator==(const Decision&, const Decision&) = default;
};

/// Pure access decision. `grant` is the actor's grant, or null when the
/// actor has none. Reads additionally require the purpose to be granted,
/// whitelisted on the record and not objected to by the subject.
///
/// Grant problems (missing, expired, op not allowed, purpose not granted)
/// deny with AccessDenied; record-level purpose failures deny with
/// PurposeDenied.
Decision check_access(const AclGrant* grant, OpKind op, std::string_view purpose,
                      const RecordMeta* record, Timestamp now);

/// Whether a record's own purpose metadata lets it be processed for `purpose`.
inline bool purpose_permitted(const RecordMeta& meta, std::string_view purpose) {
  return meta.purposes.count(purpose) > 0 && meta.objections.count(purpose) == 0;
}

/// Actor -> grant table. Expired grants stay stored but behave as absent.
class GrantTable {
 public:
  void put(AclGrant grant);
  bool erase(std::string_view actor);
  const AclGrant* find(std::string_view actor) const;

  /// All grants, ascending by actor.
  std::vector<AclGrant> list() const;
  std::size_t size() const { return grants_.size(); }
  void clear() { grants_.clear(); }

  friend bool operator==(const GrantTable&, const GrantTable&) = default;

 private:
  std::map<std::string, AclGrant, std::less<>> grants_;
};

}  // namespace gdprkv
