#include "gdprkv/access.hpp"

namespace gdprkv {

Decision check_access(const AclGrant* grant, OpKind op, std::string_view purpose,
                      const RecordMeta* record, Timestamp now) {
  if (grant == nullptr || grant->expired_at(now) || !grant->allowed_ops.contains(op)) {
    return Decision::deny(ErrorCode::AccessDenied);
  }
  if (op != OpKind::Read) return Decision::allow();

  if (!grant->allows_purpose(purpose)) return Decision::deny(ErrorCode::AccessDenied);
  if (record != nullptr && !purpose_permitted(*record, purpose)) {
    return Decision::deny(ErrorCode::PurposeDenied);
  }
  return Decision::allow();
}

void GrantTable::put(AclGrant grant) {
  auto actor = grant.actor;
  grants_.insert_or_assign(std::move(actor), std::move(grant));
}

bool GrantTable::erase(std::string_view actor) {
  auto it = grants_.find(actor);
  if (it == grants_.end()) return false;
  grants_.erase(it);
  return true;
}

const AclGrant* GrantTable::find(std::string_view actor) const {
  auto it = grants_.find(actor);
  return it == grants_.end() ? nullptr : &it->second;
}

std::vector<AclGrant> GrantTable::list() const {
  std::vector<AclGrant> out;
  out.reserve(grants_.size());
  for (const auto& [_, g] : grants_) out.push_back(g);
  return out;
}

}  // namespace gdprkv
