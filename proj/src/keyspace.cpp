#include "gdprkv/keyspace.hpp"

#include <algorithm>

#include "gdprkv/codec.hpp"

namespace gdprkv {

namespace {

void index_into(std::map<std::string, KeySet, std::less<>>& idx, const std::string& token,
                const Bytes& key) {
  idx[token].insert(key);
}

void unindex_from(std::map<std::string, KeySet, std::less<>>& idx, std::string_view token,
                  const Bytes& key) {
  auto it = idx.find(token);
  if (it == idx.end()) return;
  it->second.erase(key);
  if (it->second.empty()) idx.erase(it);
}

}  // namespace

const Record* Keyspace::find(std::string_view key) const {
  auto it = records_.find(Bytes(key));
  return it == records_.end() ? nullptr : &it->second;
}

void Keyspace::index(const Record& r) {
  index_into(idx_.by_owner, r.meta.owner, r.key);
  for (const auto& p : r.meta.purposes) index_into(idx_.by_purpose, p, r.key);
  if (r.meta.expiry) {
    idx_.by_expiry.emplace(*r.meta.expiry, r.key);
    expire_set_.insert(r.key);
  }
}

void Keyspace::unindex(const Record& r) {
  unindex_from(idx_.by_owner, r.meta.owner, r.key);
  for (const auto& p : r.meta.purposes) unindex_from(idx_.by_purpose, p, r.key);
  if (r.meta.expiry) {
    idx_.by_expiry.erase({*r.meta.expiry, r.key});
    expire_set_.erase(r.key);
  }
}

bool Keyspace::upsert(Record record) {
  auto it = records_.find(record.key);
  if (it != records_.end()) {
    unindex(it->second);
    it->second = std::move(record);
    index(it->second);
    return false;
  }
  auto key = record.key;
  auto [pos, _] = records_.emplace(std::move(key), std::move(record));
  index(pos->second);
  return true;
}

std::optional<Record> Keyspace::erase(std::string_view key) {
  auto it = records_.find(Bytes(key));
  if (it == records_.end()) return std::nullopt;
  unindex(it->second);
  Record r = std::move(it->second);
  records_.erase(it);
  return r;
}

bool Keyspace::set_expiry(std::string_view key, std::optional<Timestamp> expiry) {
  auto it = records_.find(Bytes(key));
  if (it == records_.end()) return false;
  auto& r = it->second;
  if (r.meta.expiry) {
    idx_.by_expiry.erase({*r.meta.expiry, r.key});
    expire_set_.erase(r.key);
  }
  r.meta.expiry = expiry;
  if (expiry) {
    idx_.by_expiry.emplace(*expiry, r.key);
    expire_set_.insert(r.key);
  }
  return true;
}

bool Keyspace::add_objection(std::string_view key, const std::string& purpose) {
  auto it = records_.find(Bytes(key));
  if (it == records_.end()) return false;
  it->second.meta.objections.insert(purpose);
  return true;
}

std::vector<Bytes> Keyspace::all_keys_of(std::string_view owner) const {
  auto it = idx_.by_owner.find(owner);
  if (it == idx_.by_owner.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::vector<Bytes> Keyspace::keys_by_owner(std::string_view owner, Timestamp now) const {
  std::vector<Bytes> out;
  auto it = idx_.by_owner.find(owner);
  if (it == idx_.by_owner.end()) return out;
  for (const auto& k : it->second) {
    const auto& m = records_.at(k).meta;
    if (m.expiry && is_expired(*m.expiry, now)) continue;
    out.push_back(k);
  }
  return out;
}

std::vector<Bytes> Keyspace::keys_by_purpose(std::string_view purpose, Timestamp now) const {
  std::vector<Bytes> out;
  auto it = idx_.by_purpose.find(purpose);
  if (it == idx_.by_purpose.end()) return out;
  for (const auto& k : it->second) {
    const auto& m = records_.at(k).meta;
    if (m.expiry && is_expired(*m.expiry, now)) continue;
    if (m.objections.count(purpose)) continue;
    out.push_back(k);
  }
  return out;
}

std::size_t Keyspace::pending_expired(Timestamp now) const {
  std::size_t n = 0;
  for (const auto& [ts, _] : idx_.by_expiry) {
    if (!is_expired(ts, now)) break;
    ++n;
  }
  return n;
}

std::vector<Record> Keyspace::sorted_records() const {
  std::vector<Record> out;
  out.reserve(records_.size());
  for (const auto& [_, r] : records_) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const Record& a, const Record& b) { return a.key < b.key; });
  return out;
}

std::string Keyspace::dump() const {
  std::vector<const Record*> sorted;
  sorted.reserve(records_.size());
  for (const auto& [_, r] : records_) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const Record* a, const Record* b) { return a->key < b->key; });
  std::string out;
  ByteWriter w(out);
  w.u64(sorted.size());
  for (const auto* r : sorted) {
    w.str32(r->key);
    encode_record_body(out, *r);
  }
  return out;
}

void Keyspace::clear() {
  records_.clear();
  idx_ = IndexSet{};
  expire_set_.clear();
}

}  // namespace gdprkv
