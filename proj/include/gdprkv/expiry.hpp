#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <type_traits>
#include <utility>
#include <string>
#include <unordered_map>
#include <vector>

#include "gdprkv/common.hpp"

namespace gdprkv {

enum class ExpiryStrategy { Lazy, Eager };

std::string_view to_string(ExpiryStrategy s);
ExpiryStrategy parse_expiry_strategy(std::string_view text);

/// Parameters of the sampling expiry cycle.
struct LazyParams {
  std::uint32_t tick_interval_ms = 100;
  std::uint32_t sample_size = 20;
  std::uint32_t repeat_threshold = 5;

  /// Throws `Error(BadConfig)` unless sample_size >= repeat_threshold >= 1.
  void validate() const;
};

/// Set of keys carrying an expiry, with O(1) insert/erase and uniform
/// random access for sampling.
template <typename Key, typename Hash = std::hash<Key>>
class ExpireSet {
 public:
  bool insert(const Key& k) {
    auto [it, inserted] = pos_.try_emplace(k, keys_.size());
    if (inserted) keys_.push_back(k);
    return inserted;
  }

  bool erase(const Key& k) {
    auto it = pos_.find(k);
    if (it == pos_.end()) return false;
    auto idx = it->second;
    pos_.erase(it);
    if (idx + 1 != keys_.size()) {
      keys_[idx] = std::move(keys_.back());
      pos_[keys_[idx]] = idx;
    }
    keys_.pop_back();
    return true;
  }

  bool contains(const Key& k) const { return pos_.count(k) > 0; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const Key& at(std::size_t i) const { return keys_[i]; }
  void clear() {
    keys_.clear();
    pos_.clear();
  }

 private:
  std::vector<Key> keys_;
  std::unordered_map<Key, std::size_t, Hash> pos_;
};

/// Picks `count` positions in [0, n): distinct when n >= count, otherwise
/// `count` independent draws (with replacement).
template <typename Rng>
void sample_positions(std::size_t n, std::size_t count, Rng& rng, std::vector<std::size_t>& out) {
  out.clear();
  if (n == 0) return;
  if (n < count) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pick(rng));
    return;
  }
  // Floyd's algorithm: `count` distinct values without materializing [0, n).
  for (std::size_t j = n - count; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    auto t = pick(rng);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    else out.push_back(j);
  }
}

/// One scheduler tick of the sampling expiry cycle:
///   loop: sample `sample_size` keys from the expire-flagged set, erase the
///   expired ones; repeat immediately while a round erased at least
///   `repeat_threshold` keys.
/// `expired(key)` tells whether a key has expired; `erase(key)` must remove
/// it from `set`. Returns the number erased in this tick.
template <typename Set, typename Expired, typename Erase, typename Rng>
std::size_t lazy_expire_tick(Set& set, const LazyParams& params, Rng& rng, Expired&& expired,
                             Erase&& erase, std::size_t* rounds_out = nullptr) {
  std::size_t total = 0;
  std::size_t rounds = 0;
  std::vector<std::size_t> positions;
  std::vector<std::remove_cvref_t<decltype(set.at(0))>> victims;
  while (!set.empty()) {
    ++rounds;
    sample_positions(set.size(), params.sample_size, rng, positions);
    victims.clear();
    for (auto p : positions) {
      const auto& k = set.at(p);
      if (expired(k) && std::find(victims.begin(), victims.end(), k) == victims.end()) {
        victims.push_back(k);
      }
    }
    for (const auto& k : victims) erase(k);
    total += victims.size();
    if (victims.size() < params.repeat_threshold) break;
  }
  if (rounds_out) *rounds_out = rounds;
  return total;
}

/// Erases every (expiry, key) entry with expiry <= now from an ordered
/// index of pairs (e.g. std::set<std::pair<Timestamp, Key>>), earliest
/// first and ties in key order. `erase(key, expiry)` must remove the entry
/// from the index. Cost is proportional to the number due.
template <typename Index, typename Erase>
std::size_t eager_expire_sweep(const Index& by_expiry, Timestamp now, Erase&& erase) {
  std::size_t erased = 0;
  while (!by_expiry.empty() && is_expired(by_expiry.begin()->first, now)) {
    auto entry = *by_expiry.begin();
    erase(entry.second, entry.first);
    ++erased;
  }
  return erased;
}

/// Erasure delay bookkeeping (erase time minus expiry time).
class ErasureStats {
 public:
  void record(Timestamp expiry, Timestamp erased_at) {
    auto delay = std::max<Timestamp>(0, erased_at - expiry);
    ++count_;
    sum_ += static_cast<double>(delay);
    max_ = std::max(max_, delay);
  }

  std::uint64_t count() const { return count_; }
  Timestamp max_delay() const { return max_; }
  double mean_delay() const { return count_ ? sum_ / static_cast<double>(count_) : 0.0; }
  void reset() { *this = ErasureStats{}; }

 private:
  std::uint64_t count_ = 0;
  double sum_ = 0.0;
  Timestamp max_ = 0;
};

struct ExpirySimulation {
  std::uint64_t keyspace_size = 0;
  std::uint64_t expired_keys = 0;
  std::uint64_t ticks = 0;
  std::uint64_t rounds = 0;
  /// Virtual time from the expiry instant until the last expired key is
  /// erased. `completed` is false if `horizon` was reached first.
  Timestamp time_to_erasure = 0;
  std::uint64_t pending_at_probe = 0;
  bool completed = false;
};

struct SimulationOptions {
  /// Stop after this much virtual time past expiry.
  Timestamp horizon = std::numeric_limits<Timestamp>::max();
  /// Pending count is also reported at this virtual instant after expiry
  /// (0 disables).
  Timestamp probe_at = 0;
};

/// Runs the sampling cycle on a virtual clock over `keyspace_size` keys,
/// `expired_fraction` of which expire at t=0 while the rest outlive the
/// run. Ticks fire at phase + k * tick_interval with phase drawn from the
/// seed in (0, tick_interval]; a tick's rounds take no virtual time.
/// Deterministic for a given seed.
ExpirySimulation simulate_lazy(std::uint64_t keyspace_size, double expired_fraction,
                               const LazyParams& params, std::uint64_t seed,
                               const SimulationOptions& options = {});

/// The same scenario under the expiry-index sweep: the first tick after
/// expiry pops every due entry.
ExpirySimulation simulate_eager(std::uint64_t keyspace_size, double expired_fraction,
                                const LazyParams& params, std::uint64_t seed);

}  // namespace gdprkv
