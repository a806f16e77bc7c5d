#include "gdprkv/expiry.hpp"

#include <cmath>

namespace gdprkv {

std::string_view to_string(ExpiryStrategy s) {
  return s == ExpiryStrategy::Lazy ? "lazy" : "eager";
}

ExpiryStrategy parse_expiry_strategy(std::string_view text) {
  if (text == "lazy") return ExpiryStrategy::Lazy;
  if (text == "eager") return ExpiryStrategy::Eager;
  throw Error(ErrorCode::BadConfig, "unknown expiry strategy: " + std::string(text));
}

void LazyParams::validate() const {
  if (tick_interval_ms == 0) throw Error(ErrorCode::BadConfig, "tick interval must be positive");
  if (repeat_threshold < 1 || sample_size < repeat_threshold) {
    throw Error(ErrorCode::BadConfig, "need sample_size >= repeat_threshold >= 1");
  }
}

namespace {

struct Scenario {
  std::uint64_t expired = 0;
  Timestamp phase = 0;
  Timestamp interval = 0;
};

Scenario make_scenario(std::uint64_t n, double fraction, const LazyParams& params,
                       std::mt19937_64& rng) {
  params.validate();
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::BadSpec, "expired fraction must lie in [0, 1]");
  }
  Scenario s;
  s.expired = static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * fraction));
  s.interval = static_cast<Timestamp>(params.tick_interval_ms) * kMicrosPerMilli;
  s.phase = std::uniform_int_distribution<Timestamp>(1, s.interval)(rng);
  return s;
}

}  // namespace

ExpirySimulation simulate_lazy(std::uint64_t keyspace_size, double expired_fraction,
                               const LazyParams& params, std::uint64_t seed,
                               const SimulationOptions& options) {
  std::mt19937_64 rng(seed);
  auto sc = make_scenario(keyspace_size, expired_fraction, params, rng);

  // Keys [0, expired) are the short-lived ones; insertion order is shuffled
  // so their positions in the sampling array are random.
  std::vector<std::uint32_t> order(keyspace_size);
  for (std::uint32_t i = 0; i < keyspace_size; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  ExpireSet<std::uint32_t> set;
  for (auto k : order) set.insert(k);

  ExpirySimulation sim;
  sim.keyspace_size = keyspace_size;
  sim.expired_keys = sc.expired;
  std::uint64_t pending = sc.expired;
  const auto limit = static_cast<std::uint32_t>(sc.expired);
  auto expired = [limit](std::uint32_t k) { return k < limit; };
  auto erase = [&](std::uint32_t k) {
    set.erase(k);
    --pending;
  };

  bool probed = options.probe_at <= 0;
  Timestamp t = sc.phase;
  while (pending > 0 && t <= options.horizon) {
    if (!probed && t > options.probe_at) {
      sim.pending_at_probe = pending;
      probed = true;
    }
    std::size_t rounds = 0;
    lazy_expire_tick(set, params, rng, expired, erase, &rounds);
    ++sim.ticks;
    sim.rounds += rounds;
    if (pending == 0) break;
    t += sc.interval;
  }
  if (!probed) sim.pending_at_probe = pending;
  sim.completed = pending == 0;
  sim.time_to_erasure = sc.expired == 0 ? 0 : (sim.completed ? t : options.horizon);
  return sim;
}

ExpirySimulation simulate_eager(std::uint64_t keyspace_size, double expired_fraction,
                                const LazyParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto sc = make_scenario(keyspace_size, expired_fraction, params, rng);

  // Short-lived keys expire at t=0; the rest far beyond the run.
  constexpr Timestamp kFarFuture = 5LL * 24 * 3600 * kMicrosPerSecond;
  std::set<std::pair<Timestamp, std::uint32_t>> by_expiry;
  for (std::uint32_t k = 0; k < keyspace_size; ++k) {
    by_expiry.emplace(k < sc.expired ? 0 : kFarFuture, k);
  }

  ExpirySimulation sim;
  sim.keyspace_size = keyspace_size;
  sim.expired_keys = sc.expired;
  std::uint64_t pending = sc.expired;
  Timestamp t = sc.phase;
  while (pending > 0) {
    eager_expire_sweep(by_expiry, t, [&](std::uint32_t k, Timestamp ts) {
      by_expiry.erase({ts, k});
      --pending;
    });
    ++sim.ticks;
    ++sim.rounds;
    if (pending == 0) break;
    t += sc.interval;
  }
  sim.completed = true;
  sim.time_to_erasure = sc.expired == 0 ? 0 : t;
  return sim;
}

}  // namespace gdprkv
