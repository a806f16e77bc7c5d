#include "gdprkv/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "gdprkv/server.hpp"

namespace gdprkv {

namespace {

using SteadyClock = std::chrono::steady_clock;

double seconds_since(SteadyClock::time_point start) {
  return std::chrono::duration<double>(SteadyClock::now() - start).count();
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string fmt(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

double percentile(std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

constexpr std::string_view kBenchAdmin = "bench-admin";

std::uint64_t info_counter(Client& client, std::string_view name) {
  auto r = client.call({"INFO"});
  if (r.kind != Reply::Kind::Bulk) throw Error(ErrorCode::ProtoError, "INFO did not return a bulk reply");
  std::istringstream in(r.text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos && line.substr(0, eq) == name) return std::stoull(line.substr(eq + 1));
  }
  throw Error(ErrorCode::ProtoError, "INFO lacks " + std::string(name));
}

std::vector<Bytes> put_request(const WorkloadSpec& spec, std::uint64_t key, const std::string& value) {
  return {"PUT", bench_key(key), value, "purpose=" + spec.purposes[0], "owner=" + bench_owner(spec, key),
          "purposes=" + join_tokens(TokenSet(spec.purposes.begin(), spec.purposes.end()))};
}

struct WorkerResult {
  std::vector<double> latencies;
  std::uint64_t acknowledged = 0;
  std::uint64_t errors = 0;
};

}  // namespace

std::string_view to_string(KeyDistribution d) {
  return d == KeyDistribution::Uniform ? "uniform" : "zipfian";
}

KeyDistribution parse_distribution(std::string_view text) {
  if (text == "uniform") return KeyDistribution::Uniform;
  if (text == "zipfian" || text == "zipf") return KeyDistribution::Zipfian;
  throw Error(ErrorCode::BadSpec, "unknown key distribution '" + std::string(text) + "'");
}

void WorkloadSpec::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::BadSpec, msg); };
  if (record_count == 0) bad("record_count must be positive");
  if (record_count > std::numeric_limits<std::uint32_t>::max()) bad("record_count too large");
  if (read_fraction < 0 || update_fraction < 0 || read_fraction > 1 || update_fraction > 1) {
    bad("fractions must lie in [0, 1]");
  }
  if (std::abs(read_fraction + update_fraction - 1.0) > 1e-9) bad("read and update fractions must sum to 1");
  if (value_size == 0) bad("value_size must be positive");
  if (purposes.empty()) bad("at least one purpose is required");
  for (const auto& p : purposes) {
    if (p.empty()) bad("empty purpose in purpose mix");
  }
  if (subjects == 0) bad("subjects must be positive");
  if (distribution == KeyDistribution::Zipfian && !(zipf_theta > 0 && zipf_theta < 1)) {
    bad("zipfian exponent must lie in (0, 1)");
  }
}

std::string WorkloadSpec::echo() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) { out += std::string(k) + "=" + v + "\n"; };
  line("records", std::to_string(record_count));
  line("ops", std::to_string(op_count));
  line("read_fraction", fmt(read_fraction, 4));
  line("update_fraction", fmt(update_fraction, 4));
  line("value_size", std::to_string(value_size));
  line("distribution", std::string(to_string(distribution)));
  if (distribution == KeyDistribution::Zipfian) line("zipf_theta", fmt(zipf_theta, 4));
  line("purposes", join_tokens(TokenSet(purposes.begin(), purposes.end())));
  line("subjects", std::to_string(subjects));
  line("seed", std::to_string(seed));
  return out;
}

double ZipfianGenerator::zeta(std::uint64_t n, double theta) {
  double sum = 0.0;
  for (std::uint64_t i = 1; i <= n; ++i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
  return sum;
}

ZipfianGenerator::ZipfianGenerator(std::uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0 || !(theta > 0 && theta < 1)) throw Error(ErrorCode::BadSpec, "bad zipfian parameters");
  zetan_ = zeta(n, theta);
  double zeta2 = zeta(std::min<std::uint64_t>(n, 2), theta);
  alpha_ = 1.0 / (1.0 - theta);
  eta_ = n > 1 ? (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_) : 0.0;
  half_pow_theta_ = 1.0 + std::pow(0.5, theta);
}

std::uint64_t ZipfianGenerator::rank(double u) const {
  double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (n_ > 1 && uz < half_pow_theta_) return 1;
  auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return std::min(r, n_ - 1);
}

std::vector<WorkloadOp> generate(const WorkloadSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::optional<ZipfianGenerator> zipf;
  if (spec.distribution == KeyDistribution::Zipfian) zipf.emplace(spec.record_count, spec.zipf_theta);
  std::vector<WorkloadOp> ops;
  ops.reserve(spec.op_count);
  for (std::uint64_t i = 0; i < spec.op_count; ++i) {
    WorkloadOp op{};
    op.kind = unit_double(rng) < spec.read_fraction ? WorkloadOp::Kind::Get : WorkloadOp::Kind::Put;
    op.key = zipf ? zipf->rank(unit_double(rng)) : rng() % spec.record_count;
    op.purpose = static_cast<std::uint32_t>(rng() % spec.purposes.size());
    ops.push_back(op);
  }
  return ops;
}

std::string bench_key(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "user%010llu", static_cast<unsigned long long>(index));
  return buf;
}

std::string bench_owner(const WorkloadSpec& spec, std::uint64_t index) {
  return "subject" + std::to_string(index % spec.subjects);
}

std::string bench_value(const WorkloadSpec& spec, std::uint64_t index, std::optional<std::uint64_t> op) {
  std::uint64_t state = spec.seed * 0x100000001b3ULL ^ (index << 1) ^ (op ? (*op + 1) << 33 : 0);
  std::string v(spec.value_size, ' ');
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i % 8 == 0) bits = splitmix64(state);
    v[i] = static_cast<char>('a' + (bits & 0xff) % 26);
    bits >>= 8;
  }
  return v;
}

void BenchReport::compare_to(const BenchReport& baseline) {
  baseline_label = baseline.label;
  relative_throughput = baseline.throughput > 0 ? throughput / baseline.throughput : 0.0;
}

std::string BenchReport::render() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) { out += std::string(k) + "=" + v + "\n"; };
  line("label", label);
  line("ops", std::to_string(ops));
  line("acknowledged", std::to_string(acknowledged));
  line("errors", std::to_string(errors));
  line("audit_entries_added", std::to_string(audit_entries_added));
  line("integrity", integrity_ok() ? "ok" : "mismatch");
  line("load_seconds", fmt(load_seconds, 3));
  line("seconds", fmt(seconds, 3));
  line("throughput_ops_s", fmt(throughput, 1));
  line("latency_p50_us", fmt(p50_us, 1));
  line("latency_p95_us", fmt(p95_us, 1));
  line("latency_p99_us", fmt(p99_us, 1));
  if (relative_throughput) {
    line("baseline", baseline_label);
    line("relative_throughput", fmt(*relative_throughput, 4));
  }
  out += config_echo;
  return out;
}

std::string render_table(const std::vector<BenchReport>& reports) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %12s %10s %10s %10s %10s %9s\n", "run", "ops/s", "p50(us)",
                "p95(us)", "p99(us)", "relative", "integrity");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-24s %12.1f %10.1f %10.1f %10.1f %10s %9s\n", r.label.c_str(),
                  r.throughput, r.p50_us, r.p95_us, r.p99_us,
                  r.relative_throughput ? fmt(*r.relative_throughput, 3).c_str() : "-",
                  r.integrity_ok() ? "ok" : "MISMATCH");
    out += buf;
  }
  return out;
}

BenchReport run_bench(const WorkloadSpec& spec, const BenchTarget& target, const Clock& clock,
                      std::string label) {
  spec.validate();
  const unsigned clients = std::max(1u, target.clients);
  const auto ops = generate(spec);

  BenchReport report;
  report.label = label.empty() ? (target.endpoint.empty() ? "embedded" : target.endpoint) : std::move(label);
  report.config_echo = spec.echo() + "clients=" + std::to_string(clients) + "\n";

  std::vector<std::vector<std::uint64_t>> partitions(clients);
  for (std::uint64_t i = 0; i < ops.size(); ++i) partitions[ops[i].key % clients].push_back(i);

  std::vector<WorkerResult> results(clients);
  const auto get_purpose = [&](const WorkloadOp& op) { return spec.purposes[op.purpose]; };

  if (target.endpoint.empty()) {
    ComplianceConfig cfg = target.config;
    cfg.admins.insert(std::string(kBenchAdmin));
    report.config_echo += cfg.echo();
    auto store = Store::open(cfg, clock);
    std::mutex mu;

    AclGrant g;
    g.actor = target.actor;
    g.allowed_ops = OpSet{OpKind::Read, OpKind::Write};
    g.allowed_purposes = TokenSet(spec.purposes.begin(), spec.purposes.end());
    store->grant(g, kBenchAdmin);

    const TokenSet all_purposes(spec.purposes.begin(), spec.purposes.end());
    auto start = SteadyClock::now();
    if (target.load) {
      for (std::uint64_t k = 0; k < spec.record_count; ++k) {
        RecordMeta meta;
        meta.owner = bench_owner(spec, k);
        meta.purposes = all_purposes;
        store->put(bench_key(k), bench_value(spec, k, std::nullopt), std::move(meta), target.actor,
                   spec.purposes[0]);
      }
    }
    store->log().flush();
    report.load_seconds = seconds_since(start);

    const std::uint64_t entries_before = store->log().entries();
    start = SteadyClock::now();
    std::vector<std::thread> workers;
    for (unsigned c = 0; c < clients; ++c) {
      workers.emplace_back([&, c] {
        auto& res = results[c];
        res.latencies.reserve(partitions[c].size());
        for (auto idx : partitions[c]) {
          const auto& op = ops[idx];
          auto t0 = SteadyClock::now();
          try {
            std::lock_guard lock(mu);
            if (op.kind == WorkloadOp::Kind::Get) {
              store->get(bench_key(op.key), target.actor, get_purpose(op));
            } else {
              RecordMeta meta;
              meta.owner = bench_owner(spec, op.key);
              meta.purposes = all_purposes;
              store->put(bench_key(op.key), bench_value(spec, op.key, idx), std::move(meta), target.actor,
                         get_purpose(op));
            }
          } catch (const Error&) {
            ++res.errors;
          }
          ++res.acknowledged;
          res.latencies.push_back(std::chrono::duration<double, std::micro>(SteadyClock::now() - t0).count());
        }
      });
    }
    for (auto& w : workers) w.join();
    store->log().flush();
    report.seconds = seconds_since(start);
    report.audit_entries_added = store->log().entries() - entries_before;
    report.final_dump = store->dump();
  } else {
    auto [host, port] = parse_endpoint(target.endpoint);
    auto connect = [&, host = host, port = port] {
      auto c = Client::connect(host, port);
      if (!target.secret.empty() || !target.actor.empty()) {
        auto r = c.call({"AUTH", target.actor, target.secret});
        if (r.is_error()) throw Error(ErrorCode::NoAuth, "AUTH failed: " + r.text);
      }
      return c;
    };
    auto control = connect();
    report.config_echo += "endpoint=" + target.endpoint + "\n";

    auto start = SteadyClock::now();
    if (target.load) {
      std::vector<std::thread> loaders;
      std::vector<std::uint64_t> load_errors(clients, 0);
      std::vector<std::string> failures(clients);
      for (unsigned c = 0; c < clients; ++c) {
        loaders.emplace_back([&, c] {
          try {
            auto cl = connect();
            constexpr std::uint64_t kBatch = 64;
            std::uint64_t sent = 0;
            for (std::uint64_t k = c; k < spec.record_count; k += clients) {
              cl.send(put_request(spec, k, bench_value(spec, k, std::nullopt)));
              if (++sent % kBatch == 0) {
                for (std::uint64_t i = 0; i < kBatch; ++i) load_errors[c] += cl.receive().is_error();
              }
            }
            for (std::uint64_t i = 0; i < sent % kBatch; ++i) load_errors[c] += cl.receive().is_error();
          } catch (const std::exception& e) {
            failures[c] = e.what();
          }
        });
      }
      for (auto& t : loaders) t.join();
      for (const auto& f : failures) {
        if (!f.empty()) throw Error(ErrorCode::ConnectError, "load failed: " + f);
      }
      std::uint64_t errs = 0;
      for (auto e : load_errors) errs += e;
      if (errs) throw Error(ErrorCode::AccessDenied, std::to_string(errs) + " load writes were rejected");
    }
    report.load_seconds = seconds_since(start);

    const std::uint64_t entries_before = info_counter(control, "log_entries");
    std::vector<std::string> failures(clients);
    std::vector<std::thread> workers;
    start = SteadyClock::now();
    for (unsigned c = 0; c < clients; ++c) {
      workers.emplace_back([&, c] {
        auto& res = results[c];
        res.latencies.reserve(partitions[c].size());
        try {
          auto cl = connect();
          for (auto idx : partitions[c]) {
            const auto& op = ops[idx];
            auto t0 = SteadyClock::now();
            Reply r = op.kind == WorkloadOp::Kind::Get
                          ? cl.call({"GET", bench_key(op.key), "purpose=" + get_purpose(op)})
                          : cl.call(put_request(spec, op.key, bench_value(spec, op.key, idx)));
            res.latencies.push_back(std::chrono::duration<double, std::micro>(SteadyClock::now() - t0).count());
            ++res.acknowledged;
            res.errors += r.is_error();
          }
        } catch (const std::exception& e) {
          failures[c] = e.what();
        }
      });
    }
    for (auto& w : workers) w.join();
    report.seconds = seconds_since(start);
    for (const auto& f : failures) {
      if (!f.empty()) throw Error(ErrorCode::ConnectError, "bench client failed: " + f);
    }
    report.audit_entries_added = info_counter(control, "log_entries") - entries_before;
  }

  std::vector<double> lat;
  lat.reserve(ops.size());
  for (auto& r : results) {
    report.acknowledged += r.acknowledged;
    report.errors += r.errors;
    lat.insert(lat.end(), r.latencies.begin(), r.latencies.end());
  }
  report.ops = ops.size();
  std::sort(lat.begin(), lat.end());
  report.p50_us = percentile(lat, 0.50);
  report.p95_us = percentile(lat, 0.95);
  report.p99_us = percentile(lat, 0.99);
  report.throughput = report.seconds > 0 ? static_cast<double>(report.acknowledged) / report.seconds : 0.0;
  return report;
}

EagerWallResult measure_eager_wall(std::uint64_t keys, double short_fraction, double short_ttl_s,
                                   double long_ttl_s, const LazyParams& params,
                                   const std::string& log_path, std::uint64_t seed) {
  ComplianceConfig cfg;
  cfg.log_path = log_path;
  cfg.fsync = FsyncPolicy::none();
  cfg.expiry_strategy = ExpiryStrategy::Eager;
  cfg.lazy = params;
  cfg.compaction_interval_s = 0;
  cfg.rng_seed = seed;
  cfg.admins.insert("loader");
  SystemClock clock;
  auto store = Store::open(cfg, clock);

  const auto short_us = static_cast<Timestamp>(short_ttl_s * kMicrosPerSecond);
  const auto long_us = static_cast<Timestamp>(long_ttl_s * kMicrosPerSecond);
  const auto tick = std::chrono::milliseconds(params.tick_interval_ms);

  EagerWallResult res;
  res.keys = keys;
  const TokenSet purposes{"service"};
  std::mt19937_64 rng(seed);
  std::string value(64, 'v');

  auto start = SteadyClock::now();
  auto next_tick = start + tick;
  for (std::uint64_t i = 0; i < keys; ++i) {
    bool is_short = std::floor(static_cast<double>(i + 1) * short_fraction) >
                    std::floor(static_cast<double>(i) * short_fraction);
    res.short_keys += is_short;
    RecordMeta meta;
    meta.owner = "subject" + std::to_string(rng() % 1000);
    meta.purposes = purposes;
    meta.expiry = clock.now() + (is_short ? short_us : long_us);
    store->put(bench_key(i), value, std::move(meta), "loader", "service");
    if ((i & 1023) == 0 && SteadyClock::now() >= next_tick) {
      store->eager_tick();
      next_tick += tick;
    }
  }
  res.load_seconds = seconds_since(start);

  const double give_up = res.load_seconds + short_ttl_s + 60.0;
  while (store->erasure_stats().count() < res.short_keys && seconds_since(start) < give_up) {
    std::this_thread::sleep_until(next_tick);
    store->eager_tick();
    next_tick += tick;
  }
  res.total_seconds = seconds_since(start);
  res.erased = store->erasure_stats().count();
  res.max_delay_s = static_cast<double>(store->erasure_stats().max_delay()) / kMicrosPerSecond;
  res.mean_delay_s = store->erasure_stats().mean_delay() / kMicrosPerSecond;
  return res;
}

std::vector<ExpiryRow> experiment_expiry(const ExpiryExperiment& ex) {
  ex.params.validate();
  std::vector<ExpiryRow> rows;
  for (auto n : ex.sizes) {
    ExpiryRow row;
    row.keys = n;
    std::vector<double> times;
    for (unsigned s = 0; s < std::max(1u, ex.seeds); ++s) {
      auto sim = simulate_lazy(n, ex.short_fraction, ex.params, ex.base_seed + s);
      row.short_keys = sim.expired_keys;
      times.push_back(static_cast<double>(sim.time_to_erasure) / kMicrosPerSecond);
    }
    std::sort(times.begin(), times.end());
    auto mid = times.size() / 2;
    row.lazy_median_s = times.size() % 2 ? times[mid] : (times[mid - 1] + times[mid]) / 2.0;
    row.lazy_min_s = times.front();
    row.lazy_max_s = times.back();
    auto eager = simulate_eager(n, ex.short_fraction, ex.params, ex.base_seed);
    row.eager_virtual_s = static_cast<double>(eager.time_to_erasure) / kMicrosPerSecond;
    row.ratio = row.eager_virtual_s > 0 ? row.lazy_median_s / row.eager_virtual_s : 0.0;
    if (ex.eager_wall) {
      auto path = (std::filesystem::path(ex.scratch_dir) / ("expiry-eager-" + std::to_string(n) + ".log")).string();
      std::filesystem::remove(path);
      auto w = measure_eager_wall(n, ex.short_fraction, ex.short_ttl_s, ex.long_ttl_s, ex.params, path, ex.base_seed);
      std::filesystem::remove(path);
      row.eager_wall_max_delay_s = w.max_delay_s;
      row.eager_wall_mean_delay_s = w.mean_delay_s;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string render_expiry_table(const std::vector<ExpiryRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    std::string prefix = "keys_" + std::to_string(r.keys) + "_";
    out += prefix + "short_keys=" + std::to_string(r.short_keys) + "\n";
    out += prefix + "lazy_median_s=" + fmt(r.lazy_median_s, 3) + "\n";
    out += prefix + "eager_virtual_s=" + fmt(r.eager_virtual_s, 3) + "\n";
    out += prefix + "ratio=" + fmt(r.ratio, 1) + "\n";
    if (r.eager_wall_max_delay_s) out += prefix + "eager_wall_max_delay_s=" + fmt(*r.eager_wall_max_delay_s, 3) + "\n";
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "\n%10s %10s %14s %12s %12s %14s %10s\n", "keys", "expiring", "lazy med (s)",
                "lazy min", "lazy max", "eager (s)", "ratio");
  out += buf;
  for (const auto& r : rows) {
    std::string eager = fmt(r.eager_virtual_s, 3);
    if (r.eager_wall_max_delay_s) eager += " / " + fmt(*r.eager_wall_max_delay_s, 3);
    std::snprintf(buf, sizeof buf, "%10llu %10llu %14.1f %12.1f %12.1f %14s %10.0f\n",
                  static_cast<unsigned long long>(r.keys), static_cast<unsigned long long>(r.short_keys),
                  r.lazy_median_s, r.lazy_min_s, r.lazy_max_s, eager.c_str(), r.ratio);
    out += buf;
  }
  return out;
}

}  // namespace gdprkv
