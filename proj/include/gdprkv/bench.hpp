#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gdprkv/config.hpp"
#include "gdprkv/expiry.hpp"
#include "gdprkv/store.hpp"

namespace gdprkv {

enum class KeyDistribution { Uniform, Zipfian };

std::string_view to_string(KeyDistribution d);
KeyDistribution parse_distribution(std::string_view text);

struct WorkloadSpec {
  std::uint64_t record_count = 100'000;
  std::uint64_t op_count = 1'000'000;
  double read_fraction = 0.95;
  double update_fraction = 0.05;
  std::uint32_t value_size = 100;
  KeyDistribution distribution = KeyDistribution::Zipfian;
  double zipf_theta = 0.99;
  std::vector<std::string> purposes = {"analytics", "billing", "marketing"};
  std::uint64_t subjects = 1000;
  std::uint64_t seed = 1;

  /// Throws `Error(BadSpec)`.
  void validate() const;
  std::string echo() const;
};

/// Zipfian ranks in [0, n) after Gray et al., as used by YCSB: rank 0 is
/// the hottest item with probability 1 / zeta(n, theta). Requires
/// 0 < theta < 1.
class ZipfianGenerator {
 public:
  ZipfianGenerator(std::uint64_t n, double theta);
  /// Maps a uniform draw u in [0, 1) to a rank.
  std::uint64_t rank(double u) const;
  double zeta() const { return zetan_; }

  static double zeta(std::uint64_t n, double theta);

 private:
  std::uint64_t n_;
  double theta_;
  double zetan_;
  double alpha_;
  double eta_;
  double half_pow_theta_;
};

struct WorkloadOp {
  enum class Kind : std::uint8_t { Get, Put };
  Kind kind;
  std::uint32_t purpose;  // index into WorkloadSpec::purposes
  std::uint64_t key;      // record index
};

/// The deterministic op stream of `spec`.
std::vector<WorkloadOp> generate(const WorkloadSpec& spec);

std::string bench_key(std::uint64_t index);
std::string bench_owner(const WorkloadSpec& spec, std::uint64_t index);
/// Value bytes for the load of record `index` (op == nullopt) or for op
/// number `op` of the stream.
std::string bench_value(const WorkloadSpec& spec, std::uint64_t index, std::optional<std::uint64_t> op);

struct BenchTarget {
  /// Empty: run against an embedded store built from `config`.
  std::string endpoint;
  std::string actor = "bench";
  std::string secret;
  ComplianceConfig config;
  unsigned clients = 8;
  bool load = true;
};

struct BenchReport {
  std::string label;
  std::uint64_t ops = 0;           // length of the op stream
  std::uint64_t acknowledged = 0;  // replies received, errors included
  std::uint64_t errors = 0;
  std::uint64_t audit_entries_added = 0;
  double seconds = 0.0;
  double throughput = 0.0;
  double p50_us = 0.0;
  double p95_us = 0.0;
  double p99_us = 0.0;
  double load_seconds = 0.0;
  std::optional<double> relative_throughput;
  std::string baseline_label;
  std::string config_echo;
  /// State dump after the run (embedded only).
  std::string final_dump;

  /// ops == acknowledged == audit_entries_added.
  bool integrity_ok() const { return ops == acknowledged && acknowledged == audit_entries_added; }
  void compare_to(const BenchReport& baseline);
  /// `key=value` lines.
  std::string render() const;
};

/// Human-readable comparison table of several reports.
std::string render_table(const std::vector<BenchReport>& reports);

/// Loads `record_count` records, then executes the stream with `clients`
/// concurrent workers. Ops are partitioned across workers by key so the
/// per-key order, and therefore the final state, is independent of
/// scheduling. Throws `Error(ConnectError)` when the endpoint is down.
BenchReport run_bench(const WorkloadSpec& spec, const BenchTarget& target, const Clock& clock,
                      std::string label = {});

struct ExpiryRow {
  std::uint64_t keys = 0;
  std::uint64_t short_keys = 0;
  double lazy_median_s = 0.0;         // virtual
  double lazy_min_s = 0.0;
  double lazy_max_s = 0.0;
  double eager_virtual_s = 0.0;       // virtual
  std::optional<double> eager_wall_max_delay_s;
  std::optional<double> eager_wall_mean_delay_s;
  double ratio = 0.0;                 // lazy median / eager virtual
};

struct ExpiryExperiment {
  std::vector<std::uint64_t> sizes = {16'384, 32'768, 65'536, 131'072};
  double short_fraction = 0.2;
  unsigned seeds = 30;
  std::uint64_t base_seed = 1;
  LazyParams params;
  /// Also measure the eager strategy on a live store in wall-clock time.
  bool eager_wall = false;
  double short_ttl_s = 5.0;
  double long_ttl_s = 300.0;
  std::string scratch_dir = ".";
};

struct EagerWallResult {
  std::uint64_t keys = 0;
  std::uint64_t short_keys = 0;
  std::uint64_t erased = 0;
  double max_delay_s = 0.0;
  double mean_delay_s = 0.0;
  double load_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Loads `keys` records into a store under the eager strategy, a fraction
/// with `short_ttl_s`, the rest with `long_ttl_s`, running expiry ticks at
/// the configured interval throughout, and waits until every short-lived
/// key is erased.
EagerWallResult measure_eager_wall(std::uint64_t keys, double short_fraction, double short_ttl_s,
                                   double long_ttl_s, const LazyParams& params,
                                   const std::string& log_path, std::uint64_t seed);

std::vector<ExpiryRow> experiment_expiry(const ExpiryExperiment& experiment);
std::string render_expiry_table(const std::vector<ExpiryRow>& rows);

}  // namespace gdprkv
