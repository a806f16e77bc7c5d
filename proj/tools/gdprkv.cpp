// gdprkv command-line tool: server, benchmarks, offline log maintenance
// and expiry experiments.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "gdprkv/bench.hpp"
#include "gdprkv/codec.hpp"
#include "gdprkv/compliance.hpp"
#include "gdprkv/server.hpp"

namespace {

using namespace gdprkv;

struct LogArgs {
  std::string path;
  std::string cipher = "none";
  std::string key_file;

  std::shared_ptr<Cipher> make() const { return make_cipher(cipher, key_file); }
};

void add_log_args(CLI::App* cmd, LogArgs& args) {
  cmd->add_option("--log", args.path, "Audit log file")->required();
  cmd->add_option("--cipher", args.cipher, "none or aes-256-gcm");
  cmd->add_option("--key-file", args.key_file, "32-byte key (raw or hex)");
}

int cmd_serve(const std::string& config_path, int port_override) {
  auto cfg = load_config(config_path);
  if (port_override >= 0) cfg.port = static_cast<std::uint16_t>(port_override);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SystemClock clock;
  auto store = Store::open(cfg, clock);
  Server server(*store, cfg.bind_address, cfg.port);
  server.start();
  std::cout << "listening=" << cfg.bind_address << ":" << server.port() << "\n" << cfg.echo() << std::flush;

  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  store->log().sync();
  std::cout << "shutdown=signal" << sig << "\n";
  return 0;
}

int cmd_bench(const WorkloadSpec& spec, const std::string& target, const std::string& actor,
              const std::string& secret, unsigned clients, const std::string& log_path,
              const std::vector<std::string>& fsync_modes, const LogArgs& crypto) {
  SystemClock clock;
  std::vector<BenchReport> reports;
  if (!target.empty()) {
    BenchTarget t;
    t.endpoint = target;
    t.actor = actor;
    t.secret = secret;
    t.clients = clients;
    reports.push_back(run_bench(spec, t, clock, target));
  } else {
    for (const auto& mode : fsync_modes) {
      BenchTarget t;
      t.actor = actor;
      t.clients = clients;
      t.config.log_path = log_path;
      t.config.fsync = FsyncPolicy::parse(mode);
      t.config.cipher = crypto.cipher;
      t.config.key_file = crypto.key_file;
      t.config.compaction_interval_s = 0;
      std::filesystem::remove(log_path);
      std::string label = "fsync=" + t.config.fsync.to_string();
      if (crypto.cipher != "none") label += "+" + crypto.cipher;
      reports.push_back(run_bench(spec, t, clock, label));
      std::filesystem::remove(log_path);
    }
  }
  for (std::size_t i = 1; i < reports.size(); ++i) reports[i].compare_to(reports[0]);
  for (const auto& r : reports) std::cout << r.render() << "\n";
  std::cout << render_table(reports);
  for (const auto& r : reports) {
    if (!r.integrity_ok()) return 1;
  }
  return 0;
}

int cmd_compact(const LogArgs& log) {
  ComplianceConfig cfg;
  cfg.log_path = log.path;
  cfg.cipher = log.cipher;
  cfg.key_file = log.key_file;
  cfg.fsync = FsyncPolicy::always();
  SystemClock clock;
  auto store = Store::open(cfg, clock);
  auto r = store->compact_internal();
  std::cout << "history_entries=" << r.history_entries << "\nsnapshot_entries=" << r.snapshot_entries
            << "\nredacted_entries=" << r.redacted_entries << "\nforgotten_subjects=" << r.forgotten_subjects
            << "\nbytes_before=" << r.bytes_before << "\nbytes_after=" << r.bytes_after << "\n";
  return 0;
}

int cmd_verify(const LogArgs& log) {
  auto rep = verify_log(log.path, *log.make());
  std::cout << "entries=" << rep.entries << "\nlast_good_seq=" << rep.last_good_seq << "\nbytes=" << rep.bytes
            << "\nstatus=" << (rep.ok() ? "ok" : "corrupt") << "\n";
  if (rep.violation) {
    std::cout << "violation=" << to_string(rep.violation->kind) << "\nviolation_seq=" << rep.violation->seq
              << "\nviolation_offset=" << rep.violation->offset << "\ndetail=" << rep.violation->message << "\n";
    return 1;
  }
  return 0;
}

int cmd_query(const LogArgs& log, const AuditFilter& filter) {
  auto matches = query_entries(read_log(log.path, *log.make()), filter);
  for (const auto& e : matches) std::cout << format_entry(e) << "\n";
  std::cout << "matches=" << matches.size() << "\n";
  return 0;
}

int cmd_export(const std::string& subject, const std::string& target, const std::string& actor,
               const std::string& secret, const LogArgs& log) {
  if (!log.path.empty()) {
    ComplianceConfig cfg;
    cfg.log_path = log.path;
    cfg.cipher = log.cipher;
    cfg.key_file = log.key_file;
    cfg.fsync = FsyncPolicy::always();
    cfg.admins.insert(actor);
    SystemClock clock;
    auto store = Store::open(cfg, clock);
    std::cout << export_portable(*store, subject, actor);
    return 0;
  }
  auto [host, port] = parse_endpoint(target);
  auto client = Client::connect(host, port);
  auto auth = client.call({"AUTH", actor, secret});
  if (auth.is_error()) throw Error(ErrorCode::NoAuth, auth.text);
  auto r = client.call({"SUBJEXPORT", subject});
  if (r.is_error()) {
    std::cerr << "error: " << r.text << "\n";
    return 1;
  }
  std::cout << r.text;
  return 0;
}

int cmd_simulate(std::uint64_t keys, double frac, std::uint64_t seed, unsigned seeds, const LazyParams& params) {
  params.validate();
  std::vector<double> times;
  std::uint64_t expired = 0;
  for (unsigned s = 0; s < seeds; ++s) {
    auto sim = simulate_lazy(keys, frac, params, seed + s);
    expired = sim.expired_keys;
    times.push_back(static_cast<double>(sim.time_to_erasure) / kMicrosPerSecond);
    if (seeds == 1) {
      std::cout << "ticks=" << sim.ticks << "\nrounds=" << sim.rounds << "\n";
    }
  }
  std::sort(times.begin(), times.end());
  double median = times.size() % 2 ? times[times.size() / 2]
                                   : (times[times.size() / 2 - 1] + times[times.size() / 2]) / 2.0;
  auto eager = simulate_eager(keys, frac, params, seed);
  double eager_s = static_cast<double>(eager.time_to_erasure) / kMicrosPerSecond;
  std::printf("keys=%llu\nexpired_keys=%llu\nseeds=%u\nlazy_time_to_erasure_s=%.3f\neager_time_to_erasure_s=%.3f\n",
              static_cast<unsigned long long>(keys), static_cast<unsigned long long>(expired), seeds, median,
              eager_s);
  if (eager_s > 0) std::printf("ratio=%.1f\n", median / eager_s);
  std::printf("\n%-10s %12s %16s %16s\n", "keys", "expired", "lazy (s)", "eager (s)");
  std::printf("%-10llu %12llu %16.1f %16.3f\n", static_cast<unsigned long long>(keys),
              static_cast<unsigned long long>(expired), median, eager_s);
  return 0;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    auto part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) out.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gdprkv: GDPR-aware key-value store"};
  app.require_subcommand(1);

  std::string config_path;
  int port_override = -1;
  auto* serve = app.add_subcommand("serve", "Run the TCP server");
  serve->add_option("--config", config_path, "Config file")->required();
  serve->add_option("--port", port_override, "Override the configured port");

  WorkloadSpec spec;
  std::string dist = "zipfian";
  std::string target, actor = "bench", secret, bench_log = "gdprkv-bench.log", fsync_list = "every:1000";
  std::string purposes_list;
  unsigned clients = 8;
  LogArgs bench_crypto;
  auto* bench = app.add_subcommand("bench", "Run a YCSB-style workload");
  bench->add_option("--records", spec.record_count, "Records loaded before the run");
  bench->add_option("--ops", spec.op_count, "Operations in the run");
  bench->add_option("--read", spec.read_fraction, "Read fraction (the rest are updates)");
  bench->add_option("--dist", dist, "uniform or zipfian");
  bench->add_option("--theta", spec.zipf_theta, "Zipfian exponent");
  bench->add_option("--value-size", spec.value_size, "Value size in bytes");
  bench->add_option("--purposes", purposes_list, "Comma-separated purpose mix");
  bench->add_option("--seed", spec.seed, "Workload seed");
  bench->add_option("--clients", clients, "Concurrent clients");
  bench->add_option("--target", target, "host:port of a running server (default: embedded store)");
  bench->add_option("--actor", actor, "Actor for AUTH / grants");
  bench->add_option("--secret", secret, "Secret for AUTH");
  bench->add_option("--log", bench_log, "Embedded store log file (deleted before and after each run)");
  bench->add_option("--fsync", fsync_list, "Comma-separated fsync modes for embedded runs; the first is the baseline");
  bench->add_option("--cipher", bench_crypto.cipher, "none or aes-256-gcm");
  bench->add_option("--key-file", bench_crypto.key_file, "Cipher key file");

  LogArgs compact_log;
  auto* compact = app.add_subcommand("compact", "Compact a log offline");
  add_log_args(compact, compact_log);

  auto* audit = app.add_subcommand("audit", "Inspect an audit log");
  audit->require_subcommand(1);
  LogArgs verify_log_args;
  auto* verify = audit->add_subcommand("verify", "Check framing, checksums and sequence");
  add_log_args(verify, verify_log_args);
  LogArgs query_log_args;
  std::string q_subject, q_key, q_actor;
  std::optional<Timestamp> q_from, q_to;
  auto* query = audit->add_subcommand("query", "List matching entries");
  add_log_args(query, query_log_args);
  query->add_option("--subject", q_subject);
  query->add_option("--key", q_key);
  query->add_option("--actor", q_actor);
  query->add_option("--from", q_from, "Inclusive lower bound (us since epoch)");
  query->add_option("--to", q_to, "Inclusive upper bound (us since epoch)");

  std::string ex_subject, ex_target = "127.0.0.1:7979", ex_actor = "admin", ex_secret;
  LogArgs ex_log;
  auto* exp = app.add_subcommand("export", "Portable export of a subject's records");
  exp->add_option("--subject", ex_subject)->required();
  exp->add_option("--target", ex_target, "host:port of a running server");
  exp->add_option("--actor", ex_actor);
  exp->add_option("--secret", ex_secret);
  exp->add_option("--log", ex_log.path, "Export from a log file instead of a server");
  exp->add_option("--cipher", ex_log.cipher);
  exp->add_option("--key-file", ex_log.key_file);

  std::uint64_t sim_keys = 131072, sim_seed = 1;
  double sim_frac = 0.2;
  unsigned sim_seeds = 1;
  LazyParams sim_params;
  auto* sim = app.add_subcommand("simulate-expiry", "Virtual-clock expiry simulation");
  sim->add_option("--keys", sim_keys);
  sim->add_option("--expired-frac", sim_frac);
  sim->add_option("--seed", sim_seed);
  sim->add_option("--seeds", sim_seeds, "Median over this many consecutive seeds");
  sim->add_option("--tick-ms", sim_params.tick_interval_ms);
  sim->add_option("--sample", sim_params.sample_size);
  sim->add_option("--threshold", sim_params.repeat_threshold);

  ExpiryExperiment ex;
  std::string sizes_list;
  auto* experiment = app.add_subcommand("experiment-expiry", "Lazy versus eager time to erasure by keyspace size");
  experiment->add_option("--sizes", sizes_list, "Comma-separated keyspace sizes");
  experiment->add_option("--short-frac", ex.short_fraction);
  experiment->add_option("--seeds", ex.seeds);
  experiment->add_option("--seed", ex.base_seed);
  experiment->add_flag("--eager-wall", ex.eager_wall, "Also measure eager erasure on a live store");
  experiment->add_option("--short-ttl", ex.short_ttl_s, "Short TTL in seconds for the live measurement");
  experiment->add_option("--scratch", ex.scratch_dir, "Directory for temporary logs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(config_path, port_override);
    if (*bench) {
      spec.distribution = parse_distribution(dist);
      spec.update_fraction = 1.0 - spec.read_fraction;
      if (!purposes_list.empty()) spec.purposes = split_list(purposes_list);
      return cmd_bench(spec, target, actor, secret, clients, bench_log, split_list(fsync_list), bench_crypto);
    }
    if (*compact) return cmd_compact(compact_log);
    if (*verify) return cmd_verify(verify_log_args);
    if (*query) {
      AuditFilter f;
      if (!q_subject.empty()) f.subject = q_subject;
      if (!q_key.empty()) f.key = q_key;
      if (!q_actor.empty()) f.actor = q_actor;
      f.from = q_from;
      f.to = q_to;
      return cmd_query(query_log_args, f);
    }
    if (*exp) return cmd_export(ex_subject, ex_target, ex_actor, ex_secret, ex_log);
    if (*sim) return cmd_simulate(sim_keys, sim_frac, sim_seed, std::max(1u, sim_seeds), sim_params);
    if (*experiment) {
      if (!sizes_list.empty()) {
        ex.sizes.clear();
        for (const auto& s : split_list(sizes_list)) ex.sizes.push_back(std::stoull(s));
      }
      std::cout << render_expiry_table(experiment_expiry(ex));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
