#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gdprkv/audit_log.hpp"
#include "gdprkv/codec.hpp"
#include "gdprkv/compliance.hpp"
#include "gdprkv/server.hpp"
#include "gdprkv/store.hpp"

namespace py = pybind11;
using namespace gdprkv;

namespace {

struct PyStore {
  std::shared_ptr<const Clock> clock;
  std::unique_ptr<Store> store;
};

py::list token_list(const TokenSet& s) {
  py::list out;
  for (const auto& t : s) out.append(t);
  return out;
}

py::dict meta_dict(const RecordMeta& m) {
  py::dict d;
  d["owner"] = m.owner;
  d["purposes"] = token_list(m.purposes);
  d["objections"] = token_list(m.objections);
  d["expiry"] = m.expiry ? py::object(py::int_(*m.expiry)) : py::object(py::none());
  d["recipients"] = token_list(m.recipients);
  d["origin"] = m.origin;
  d["regions"] = token_list(m.allowed_regions);
  d["created_at"] = m.created_at;
  return d;
}

py::dict entry_dict(const AuditEntry& e) {
  py::dict d;
  d["seq"] = e.seq;
  d["ts"] = e.ts;
  d["op"] = std::string(to_string(e.opcode));
  d["outcome"] = std::string(to_string(e.outcome));
  d["actor"] = e.actor;
  d["purpose"] = e.purpose;
  d["key"] = py::bytes(e.key);
  d["payload"] = py::bytes(e.payload);
  return d;
}

py::list bytes_list(const std::vector<Bytes>& keys) {
  py::list out;
  for (const auto& k : keys) out.append(py::bytes(k));
  return out;
}

py::object reply_object(const Reply& r) {
  switch (r.kind) {
    case Reply::Kind::Simple: return py::str(r.text);
    case Reply::Kind::Integer: return py::int_(r.integer);
    case Reply::Kind::Bulk: return py::bytes(r.text);
    case Reply::Kind::Nil: return py::none();
    case Reply::Kind::Array: {
      py::list out;
      for (const auto& e : r.elements) out.append(reply_object(e));
      return out;
    }
    case Reply::Kind::Error: break;
  }
  throw Error(ErrorCode::ProtoError, "unexpected error reply: " + r.text);
}

py::dict metrics_dict(const StoreMetrics& m) {
  py::dict d;
  d["ops_total"] = m.ops_total;
  d["denied_total"] = m.denied_total;
  d["expired_erased"] = m.expired_erased;
  d["forget_erased"] = m.forget_erased;
  d["pending_expired"] = m.pending_expired;
  d["log_entries"] = m.log_entries;
  d["log_bytes"] = m.log_bytes;
  d["compactions"] = m.compactions;
  d["records"] = m.records;
  d["max_erasure_delay"] = m.max_erasure_delay;
  d["mean_erasure_delay"] = m.mean_erasure_delay;
  d["fsync_mode"] = m.fsync_mode;
  d["expiry_strategy"] = m.expiry_strategy;
  return d;
}

py::dict simulation_dict(const ExpirySimulation& s) {
  py::dict d;
  d["keyspace_size"] = s.keyspace_size;
  d["expired_keys"] = s.expired_keys;
  d["ticks"] = s.ticks;
  d["rounds"] = s.rounds;
  d["time_to_erasure_us"] = s.time_to_erasure;
  d["pending_at_probe"] = s.pending_at_probe;
  d["completed"] = s.completed;
  return d;
}

LazyParams lazy_params(std::uint32_t tick_ms, std::uint32_t sample, std::uint32_t threshold) {
  LazyParams p{tick_ms, sample, threshold};
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GDPR-aware key-value store";

  static py::exception<Error> error_type(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()));
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  py::class_<Clock, std::shared_ptr<Clock>>(m, "Clock").def("now", &Clock::now);
  py::class_<SystemClock, Clock, std::shared_ptr<SystemClock>>(m, "SystemClock").def(py::init<>());
  py::class_<ManualClock, Clock, std::shared_ptr<ManualClock>>(m, "ManualClock")
      .def(py::init<Timestamp>(), py::arg("start_us") = 0)
      .def("set", &ManualClock::set, py::arg("now_us"))
      .def("advance", &ManualClock::advance, py::arg("delta_us"));

  py::class_<ComplianceConfig>(m, "Config")
      .def(py::init([](const std::string& log_path, const std::string& fsync, const std::string& expiry_strategy,
                       const std::string& erasure_mode, std::int64_t compaction_interval_s,
                       const std::string& server_region, const TokenSet& admins,
                       const std::map<std::string, std::string, std::less<>>& auth, const std::string& cipher,
                       const std::string& key_file, std::uint32_t lazy_tick_ms, std::uint32_t lazy_sample,
                       std::uint32_t lazy_threshold, std::uint64_t rng_seed) {
             ComplianceConfig c;
             c.log_path = log_path;
             c.fsync = FsyncPolicy::parse(fsync);
             c.expiry_strategy = parse_expiry_strategy(expiry_strategy);
             c.erasure_mode = parse_erasure_mode(erasure_mode);
             c.compaction_interval_s = compaction_interval_s;
             c.server_region = server_region;
             c.admins = admins;
             c.auth = auth;
             c.cipher = cipher;
             c.key_file = key_file;
             c.lazy = lazy_params(lazy_tick_ms, lazy_sample, lazy_threshold);
             c.rng_seed = rng_seed;
             return c;
           }),
           py::arg("log_path"), py::arg("fsync") = "every:1000", py::arg("expiry_strategy") = "lazy",
           py::arg("erasure_mode") = "eventual", py::arg("compaction_interval_s") = 3600,
           py::arg("server_region") = "eu-west", py::arg("admins") = TokenSet{},
           py::arg("auth") = std::map<std::string, std::string, std::less<>>{}, py::arg("cipher") = "none",
           py::arg("key_file") = "", py::arg("lazy_tick_ms") = 100, py::arg("lazy_sample") = 20,
           py::arg("lazy_threshold") = 5, py::arg("rng_seed") = 0x5eed)
      .def_static("parse", &parse_config, py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def_readwrite("log_path", &ComplianceConfig::log_path)
      .def_property_readonly("fsync", [](const ComplianceConfig& c) { return c.fsync.to_string(); })
      .def_property_readonly("expiry_strategy",
                             [](const ComplianceConfig& c) { return std::string(to_string(c.expiry_strategy)); })
      .def_readonly("admins", &ComplianceConfig::admins)
      .def("echo", &ComplianceConfig::echo);

  py::class_<PyStore>(m, "Store")
      .def_static(
          "open",
          [](const ComplianceConfig& cfg, std::shared_ptr<Clock> clock) {
            auto s = std::make_unique<PyStore>();
            s->clock = clock ? std::move(clock) : std::make_shared<SystemClock>();
            s->store = Store::open(cfg, *s->clock);
            return s;
          },
          py::arg("config"), py::arg("clock") = nullptr)
      .def(
          "put",
          [](PyStore& s, const Bytes& key, const Bytes& value, const std::string& owner, const TokenSet& purposes,
             const std::string& actor, const std::string& purpose, std::optional<Timestamp> expiry,
             const TokenSet& objections, const TokenSet& recipients, const std::string& origin,
             const TokenSet& regions) {
            RecordMeta meta;
            meta.owner = owner;
            meta.purposes = purposes;
            meta.expiry = expiry;
            meta.objections = objections;
            meta.recipients = recipients;
            meta.origin = origin;
            meta.allowed_regions = regions;
            auto r = s.store->put(key, value, std::move(meta), actor, purpose);
            return r == PutResult::Created ? "created" : "updated";
          },
          py::arg("key"), py::arg("value"), py::kw_only(), py::arg("owner"), py::arg("purposes"), py::arg("actor"),
          py::arg("purpose"), py::arg("expiry") = std::nullopt, py::arg("objections") = TokenSet{},
          py::arg("recipients") = TokenSet{}, py::arg("origin") = "direct", py::arg("regions") = TokenSet{})
      .def(
          "get",
          [](PyStore& s, const Bytes& key, const std::string& actor, const std::string& purpose) {
            return py::bytes(s.store->get(key, actor, purpose).value);
          },
          py::arg("key"), py::kw_only(), py::arg("actor"), py::arg("purpose"))
      .def(
          "get_meta",
          [](PyStore& s, const Bytes& key, const std::string& actor, const std::string& purpose) {
            return meta_dict(s.store->get_meta(key, actor, purpose));
          },
          py::arg("key"), py::kw_only(), py::arg("actor"), py::arg("purpose"))
      .def(
          "delete", [](PyStore& s, const Bytes& key, const std::string& actor) { return s.store->del(key, actor); },
          py::arg("key"), py::kw_only(), py::arg("actor"))
      .def(
          "set_ttl",
          [](PyStore& s, const Bytes& key, Timestamp expiry, const std::string& actor) {
            s.store->set_ttl(key, expiry, actor);
          },
          py::arg("key"), py::arg("expiry"), py::kw_only(), py::arg("actor"))
      .def(
          "clear_ttl", [](PyStore& s, const Bytes& key, const std::string& actor) { s.store->clear_ttl(key, actor); },
          py::arg("key"), py::kw_only(), py::arg("actor"))
      .def(
          "grant",
          [](PyStore& s, const std::string& actor, const std::string& ops, const TokenSet& purposes,
             std::optional<Timestamp> valid_until, const std::string& admin) {
            s.store->grant(AclGrant{actor, parse_ops(ops), purposes, valid_until}, admin);
          },
          py::arg("actor"), py::kw_only(), py::arg("ops"), py::arg("purposes"), py::arg("valid_until") = std::nullopt,
          py::arg("admin"))
      .def(
          "revoke", [](PyStore& s, const std::string& actor, const std::string& admin) { return s.store->revoke(actor, admin); },
          py::arg("actor"), py::kw_only(), py::arg("admin"))
      .def("keys_by_owner", [](PyStore& s, const std::string& subject) { return bytes_list(s.store->keys_by_owner(subject)); })
      .def("keys_by_purpose", [](PyStore& s, const std::string& p) { return bytes_list(s.store->keys_by_purpose(p)); })
      .def("expiry_tick", [](PyStore& s) { return s.store->expiry_tick(); })
      .def("maintenance", [](PyStore& s) { s.store->maintenance(); })
      .def(
          "compact",
          [](PyStore& s, const std::string& actor) {
            auto r = s.store->compact(actor);
            py::dict d;
            d["history_entries"] = r.history_entries;
            d["snapshot_entries"] = r.snapshot_entries;
            d["redacted_entries"] = r.redacted_entries;
            d["forgotten_subjects"] = r.forgotten_subjects;
            d["bytes_before"] = r.bytes_before;
            d["bytes_after"] = r.bytes_after;
            return d;
          },
          py::kw_only(), py::arg("actor"))
      .def("metrics", [](PyStore& s) { return metrics_dict(s.store->metrics()); })
      .def("dump", [](PyStore& s) { return py::bytes(s.store->dump()); })
      .def("flush", [](PyStore& s) { s.store->log().flush(); })
      .def(
          "subject_access",
          [](PyStore& s, const std::string& subject, const std::string& actor) {
            auto rep = subject_access(*s.store, subject, actor);
            py::list entries;
            for (const auto& e : rep.entries) {
              py::dict d;
              d["key"] = py::bytes(e.key);
              d["purposes"] = token_list(e.purposes);
              d["objections"] = token_list(e.objections);
              d["recipients"] = token_list(e.recipients);
              d["origin"] = e.origin;
              d["storage_period"] = e.storage_period;
              d["created_at"] = e.created_at;
              entries.append(d);
            }
            return entries;
          },
          py::arg("subject"), py::kw_only(), py::arg("actor"))
      .def(
          "export",
          [](PyStore& s, const std::string& subject, const std::string& actor) {
            return py::bytes(export_portable(*s.store, subject, actor));
          },
          py::arg("subject"), py::kw_only(), py::arg("actor"))
      .def(
          "import_records",
          [](PyStore& s, const Bytes& stream, const std::string& actor) {
            return import_portable(*s.store, stream, actor);
          },
          py::arg("stream"), py::kw_only(), py::arg("actor"))
      .def(
          "forget",
          [](PyStore& s, const std::string& subject, const std::string& actor) {
            return forget_subject(*s.store, subject, actor);
          },
          py::arg("subject"), py::kw_only(), py::arg("actor"))
      .def(
          "object",
          [](PyStore& s, const std::string& subject, const std::string& purpose, const std::string& actor) {
            return object_subject(*s.store, subject, purpose, actor);
          },
          py::arg("subject"), py::arg("purpose"), py::kw_only(), py::arg("actor"))
      .def(
          "audit_query",
          [](PyStore& s, const std::string& actor, std::optional<std::string> subject, std::optional<Bytes> key,
             std::optional<std::string> by_actor, std::optional<Timestamp> from, std::optional<Timestamp> to) {
            AuditFilter f{std::move(subject), std::move(key), std::move(by_actor), from, to};
            py::list out;
            for (const auto& e : breach_trail(*s.store, f, actor)) out.append(entry_dict(e));
            return out;
          },
          py::kw_only(), py::arg("actor"), py::arg("subject") = std::nullopt, py::arg("key") = std::nullopt,
          py::arg("by_actor") = std::nullopt, py::arg("from_ts") = std::nullopt, py::arg("to_ts") = std::nullopt);

  m.def(
      "verify_log",
      [](const std::string& path, const std::string& cipher, const std::string& key_file) {
        auto rep = verify_log(path, *make_cipher(cipher, key_file));
        py::dict d;
        d["ok"] = rep.ok();
        d["entries"] = rep.entries;
        d["last_good_seq"] = rep.last_good_seq;
        d["bytes"] = rep.bytes;
        d["violation"] = rep.violation ? py::object(py::str(std::string(to_string(rep.violation->kind)) + ": " +
                                                            rep.violation->message))
                                       : py::object(py::none());
        return d;
      },
      py::arg("path"), py::arg("cipher") = "none", py::arg("key_file") = "");
  m.def(
      "read_log",
      [](const std::string& path, const std::string& cipher, const std::string& key_file) {
        py::list out;
        for (const auto& e : read_log(path, *make_cipher(cipher, key_file))) out.append(entry_dict(e));
        return out;
      },
      py::arg("path"), py::arg("cipher") = "none", py::arg("key_file") = "");
  m.def(
      "simulate_lazy",
      [](std::uint64_t keys, double expired_fraction, std::uint64_t seed, std::uint32_t tick_ms,
         std::uint32_t sample, std::uint32_t threshold) {
        auto params = lazy_params(tick_ms, sample, threshold);
        ExpirySimulation sim;
        {
          py::gil_scoped_release release;
          sim = simulate_lazy(keys, expired_fraction, params, seed);
        }
        return simulation_dict(sim);
      },
      py::arg("keys"), py::arg("expired_fraction"), py::arg("seed") = 1, py::arg("tick_ms") = 100,
      py::arg("sample") = 20, py::arg("threshold") = 5);
  m.def(
      "simulate_eager",
      [](std::uint64_t keys, double expired_fraction, std::uint64_t seed, std::uint32_t tick_ms) {
        return simulation_dict(simulate_eager(keys, expired_fraction, lazy_params(tick_ms, 20, 5), seed));
      },
      py::arg("keys"), py::arg("expired_fraction"), py::arg("seed") = 1, py::arg("tick_ms") = 100);

  py::class_<Client>(m, "Client")
      .def(py::init([](const std::string& host, std::uint16_t port) { return Client::connect(host, port); }),
           py::arg("host"), py::arg("port"))
      .def(
          "call",
          [](Client& c, const std::vector<Bytes>& args) {
            Reply r;
            {
              py::gil_scoped_release release;
              r = c.call(args);
            }
            if (r.is_error()) {
              py::tuple t = py::make_tuple(r.error_code(), r.text);
              PyErr_SetObject(error_type.ptr(), t.ptr());
              throw py::error_already_set();
            }
            return reply_object(r);
          },
          py::arg("args"));
}
