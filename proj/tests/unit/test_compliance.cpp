#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gdprkv/codec.hpp"
#include "gdprkv/compliance.hpp"
#include "helpers.hpp"

using namespace gdprkv;

namespace {

constexpr Timestamp kStart = 1'700'000'000LL * kMicrosPerSecond;

struct Fixture {
  test::TempDir dir;
  ManualClock clock{kStart};
  ComplianceConfig cfg = test::make_config(dir.file("store.log"));
  std::unique_ptr<Store> store;

  Fixture() { open(); }
  void open() {
    store.reset();
    store = Store::open(cfg, clock);
    store->grant(AclGrant{"svc", OpSet{OpKind::Read, OpKind::Write, OpKind::Delete}, {"ads", "marketing", "billing"},
                         std::nullopt},
                 "admin");
  }
  void put(const std::string& key, const std::string& value, const std::string& owner,
           TokenSet purposes = {"ads"}, std::optional<Timestamp> expiry = std::nullopt) {
    RecordMeta m;
    m.owner = owner;
    m.purposes = std::move(purposes);
    m.expiry = expiry;
    m.origin = "signup-form";
    m.recipients = {"payments-co"};
    store->put(key, value, m, "svc", "ads");
  }
  std::string raw_log() {
    store->log().flush();
    return read_file(cfg.log_path);
  }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("access report lists live records only") {
  Fixture f;
  f.put("alice:1", "v1", "alice");
  f.put("alice:2", "v2", "alice", {"ads", "marketing"}, kStart + 1000);
  f.put("alice:3", "v3", "alice", {"ads"}, kStart + 10 * kMicrosPerSecond);
  f.put("bob:1", "v", "bob");
  f.clock.advance(5000);
  auto rep = subject_access(*f.store, "alice", "alice");
  REQUIRE(rep.entries.size() == 2);
  CHECK(rep.entries[0].key == "alice:1");
  CHECK(rep.entries[0].storage_period == kIndefiniteStorage);
  CHECK(rep.entries[0].origin == "signup-form");
  CHECK(rep.entries[0].recipients == TokenSet{"payments-co"});
  CHECK(rep.entries[0].created_at == kStart);
  CHECK(rep.entries[1].key == "alice:3");
  CHECK(rep.entries[1].storage_period == std::to_string(kStart + 10 * kMicrosPerSecond));
  CHECK(rep.render().find("records=2\n") != std::string::npos);
}

TEST_CASE("access report needs the subject or an admin") {
  Fixture f;
  f.put("alice:1", "v1", "alice");
  CHECK(code_of([&] { subject_access(*f.store, "alice", "bob"); }) == ErrorCode::AccessDenied);
  CHECK(subject_access(*f.store, "alice", "admin").entries.size() == 1);
  CHECK(subject_access(*f.store, "nobody", "nobody").entries.empty());
}

TEST_CASE("export is byte-identical across runs and round-trips") {
  Fixture f;
  f.put("alice:b", std::string("bin\0\r\n\tary", 11), "alice", {"ads", "billing"}, kStart + 99'000'000);
  f.put("alice:a", "plain", "alice", {"ads"});
  f.put("bob:1", "other", "bob");
  auto first = export_portable(*f.store, "alice", "alice");
  f.clock.advance(1000);
  auto second = export_portable(*f.store, "alice", "admin");
  CHECK(first == second);
  auto nl = first.find('\n');
  REQUIRE(nl != std::string::npos);
  CHECK(first.substr(0, nl) ==
        "key=alice:a\tvalue_b64=cGxhaW4=\towner=alice\tpurposes=ads\tobjections=\texpiry_ts=-\t"
        "origin=signup-form\trecipients=payments-co\tcreated_at=" +
            std::to_string(kStart));

  auto records = parse_portable(first);
  REQUIRE(records.size() == 2);
  CHECK(records[1].value == std::string("bin\0\r\n\tary", 11));
  CHECK(records[1].meta.purposes == TokenSet{"ads", "billing"});

  Fixture g;
  g.clock.advance(777);
  CHECK(import_portable(*g.store, first, "admin") == 2);
  CHECK(export_portable(*g.store, "alice", "admin") == first);
  CHECK(code_of([&] { import_portable(*g.store, first, "svc"); }) == ErrorCode::AccessDenied);
}

TEST_CASE("export of random subjects is deterministic across stores") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Fixture a;
    Fixture b;
    const int n = static_cast<int>(rng() % 30) + 1;
    std::vector<std::tuple<std::string, std::string, std::string>> rows;
    for (int i = 0; i < n; ++i) {
      rows.emplace_back("k" + std::to_string(rng() % 50), test::random_bytes(rng, 40),
                        rng() % 2 ? "alice" : "bob");
    }
    for (const auto& [k, v, o] : rows) a.put(k, v, o);
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      // Insert in reverse, then reapply in order so the final values match.
      b.put(std::get<0>(*it), std::get<1>(*it), std::get<2>(*it));
    }
    for (const auto& [k, v, o] : rows) b.put(k, v, o);
    CHECK(export_portable(*a.store, "alice", "admin") == export_portable(*b.store, "alice", "admin"));
  }
}

TEST_CASE("malformed export stream") {
  CHECK_THROWS_AS(parse_portable("key=a\n"), Error);
  CHECK_THROWS_AS(parse_portable("no newline"), Error);
  CHECK(parse_portable("").empty());
}

TEST_CASE("forget erases records and scrubs the log after compaction") {
  Fixture f;
  const std::string secrets[] = {"alice-secret-diary-entry", "alice-home-address-42"};
  f.put("alice-diary-key", secrets[0], "alice");
  f.put("alice-address-key", secrets[1], "alice", {"ads"}, kStart + 3600 * kMicrosPerSecond);
  f.put("bob-key", "bob-value", "bob");
  f.store->get("alice-diary-key", "svc", "ads");
  CHECK(f.raw_log().find(secrets[0]) != std::string::npos);

  CHECK(forget_subject(*f.store, "alice", "alice") == 2);
  CHECK(f.store->keys_by_owner("alice").empty());
  CHECK(f.store->keyspace().find("alice-diary-key") == nullptr);
  CHECK(f.store->metrics().forget_erased == 2);
  CHECK(f.store->get("bob-key", "svc", "ads").value == "bob-value");

  f.store->compact("admin");
  auto log = f.raw_log();
  for (const auto& s : secrets) CHECK(log.find(s) == std::string::npos);
  CHECK(log.find("alice") == std::string::npos);
  CHECK(verify_log(f.cfg.log_path, NullCipher{}).ok());

  f.open();
  CHECK(f.store->get("bob-key", "svc", "ads").value == "bob-value");
  CHECK(f.store->keys_by_owner("alice").empty());
}

TEST_CASE("forget in realtime mode compacts before returning") {
  Fixture f;
  f.cfg.erasure_mode = ErasureMode::Realtime;
  f.open();
  f.put("alice-k", "alice-realtime-value", "alice");
  CHECK(forget_subject(*f.store, "alice", "admin") == 1);
  CHECK(f.raw_log().find("alice-realtime-value") == std::string::npos);
  CHECK(f.store->metrics().compactions == 1);
}

TEST_CASE("forget permissions and empty subjects") {
  Fixture f;
  f.put("alice-k", "v", "alice");
  CHECK(code_of([&] { forget_subject(*f.store, "alice", "bob"); }) == ErrorCode::AccessDenied);
  CHECK(f.store->keyspace().find("alice-k") != nullptr);
  CHECK(forget_subject(*f.store, "nobody", "admin") == 0);
}

TEST_CASE("object blocks the purpose and survives restart") {
  Fixture f;
  f.put("a1", "v", "alice", {"ads", "marketing"});
  f.put("a2", "v", "alice", {"marketing"});
  f.put("b1", "v", "bob", {"marketing"});
  CHECK(object_subject(*f.store, "alice", "marketing", "alice") == 2);
  CHECK(code_of([&] { f.store->get("a1", "svc", "marketing"); }) == ErrorCode::PurposeDenied);
  CHECK(f.store->get("a1", "svc", "ads").value == "v");
  CHECK(f.store->get("b1", "svc", "marketing").value == "v");
  CHECK(f.store->keys_by_purpose("marketing") == std::vector<Bytes>{"b1"});
  f.open();
  CHECK(code_of([&] { f.store->get("a2", "svc", "marketing"); }) == ErrorCode::PurposeDenied);
  CHECK(code_of([&] { object_subject(*f.store, "alice", "", "alice"); }) == ErrorCode::BadMeta);
  CHECK(code_of([&] { object_subject(*f.store, "alice", "ads", "bob"); }) == ErrorCode::AccessDenied);
}

TEST_CASE("breach trail returns matching entries and audits itself") {
  Fixture f;
  f.put("alice:1", "v", "alice");
  f.clock.advance(1000);
  f.store->get("alice:1", "svc", "ads");
  f.clock.advance(1000);
  f.store->get("alice:1", "svc", "ads");
  f.put("bob:1", "v", "bob");

  AuditFilter filter;
  filter.subject = "alice";
  auto trail = breach_trail(*f.store, filter, "admin");
  REQUIRE(trail.size() == 3);
  CHECK(trail[0].opcode == Opcode::Put);
  CHECK(trail[1].opcode == Opcode::Get);
  CHECK(trail[2].ts == kStart + 2000);

  AuditFilter window;
  window.from = kStart + 1000;
  window.to = kStart + 1500;
  CHECK(breach_trail(*f.store, window, "admin").size() == 1);

  auto es = read_log(f.cfg.log_path, NullCipher{});
  CHECK(es.back().opcode == Opcode::AuditQuery);
  CHECK(es.back().actor == "admin");

  CHECK(code_of([&] { breach_trail(*f.store, filter, "svc"); }) == ErrorCode::AccessDenied);
}

TEST_CASE("subject operations are audited with the subject") {
  Fixture f;
  f.put("alice:1", "v", "alice");
  subject_access(*f.store, "alice", "alice");
  export_portable(*f.store, "alice", "alice");
  object_subject(*f.store, "alice", "ads", "alice");
  AuditFilter filter;
  filter.subject = "alice";
  filter.actor = "alice";
  auto trail = breach_trail(*f.store, filter, "admin");
  REQUIRE(trail.size() == 3);
  CHECK(trail[0].opcode == Opcode::AccessReport);
  CHECK(trail[1].opcode == Opcode::Export);
  CHECK(trail[2].opcode == Opcode::Object);
}
