#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/resource.h>

#include <csignal>
#include <random>

#include "gdprkv/codec.hpp"
#include "gdprkv/store.hpp"
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
  }
  void grant_svc(OpSet ops = OpSet{OpKind::Read, OpKind::Write, OpKind::Delete},
                 TokenSet purposes = {"ads", "marketing"}, std::optional<Timestamp> until = std::nullopt) {
    store->grant(AclGrant{"svc", ops, std::move(purposes), until}, "admin");
  }
  RecordMeta meta(std::string owner = "alice", TokenSet purposes = {"ads"}) {
    RecordMeta m;
    m.owner = std::move(owner);
    m.purposes = std::move(purposes);
    return m;
  }
  std::vector<AuditEntry> entries() {
    store->log().flush();
    return read_log(cfg.log_path, NullCipher{});
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

TEST_CASE("put creates then updates") {
  Fixture f;
  f.grant_svc();
  CHECK(f.store->put("k1", "v", f.meta(), "svc", "ads") == PutResult::Created);
  CHECK(f.store->put("k1", "v2", f.meta(), "svc", "ads") == PutResult::Updated);
  CHECK(f.store->keys_by_owner("alice") == std::vector<Bytes>{"k1"});
  CHECK(f.store->get("k1", "svc", "ads").value == "v2");
}

TEST_CASE("update keeps created_at") {
  Fixture f;
  f.grant_svc();
  f.store->put("k1", "v", f.meta(), "svc", "ads");
  f.clock.advance(5000);
  f.store->put("k1", "v2", f.meta(), "svc", "ads");
  CHECK(f.store->keyspace().find("k1")->meta.created_at == kStart);
}

TEST_CASE("put validation") {
  Fixture f;
  f.grant_svc();
  CHECK(code_of([&] { f.store->put("", "v", f.meta(), "svc", "ads"); }) == ErrorCode::BadMeta);
  CHECK(code_of([&] { f.store->put("k", "v", f.meta(""), "svc", "ads"); }) == ErrorCode::BadMeta);
  CHECK(code_of([&] { f.store->put("k", "v", f.meta(), "svc", "billing"); }) == ErrorCode::AccessDenied);
  CHECK(code_of([&] { f.store->put("k", "v", f.meta(), "svc", ""); }) == ErrorCode::AccessDenied);
  CHECK(code_of([&] { f.store->put("k", "v", f.meta(), "nobody", "ads"); }) == ErrorCode::AccessDenied);
  auto m = f.meta();
  m.expiry = kStart;
  CHECK(code_of([&] { f.store->put("k", "v", m, "svc", "ads"); }) == ErrorCode::BadTtl);
  CHECK(f.store->keyspace().size() == 0);
}

TEST_CASE("region gate") {
  Fixture f;
  f.cfg.server_region = "us-east";
  f.open();
  f.grant_svc();
  auto m = f.meta();
  m.allowed_regions = {"eu-west"};
  CHECK(code_of([&] { f.store->put("k1", "v", m, "svc", "ads"); }) == ErrorCode::RegionDenied);
  CHECK(f.store->keyspace().find("k1") == nullptr);
  m.allowed_regions = {"eu-west", "us-east"};
  CHECK(f.store->put("k1", "v", m, "svc", "ads") == PutResult::Created);
}

TEST_CASE("get enforces purpose and objections") {
  Fixture f;
  f.grant_svc();
  f.store->put("k1", "v", f.meta("alice", {"ads"}), "svc", "ads");
  auto r = f.store->get("k1", "svc", "ads");
  CHECK(r.value == "v");
  CHECK(r.meta.owner == "alice");

  auto m = f.meta("alice", {"marketing"});
  m.objections = {"marketing"};
  f.store->put("k2", "v", m, "svc", "ads");
  CHECK(code_of([&] { f.store->get("k2", "svc", "marketing"); }) == ErrorCode::PurposeDenied);
  CHECK(code_of([&] { f.store->get("k1", "svc", ""); }) == ErrorCode::AccessDenied);
  CHECK(code_of([&] { f.store->get("missing", "svc", "ads"); }) == ErrorCode::NotFound);
}

TEST_CASE("expired key reads as not found and is erased") {
  Fixture f;
  f.grant_svc();
  auto m = f.meta();
  m.expiry = kStart + 1000;
  f.store->put("k1", "v", m, "svc", "ads");
  f.clock.set(kStart + 2000);
  CHECK(f.store->keyspace().find("k1") != nullptr);
  CHECK(code_of([&] { f.store->get("k1", "svc", "ads"); }) == ErrorCode::NotFound);
  CHECK(f.store->keyspace().find("k1") == nullptr);
  CHECK(f.store->metrics().expired_erased == 1);
  CHECK(f.store->lazy_tick() == 0);
  auto es = f.entries();
  std::size_t erasures = 0;
  for (const auto& e : es) erasures += e.opcode == Opcode::ExpireErase;
  CHECK(erasures == 1);
}

TEST_CASE("key without ttl lives forever") {
  Fixture f;
  f.grant_svc();
  f.store->put("k1", "v", f.meta(), "svc", "ads");
  f.clock.advance(400LL * 24 * 3600 * kMicrosPerSecond);
  CHECK_FALSE(f.store->passive_check("k1"));
  CHECK(f.store->expiry_tick() == 0);
  CHECK(f.store->get("k1", "svc", "ads").value == "v");
}

TEST_CASE("delete") {
  Fixture f;
  f.grant_svc();
  auto m = f.meta();
  m.expiry = kStart + 5'000'000;
  f.store->put("k1", "v", m, "svc", "ads");
  CHECK(f.store->del("k1", "svc"));
  CHECK(code_of([&] { f.store->get("k1", "svc", "ads"); }) == ErrorCode::NotFound);
  CHECK(f.store->keyspace().indices().by_expiry.empty());
  CHECK_FALSE(f.store->del("k1", "svc"));
}

TEST_CASE("ttl set and clear") {
  Fixture f;
  f.grant_svc();
  f.store->put("k", "v", f.meta(), "svc", "ads");
  const Timestamp t1 = kStart + 300 * kMicrosPerSecond;
  f.store->set_ttl("k", t1, "svc");
  CHECK(f.store->keyspace().indices().by_expiry == std::set<std::pair<Timestamp, Bytes>>{{t1, "k"}});
  f.store->set_ttl("k", t1 + 1, "svc");
  CHECK(f.store->keyspace().indices().by_expiry == std::set<std::pair<Timestamp, Bytes>>{{t1 + 1, "k"}});
  f.store->clear_ttl("k", "svc");
  CHECK(f.store->keyspace().indices().by_expiry.empty());
  f.clock.advance(3600 * kMicrosPerSecond);
  CHECK(f.store->expiry_tick() == 0);
  CHECK(f.store->keyspace().find("k") != nullptr);
  CHECK(code_of([&] { f.store->set_ttl("k", kStart, "svc"); }) == ErrorCode::BadTtl);
  CHECK(code_of([&] { f.store->set_ttl("nope", t1 * 2, "svc"); }) == ErrorCode::NotFound);
}

TEST_CASE("grant, revoke and time-bounded grants") {
  Fixture f;
  f.store->grant(AclGrant{"svc", OpSet{OpKind::Write}, {"ads"}, std::nullopt}, "admin");
  f.store->put("k1", "v", f.meta(), "svc", "ads");
  f.store->grant(AclGrant{"reader", OpSet{OpKind::Read}, {"ads"}, kStart + kMicrosPerSecond}, "admin");
  CHECK(f.store->get("k1", "reader", "ads").value == "v");
  f.clock.advance(2 * kMicrosPerSecond);
  CHECK(code_of([&] { f.store->get("k1", "reader", "ads"); }) == ErrorCode::AccessDenied);

  f.store->grant(AclGrant{"reader", OpSet{OpKind::Read}, {"ads"}, std::nullopt}, "admin");
  CHECK(f.store->get("k1", "reader", "ads").value == "v");
  CHECK(f.store->revoke("reader", "admin"));
  CHECK(code_of([&] { f.store->get("k1", "reader", "ads"); }) == ErrorCode::AccessDenied);
  CHECK_FALSE(f.store->revoke("reader", "admin"));

  CHECK(code_of([&] { f.store->grant(AclGrant{"x", OpSet::all(), {"*"}, std::nullopt}, "svc"); }) ==
        ErrorCode::AccessDenied);
  CHECK(code_of([&] { f.store->revoke("svc", "svc"); }) == ErrorCode::AccessDenied);
  CHECK(code_of([&] { f.store->grant(AclGrant{"@system", OpSet::all(), {"*"}, std::nullopt}, "admin"); }) ==
        ErrorCode::BadMeta);
}

TEST_CASE("keys_by_purpose") {
  Fixture f;
  f.grant_svc();
  f.store->put("a", "v", f.meta("alice", {"ads"}), "svc", "ads");
  f.store->put("b", "v", f.meta("bob", {"ads", "marketing"}), "svc", "ads");
  f.store->put("c", "v", f.meta("bob", {"marketing"}), "svc", "ads");
  CHECK(f.store->keys_by_purpose("ads") == std::vector<Bytes>{"a", "b"});
  CHECK(f.store->keys_by_purpose("marketing") == std::vector<Bytes>{"b", "c"});
  CHECK(f.store->keys_by_owner("nobody").empty());
}

TEST_CASE("denials are audited and counted") {
  Fixture f;
  f.grant_svc();
  f.store->put("k1", "v", f.meta(), "svc", "ads");
  CHECK_THROWS(f.store->get("k1", "intruder", "ads"));
  auto es = f.entries();
  REQUIRE(!es.empty());
  CHECK(es.back().opcode == Opcode::Get);
  CHECK(es.back().outcome == Outcome::Denied);
  CHECK(es.back().actor == "intruder");
  CHECK(f.store->metrics().denied_total == 1);
}

TEST_CASE("read entries carry a digest, not the value") {
  Fixture f;
  f.grant_svc();
  const std::string value = "very-personal-value-0123456789";
  f.store->put("k1", value, f.meta(), "svc", "ads");
  f.store->get("k1", "svc", "ads");
  auto es = f.entries();
  CHECK(es.back().opcode == Opcode::Get);
  CHECK(es.back().payload == digest_bytes(sha256(value)));
  CHECK(es.back().payload.find(value) == std::string::npos);
}

TEST_CASE("lazy and eager ticks erase expired keys with audit entries") {
  for (auto strategy : {ExpiryStrategy::Lazy, ExpiryStrategy::Eager}) {
    Fixture f;
    f.cfg.expiry_strategy = strategy;
    f.open();
    f.grant_svc();
    for (int i = 0; i < 50; ++i) {
      auto m = f.meta();
      m.expiry = kStart + (i < 30 ? 100 : 10'000'000);
      f.store->put("k" + std::to_string(i), "v", m, "svc", "ads");
    }
    f.clock.set(kStart + 200);
    std::size_t erased = 0;
    for (int t = 0; t < 200 && erased < 30; ++t) erased += f.store->expiry_tick();
    CHECK(erased == 30);
    CHECK(f.store->keyspace().size() == 20);
    CHECK(f.store->erasure_stats().count() == 30);
    CHECK(f.store->erasure_stats().max_delay() == 100);
    std::size_t audited = 0;
    for (const auto& e : f.entries()) audited += e.opcode == Opcode::ExpireErase;
    CHECK(audited == 30);
  }
}

TEST_CASE("replay reproduces the live state") {
  Fixture f;
  f.grant_svc(OpSet::all(), {"ads", "marketing"});
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    auto key = "k" + std::to_string(rng() % 40);
    f.clock.advance(static_cast<Timestamp>(rng() % 1000));
    try {
      switch (rng() % 6) {
        case 0:
        case 1: {
          auto m = f.meta(rng() % 2 ? "alice" : "bob", rng() % 2 ? TokenSet{"ads"} : TokenSet{"ads", "marketing"});
          if (rng() % 3 == 0) m.expiry = f.clock.now() + static_cast<Timestamp>(rng() % 5000 + 1);
          f.store->put(key, "value" + std::to_string(i), m, "svc", "ads");
          break;
        }
        case 2: f.store->get(key, "svc", rng() % 2 ? "ads" : "marketing"); break;
        case 3: f.store->del(key, "svc"); break;
        case 4: f.store->set_ttl(key, f.clock.now() + static_cast<Timestamp>(rng() % 5000 + 1), "svc"); break;
        case 5: f.store->expiry_tick(); break;
      }
    } catch (const Error&) {
    }
  }
  auto live = f.store->dump();
  f.store->log().flush();
  auto replayed = replay_log(f.cfg.log_path, NullCipher{});
  CHECK(dump_state(replayed.keyspace, replayed.grants) == live);
  f.open();
  CHECK(f.store->dump() == live);
}

TEST_CASE("compaction keeps the state and drops deleted values") {
  Fixture f;
  f.grant_svc();
  const std::string gone = "deleted-value-ABCDEFG";
  f.store->put("k", gone, f.meta(), "svc", "ads");
  f.store->put("k2", "kept", f.meta("bob"), "svc", "ads");
  f.store->del("k", "svc");
  f.store->log().flush();
  CHECK(read_file(f.cfg.log_path).find(gone) != std::string::npos);
  auto live = f.store->dump();
  f.store->compact("admin");
  CHECK(read_file(f.cfg.log_path).find(gone) == std::string::npos);
  CHECK(verify_log(f.cfg.log_path, NullCipher{}).ok());
  f.open();
  CHECK(f.store->dump() == live);
  CHECK(f.store->get("k2", "svc", "ads").value == "kept");
  CHECK(code_of([&] { f.store->compact("svc"); }) == ErrorCode::AccessDenied);
}

TEST_CASE("a denied compaction is not a segment boundary") {
  Fixture f;
  f.grant_svc();
  f.store->put("k", "v", f.meta(), "svc", "ads");
  CHECK_THROWS(f.store->compact("svc"));
  f.store->put("k2", "v2", f.meta(), "svc", "ads");
  auto live = f.store->dump();
  f.store->log().flush();
  auto replayed = replay_log(f.cfg.log_path, NullCipher{});
  CHECK(dump_state(replayed.keyspace, replayed.grants) == live);
  f.store->compact("admin");
  f.open();
  CHECK(f.store->dump() == live);
}

TEST_CASE("periodic compaction in maintenance") {
  Fixture f;
  f.cfg.compaction_interval_s = 10;
  f.open();
  f.grant_svc();
  f.store->put("k", "v", f.meta(), "svc", "ads");
  f.store->maintenance();
  CHECK(f.store->metrics().compactions == 0);
  f.clock.advance(11 * kMicrosPerSecond);
  f.store->maintenance();
  CHECK(f.store->metrics().compactions == 1);
}

TEST_CASE("log io failure refuses the operation and everything after") {
  Fixture f;
  f.cfg.fsync = FsyncPolicy::always();
  f.open();
  f.grant_svc();
  f.store->put("k0", "v", f.meta(), "svc", "ads");
  auto before = f.store->dump();

  auto old_handler = std::signal(SIGXFSZ, SIG_IGN);
  rlimit saved{};
  getrlimit(RLIMIT_FSIZE, &saved);
  rlimit tight = saved;
  tight.rlim_cur = f.store->log().bytes() + 16;
  setrlimit(RLIMIT_FSIZE, &tight);
  auto code = code_of([&] { f.store->put("k1", std::string(200, 'x'), f.meta(), "svc", "ads"); });
  setrlimit(RLIMIT_FSIZE, &saved);
  std::signal(SIGXFSZ, old_handler);

  CHECK(code == ErrorCode::IoError);
  CHECK(f.store->keyspace().find("k1") == nullptr);
  CHECK(f.store->dump() == before);
  CHECK(code_of([&] { f.store->get("k0", "svc", "ads"); }) == ErrorCode::IoError);
}

TEST_CASE("metrics") {
  Fixture f;
  auto m0 = f.store->metrics();
  CHECK(m0.ops_total == 0);
  CHECK(m0.denied_total == 0);
  CHECK(m0.log_entries == 0);
  f.grant_svc();
  f.store->put("k", "v", f.meta(), "svc", "ads");
  CHECK_THROWS(f.store->get("k", "svc", "billing"));
  auto m = f.store->metrics();
  CHECK(m.ops_total == 3);
  CHECK(m.denied_total == 1);
  CHECK(m.log_entries == 3);
  CHECK(m.records == 1);
  auto text = m.render();
  CHECK(text.find("ops_total=3\n") != std::string::npos);
  CHECK(text.find("fsync_mode=none\n") != std::string::npos);
}
