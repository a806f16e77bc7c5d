#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <random>

#include "gdprkv/codec.hpp"
#include "gdprkv/compliance.hpp"
#include "gdprkv/server.hpp"
#include "helpers.hpp"

using namespace gdprkv;

namespace {

constexpr Timestamp kStart = 1'700'000'000LL * kMicrosPerSecond;

struct Fixture {
  test::TempDir dir;
  ManualClock clock{kStart};
  ComplianceConfig cfg;
  std::unique_ptr<Store> store;
  std::unique_ptr<Dispatcher> dispatcher;

  explicit Fixture(const std::string& name = "store.log") : cfg(test::make_config(dir.file(name))) {
    cfg.auth = {{"admin", "adminpw"}, {"svc", "svcpw"}};
    store = Store::open(cfg, clock);
    dispatcher = std::make_unique<Dispatcher>(*store);
  }
  Reply run(Session& s, std::vector<Bytes> args) { return dispatcher->dispatch(args, s); }
  Session login(const std::string& actor, const std::string& secret) {
    Session s;
    REQUIRE(run(s, {"AUTH", actor, secret}) == Reply::ok());
    return s;
  }
};

std::uint64_t info_value(const std::string& info, const std::string& name) {
  auto pos = info.find(name + "=");
  REQUIRE(pos != std::string::npos);
  return std::stoull(info.substr(pos + name.size() + 1));
}

int raw_connect(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  return fd;
}

std::string read_until_close(int fd) {
  std::string out;
  char buf[4096];
  while (true) {
    ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

}  // namespace

TEST_CASE("commands before AUTH are refused") {
  Fixture f;
  Session s;
  auto r = f.run(s, {"PUT", "k", "v", "owner=alice"});
  CHECK(r.error_code() == "NOAUTH");
  CHECK(encode_reply(r).rfind("-ERR NOAUTH", 0) == 0);
  CHECK(f.run(s, {"AUTH", "svc", "wrong"}).error_code() == "NOAUTH");
  CHECK(f.run(s, {"AUTH", "ghost", "svcpw"}).error_code() == "NOAUTH");
  CHECK(f.run(s, {"INFO"}).kind == Reply::Kind::Bulk);
  CHECK(f.store->keyspace().size() == 0);
}

TEST_CASE("secret comparison") {
  CHECK(secrets_match("abc", "abc"));
  CHECK_FALSE(secrets_match("abc", "abd"));
  CHECK_FALSE(secrets_match("abc", "abcd"));
  CHECK_FALSE(secrets_match("", "x"));
}

TEST_CASE("arity and unknown commands") {
  Fixture f;
  auto s = f.login("admin", "adminpw");
  CHECK(f.run(s, {"GET"}).error_code() == "ARITY");
  CHECK(f.run(s, {"DEL", "a", "b"}).error_code() == "ARITY");
  CHECK(f.run(s, {"PUT", "k", "v", "loose"}).error_code() == "ARITY");
  CHECK(f.run(s, {"GET", "k", "colour=red"}).error_code() == "ARITY");
  CHECK(f.run(s, {"FLY", "k"}).error_code() == "UNKNOWN_COMMAND");
  CHECK(f.run(s, {"info"}).kind == Reply::Kind::Bulk);
}

TEST_CASE("put, get and metadata over the dispatcher") {
  Fixture f;
  auto a = f.login("admin", "adminpw");
  CHECK(f.run(a, {"GRANT", "svc", "ops=read,write,delete", "purposes=ads"}) == Reply::ok());
  auto s = f.login("svc", "svcpw");
  CHECK(f.run(s, {"PUT", "k1", "v1", "owner=alice", "purposes=ads", "purpose=ads"}) == Reply::simple("CREATED"));
  CHECK(f.run(s, {"PUT", "k1", "v2", "owner=alice", "purposes=ads", "purpose=ads"}) == Reply::simple("UPDATED"));
  CHECK(f.run(s, {"GET", "k1", "purpose=ads"}) == Reply::bulk("v2"));
  CHECK(f.run(s, {"GET", "k1", "purpose=billing"}).error_code() == "ACCESS_DENIED");
  CHECK(f.run(s, {"GET", "k9", "purpose=ads"}).error_code() == "NOT_FOUND");
  auto meta = f.run(s, {"GETMETA", "k1", "purpose=ads"});
  CHECK(meta == Reply::bulk(format_meta(f.store->keyspace().find("k1")->meta)));
  CHECK(f.run(s, {"PUT", "k2", "v", "owner=alice", "purposes=ads", "purpose=ads", "ttl_ms=abc"}).error_code() ==
        "BAD_TTL");
  CHECK(f.run(s, {"PUT", "k2", "v", "owner=alice", "purposes=ads", "purpose=ads", "ttl_ms=1000"}) ==
        Reply::simple("CREATED"));
  CHECK(f.store->keyspace().find("k2")->meta.expiry == kStart + kMicrosPerSecond);
  CHECK(f.run(s, {"DEL", "k1"}) == Reply::integer_reply(1));
  CHECK(f.run(s, {"DEL", "k1"}) == Reply::integer_reply(0));
  CHECK(f.run(s, {"COMPACT"}).error_code() == "ACCESS_DENIED");
  CHECK(f.run(a, {"COMPACT"}).kind == Reply::Kind::Bulk);
  CHECK(f.run(a, {"AUDITQ", "key=k1"}).elements.size() == 7);
}

TEST_CASE("INFO counters") {
  Fixture f;
  Session anon;
  auto fresh = f.run(anon, {"INFO"}).text;
  CHECK(info_value(fresh, "ops_total") == 0);
  CHECK(info_value(fresh, "denied_total") == 0);
  CHECK(info_value(fresh, "log_entries") == 0);
  CHECK(fresh.find("fsync_mode=none\n") != std::string::npos);
  CHECK(fresh.find("expiry_strategy=lazy\n") != std::string::npos);

  auto a = f.login("admin", "adminpw");
  f.run(a, {"GRANT", "svc", "ops=read,write", "purposes=ads"});
  auto s = f.login("svc", "svcpw");
  const int n = 25;
  for (int i = 0; i < n - 2; ++i) f.run(s, {"PUT", "k" + std::to_string(i), "v", "owner=o", "purposes=ads", "purpose=ads"});
  f.run(s, {"GET", "k0", "purpose=marketing"});
  auto info = f.run(anon, {"INFO"}).text;
  CHECK(info_value(info, "ops_total") == n);
  CHECK(info_value(info, "denied_total") == 1);
  CHECK(info_value(info, "log_entries") == n);
}

TEST_CASE("a dispatcher session matches direct library calls") {
  Fixture viaproto("a.log");
  Fixture direct("b.log");
  std::mt19937_64 rng(21);
  auto a = viaproto.login("admin", "adminpw");
  viaproto.run(a, {"GRANT", "svc", "ops=read,write,delete", "purposes=ads,marketing"});
  direct.store->grant(AclGrant{"svc", OpSet{OpKind::Read, OpKind::Write, OpKind::Delete}, {"ads", "marketing"},
                               std::nullopt},
                      "admin");
  auto s = viaproto.login("svc", "svcpw");

  auto expect = [](const std::function<Reply()>& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      return Reply::error(e.code(), e.what());
    }
  };

  for (int i = 0; i < 1500; ++i) {
    auto key = "k" + std::to_string(rng() % 30);
    auto owner = rng() % 2 ? std::string("alice") : std::string("bob");
    auto purpose = rng() % 3 ? std::string("ads") : std::string("marketing");
    const auto dt = static_cast<Timestamp>(rng() % 2000);
    viaproto.clock.advance(dt);
    direct.clock.advance(dt);
    Reply got;
    Reply want;
    switch (rng() % 7) {
      case 0:
      case 1: {
        auto value = test::random_bytes(rng, 20);
        std::vector<Bytes> args{"PUT", key, value, "owner=" + owner, "purposes=ads," + purpose, "purpose=ads"};
        std::optional<Timestamp> exp;
        if (rng() % 3 == 0) {
          exp = direct.clock.now() + static_cast<Timestamp>(rng() % 10'000 + 1);
          args.push_back("expiry=" + std::to_string(*exp));
        }
        got = viaproto.run(s, args);
        want = expect([&] {
          RecordMeta m;
          m.owner = owner;
          m.purposes = {"ads", purpose};
          m.expiry = exp;
          auto r = direct.store->put(key, value, m, "svc", "ads");
          return Reply::simple(r == PutResult::Created ? "CREATED" : "UPDATED");
        });
        break;
      }
      case 2:
        got = viaproto.run(s, {"GET", key, "purpose=" + purpose});
        want = expect([&] { return Reply::bulk(direct.store->get(key, "svc", purpose).value); });
        break;
      case 3:
        got = viaproto.run(s, {"DEL", key});
        want = expect([&] { return Reply::integer_reply(direct.store->del(key, "svc") ? 1 : 0); });
        break;
      case 4: {
        auto exp = direct.clock.now() + static_cast<Timestamp>(rng() % 10'000) - 1000;
        got = viaproto.run(s, {"TTLSET", key, std::to_string(exp)});
        want = expect([&] {
          direct.store->set_ttl(key, exp, "svc");
          return Reply::ok();
        });
        break;
      }
      case 5:
        got = viaproto.run(a, {"OBJECT", owner, "marketing"});
        want = expect([&] {
          return Reply::integer_reply(static_cast<std::int64_t>(object_subject(*direct.store, owner, "marketing", "admin")));
        });
        break;
      case 6:
        viaproto.store->expiry_tick();
        direct.store->expiry_tick();
        continue;
    }
    REQUIRE(got == want);
  }
  CHECK(viaproto.store->dump() == direct.store->dump());
}

TEST_CASE("server over TCP with pipelining") {
  Fixture f;
  Server server(*f.store, "127.0.0.1", 0);
  server.start();
  REQUIRE(server.port() != 0);

  auto admin = Client::connect("127.0.0.1", server.port());
  CHECK(admin.call({"AUTH", "admin", "adminpw"}) == Reply::ok());
  CHECK(admin.call({"GRANT", "svc", "ops=read,write", "purposes=ads"}) == Reply::ok());

  auto c = Client::connect("127.0.0.1", server.port());
  CHECK(c.call({"PUT", "k", "v"}).error_code() == "NOAUTH");
  CHECK(c.call({"AUTH", "svc", "svcpw"}) == Reply::ok());
  const int n = 300;
  for (int i = 0; i < n; ++i) {
    c.send({"PUT", "k" + std::to_string(i), "value-" + std::to_string(i), "owner=o", "purposes=ads", "purpose=ads"});
  }
  for (int i = 0; i < n; ++i) REQUIRE(c.receive() == Reply::simple("CREATED"));
  for (int i = 0; i < n; ++i) c.send({"GET", "k" + std::to_string(i), "purpose=ads"});
  for (int i = 0; i < n; ++i) REQUIRE(c.receive() == Reply::bulk("value-" + std::to_string(i)));

  std::uint64_t records = 0;
  server.run_on_executor([&] { records = f.store->keyspace().size(); });
  CHECK(records == n);
  auto info = c.call({"INFO"});
  CHECK(info_value(info.text, "ops_total") == 2 * n + 1);
  server.stop();
}

TEST_CASE("protocol errors close the connection") {
  Fixture f;
  Server server(*f.store, "127.0.0.1", 0);
  server.start();
  int fd = raw_connect(server.port());
  const std::string garbage = "*1\r\n$4\r\nINFO\r\nHELLO\r\n";
  REQUIRE(::send(fd, garbage.data(), garbage.size(), 0) == static_cast<ssize_t>(garbage.size()));
  auto out = read_until_close(fd);
  ::close(fd);
  ReplyParser p;
  p.feed(out);
  auto first = p.next();
  REQUIRE(first);
  CHECK(first->kind == Reply::Kind::Bulk);
  auto second = p.next();
  REQUIRE(second);
  CHECK(second->error_code() == "PROTO_ERROR");
  CHECK_FALSE(p.next());

  auto c = Client::connect("127.0.0.1", server.port());
  CHECK(c.call({"INFO"}).kind == Reply::Kind::Bulk);
  server.stop();
}

TEST_CASE("expiry runs in the background") {
  Fixture f;
  f.cfg.lazy.tick_interval_ms = 5;
  f.store = Store::open(f.cfg, f.clock);
  f.store->grant(AclGrant{"svc", OpSet{OpKind::Write}, {"ads"}, std::nullopt}, "admin");
  RecordMeta m;
  m.owner = "alice";
  m.purposes = {"ads"};
  m.expiry = kStart + 10;
  f.store->put("k", "v", m, "svc", "ads");
  Server server(*f.store, "127.0.0.1", 0);
  server.start();
  f.clock.advance(100);
  bool gone = false;
  for (int i = 0; i < 400 && !gone; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    server.run_on_executor([&] { gone = f.store->keyspace().find("k") == nullptr; });
  }
  CHECK(gone);
  server.stop();
}

TEST_CASE("endpoint parsing") {
  CHECK(parse_endpoint("127.0.0.1:7979") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 7979});
  CHECK_THROWS_AS(parse_endpoint("localhost"), Error);
  CHECK_THROWS_AS(parse_endpoint("h:0"), Error);
  CHECK_THROWS_AS(parse_endpoint("h:70000"), Error);
  CHECK_THROWS_AS(Client::connect("127.0.0.1", 1), Error);
}
