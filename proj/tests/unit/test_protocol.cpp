#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gdprkv/protocol.hpp"
#include "helpers.hpp"

using namespace gdprkv;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

Reply random_reply(std::mt19937_64& rng, int depth) {
  switch (rng() % (depth > 2 ? 5 : 6)) {
    case 0: return Reply::simple("S" + std::to_string(rng() % 1000));
    case 1: return Reply::error(ErrorCode::NotFound, "k" + std::to_string(rng() % 1000));
    case 2: return Reply::integer_reply(static_cast<std::int64_t>(rng()) / 3);
    case 3: return Reply::bulk(test::random_bytes(rng, 64));
    case 4: return Reply::nil();
    default: {
      std::vector<Reply> items(rng() % 4);
      for (auto& r : items) r = random_reply(rng, depth + 1);
      return Reply::array(std::move(items));
    }
  }
}

}  // namespace

TEST_CASE("request encoding is exact") {
  CHECK(encode_request({"GET", "k1", "purpose=ads"}) ==
        "*3\r\n$3\r\nGET\r\n$2\r\nk1\r\n$11\r\npurpose=ads\r\n");
  CHECK(encode_request({}) == "*0\r\n");
  CHECK(encode_request({""}) == "*1\r\n$0\r\n\r\n");
}

TEST_CASE("values containing CRLF survive") {
  std::vector<Bytes> req{"PUT", "k", std::string("a\r\nb\0c\r\n", 8), "owner=x"};
  CHECK(decode_request(encode_request(req)) == req);
}

TEST_CASE("random requests round-trip") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    std::vector<Bytes> req(rng() % 8 + 1);
    for (auto& a : req) a = test::random_bytes(rng, 100);
    REQUIRE(decode_request(encode_request(req)) == req);
  }
}

TEST_CASE("byte-by-byte feeding yields the same requests") {
  std::mt19937_64 rng(12);
  std::vector<std::vector<Bytes>> reqs;
  std::string stream;
  for (int i = 0; i < 50; ++i) {
    std::vector<Bytes> req(rng() % 5 + 1);
    for (auto& a : req) a = test::random_bytes(rng, 30);
    stream += encode_request(req);
    reqs.push_back(std::move(req));
  }
  RequestParser p;
  std::vector<std::vector<Bytes>> got;
  for (char c : stream) {
    p.feed(std::string_view(&c, 1));
    while (auto r = p.next()) got.push_back(std::move(*r));
  }
  CHECK(got == reqs);
  CHECK(p.buffered() == 0);
}

TEST_CASE("partial input waits for more bytes") {
  RequestParser p;
  p.feed("*2\r\n$3\r\nGET\r\n$2\r\nk");
  CHECK_FALSE(p.next());
  p.feed("1\r\n");
  auto r = p.next();
  REQUIRE(r);
  CHECK(*r == std::vector<Bytes>{"GET", "k1"});
}

TEST_CASE("malformed requests are protocol errors") {
  const char* bad[] = {
      "GET k1\r\n",
      "*x\r\n",
      "*-1\r\n",
      "*1\r\n+GET\r\n",
      "*1\r\n$3\r\nGETX\r\n",
      "*1\r\n$-2\r\n",
      "*1\r\n$abc\r\n",
      "*1\r\n$3\r\nGET\n\n",
      "*1\r\n$999999999999\r\n",
      "*99999999999\r\n",
  };
  for (const char* b : bad) {
    CAPTURE(b);
    RequestParser p;
    p.feed(b);
    CHECK(code_of([&] { p.next(); }) == ErrorCode::ProtoError);
  }
  CHECK(code_of([&] { decode_request("*1\r\n$1\r\na\r\nextra"); }) == ErrorCode::ProtoError);
  CHECK(code_of([&] { decode_request("*1\r\n$1\r\n"); }) == ErrorCode::ProtoError);
}

TEST_CASE("reply encoding") {
  CHECK(encode_reply(Reply::ok()) == "+OK\r\n");
  CHECK(encode_reply(Reply::error(ErrorCode::NoAuth, "authenticate first")) ==
        "-ERR NOAUTH authenticate first\r\n");
  CHECK(encode_reply(Reply::error(ErrorCode::NotFound, "bad\r\nkey")) == "-ERR NOT_FOUND bad  key\r\n");
  CHECK(encode_reply(Reply::integer_reply(-5)) == ":-5\r\n");
  CHECK(encode_reply(Reply::bulk("hi")) == "$2\r\nhi\r\n");
  CHECK(encode_reply(Reply::nil()) == "$-1\r\n");
  CHECK(encode_reply(Reply::array({Reply::integer_reply(1), Reply::bulk("")})) == "*2\r\n:1\r\n$0\r\n\r\n");
  CHECK(Reply::error(ErrorCode::Arity, "x").error_code() == "ARITY");
}

TEST_CASE("random replies round-trip") {
  std::mt19937_64 rng(13);
  std::vector<Reply> sent;
  std::string stream;
  for (int i = 0; i < 500; ++i) {
    sent.push_back(random_reply(rng, 0));
    stream += encode_reply(sent.back());
  }
  ReplyParser p;
  std::vector<Reply> got;
  for (std::size_t i = 0; i < stream.size(); i += 7) {
    p.feed(std::string_view(stream).substr(i, 7));
    while (auto r = p.next()) got.push_back(std::move(*r));
  }
  CHECK(got == sent);
}

TEST_CASE("command splitting") {
  auto c = split_command({"put", "k", "v", "owner=alice", "purposes=a,b", "origin="}, 2);
  CHECK(c.name == "PUT");
  CHECK(c.positional == std::vector<Bytes>{"k", "v"});
  REQUIRE(c.find("owner"));
  CHECK(*c.find("owner") == "alice");
  CHECK(*c.find("origin") == "");
  CHECK(c.find("missing") == nullptr);
  // Only trailing arguments are parsed as metadata.
  auto d = split_command({"GET", "a=b", "purpose=x"}, 1);
  CHECK(d.positional == std::vector<Bytes>{"a=b"});
  CHECK(code_of([] { split_command({"PUT", "k"}, 2); }) == ErrorCode::Arity);
  CHECK(code_of([] { split_command({"GET", "k", "loose"}, 1); }) == ErrorCode::Arity);
}
