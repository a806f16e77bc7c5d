#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gdprkv/codec.hpp"
#include "gdprkv/record.hpp"
#include "helpers.hpp"

using namespace gdprkv;

TEST_CASE("byte writer is little endian") {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x03040506);
  w.u64(0x0708090a0b0c0d0eULL);
  w.str16("ab");
  CHECK(w.bytes() == std::string("\x02\x01\x06\x05\x04\x03\x0e\x0d\x0c\x0b\x0a\x09\x08\x07\x02\x00" "ab", 18));

  ByteReader r(w.bytes());
  CHECK(r.u16() == 0x0102);
  CHECK(r.u32() == 0x03040506);
  CHECK(r.u64() == 0x0708090a0b0c0d0eULL);
  CHECK(r.str16() == "ab");
  CHECK(r.done());
  CHECK_THROWS_AS(r.u8(), Error);
}

TEST_CASE("str16 rejects oversize strings") {
  ByteWriter w;
  CHECK_THROWS_AS(w.str16(std::string(70000, 'x')), Error);
}

TEST_CASE("crc32 check value") {
  // Standard check value of CRC-32/ISO-HDLC.
  CHECK(crc32_ieee("123456789") == 0xCBF43926u);
  CHECK(crc32_ieee("") == 0u);
}

TEST_CASE("sha256 known answers") {
  CHECK(to_hex(digest_bytes(sha256("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(digest_bytes(sha256(""))) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256("ab", "c") == sha256("abc"));
}

TEST_CASE("base64 test vectors") {
  const std::pair<const char*, const char*> vectors[] = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},        {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"},
  };
  for (auto [plain, enc] : vectors) {
    CHECK(base64_encode(plain) == enc);
    CHECK(base64_decode(enc) == plain);
  }
  CHECK_THROWS_AS(base64_decode("Zm9v!"), Error);
  CHECK_THROWS_AS(base64_decode("Zm9"), Error);
}

TEST_CASE("base64 and percent encoding round trip random bytes") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    auto s = test::random_bytes(rng, 64);
    CHECK(base64_decode(base64_encode(s)) == s);
    auto p = percent_encode(s);
    CHECK(percent_decode(p) == s);
    for (unsigned char c : p) {
      CHECK(c > 0x20);
      CHECK(c < 0x7f);
      CHECK(c != ',');
      CHECK(c != '=');
    }
  }
}

TEST_CASE("percent decode rejects truncated escapes") {
  CHECK_THROWS_AS(percent_decode("%4"), Error);
  CHECK_THROWS_AS(percent_decode("abc%"), Error);
  CHECK_THROWS_AS(percent_decode("%zz"), Error);
  CHECK(percent_decode("%41b") == "Ab");
}

TEST_CASE("token sets survive join and split") {
  TokenSet s{"a,b", "c=d", "", "x y", "%"};
  s.erase("");
  CHECK(split_tokens(join_tokens(s)) == s);
  CHECK(split_tokens("").empty());
  CHECK(join_tokens({"b", "a"}) == "a,b");
}

TEST_CASE("ops parse and format") {
  CHECK(parse_ops("read,write") == OpSet{OpKind::Read, OpKind::Write});
  CHECK(parse_ops("all") == OpSet::all());
  CHECK(format_ops(OpSet{OpKind::Delete, OpKind::Read}) == "read,delete");
  CHECK_THROWS_AS(parse_ops("read,fly"), Error);
}

TEST_CASE("record body round trips") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    Record r;
    r.key = "k" + std::to_string(i);
    r.value = test::random_bytes(rng, 100);
    r.meta.owner = "owner" + std::to_string(rng() % 5);
    for (int j = 0; j < static_cast<int>(rng() % 4); ++j) r.meta.purposes.insert("p" + std::to_string(rng() % 6));
    for (int j = 0; j < static_cast<int>(rng() % 3); ++j) r.meta.objections.insert("p" + std::to_string(rng() % 6));
    if (rng() % 2) r.meta.expiry = static_cast<Timestamp>(rng() % 1'000'000'000);
    if (rng() % 2) r.meta.recipients.insert("processor");
    if (rng() % 3 == 0) r.meta.allowed_regions.insert("eu-west");
    r.meta.origin = rng() % 2 ? "direct" : "import";
    r.meta.created_at = static_cast<Timestamp>(rng() % 1'000'000);
    std::string body;
    encode_record_body(body, r);
    CHECK(decode_record_body(r.key, body) == r);
  }
}

TEST_CASE("grant body round trips") {
  AclGrant g{"svc", OpSet{OpKind::Read, OpKind::Admin}, {"ads", "*"}, 12345};
  std::string body;
  encode_grant_body(body, g);
  CHECK(decode_grant_body("svc", body) == g);
  g.valid_until.reset();
  body.clear();
  encode_grant_body(body, g);
  CHECK(decode_grant_body("svc", body) == g);
}
