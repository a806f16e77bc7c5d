#include "gdprkv/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace gdprkv {

namespace {

constexpr std::int64_t kMaxBulk = 512LL * 1024 * 1024;
constexpr std::int64_t kMaxArgs = 1024 * 1024;

[[noreturn]] void proto_error(const std::string& msg) { throw Error(ErrorCode::ProtoError, msg); }

/// Reads "<prefix><int>\r\n" at pos; returns nullopt if incomplete.
std::optional<std::int64_t> read_line_int(std::string_view buf, std::size_t& pos, char prefix) {
  if (pos >= buf.size()) return std::nullopt;
  if (buf[pos] != prefix) proto_error(std::string("expected '") + prefix + "'");
  auto end = buf.find("\r\n", pos + 1);
  if (end == std::string_view::npos) {
    if (buf.size() - pos > 32) proto_error("length line too long");
    return std::nullopt;
  }
  std::int64_t v = 0;
  auto digits = buf.substr(pos + 1, end - pos - 1);
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty()) {
    proto_error("bad length '" + std::string(digits) + "'");
  }
  pos = end + 2;
  return v;
}

void compact_buffer(std::string& buf, std::size_t& pos) {
  if (pos > 4096 && pos * 2 > buf.size()) {
    buf.erase(0, pos);
    pos = 0;
  }
}

}  // namespace

std::string encode_request(const std::vector<Bytes>& args) {
  std::string out = "*" + std::to_string(args.size()) + "\r\n";
  for (const auto& a : args) {
    out += "$" + std::to_string(a.size()) + "\r\n";
    out += a;
    out += "\r\n";
  }
  return out;
}

std::optional<std::vector<Bytes>> RequestParser::next() {
  std::size_t p = pos_;
  auto n = read_line_int(buf_, p, '*');
  if (!n) return std::nullopt;
  if (*n < 1 || *n > kMaxArgs) proto_error("bad argument count");
  std::vector<Bytes> args;
  args.reserve(static_cast<std::size_t>(*n));
  for (std::int64_t i = 0; i < *n; ++i) {
    auto len = read_line_int(buf_, p, '$');
    if (!len) return std::nullopt;
    if (*len < 0 || *len > kMaxBulk) proto_error("bad bulk length");
    auto ulen = static_cast<std::size_t>(*len);
    if (buf_.size() - p < ulen + 2) return std::nullopt;
    if (buf_.compare(p + ulen, 2, "\r\n") != 0) proto_error("bulk string not terminated by CRLF");
    args.emplace_back(buf_, p, ulen);
    p += ulen + 2;
  }
  pos_ = p;
  compact_buffer(buf_, pos_);
  return args;
}

std::vector<Bytes> decode_request(std::string_view bytes) {
  RequestParser parser;
  parser.feed(bytes);
  auto req = parser.next();
  if (!req) proto_error("incomplete request");
  if (parser.buffered() != 0) proto_error("trailing bytes after request");
  return *req;
}

Reply Reply::error(ErrorCode code, std::string_view message) {
  std::string text(to_string(code));
  if (!message.empty()) {
    text.push_back(' ');
    for (char c : message) text.push_back(c == '\r' || c == '\n' ? ' ' : c);
  }
  return error_text(std::move(text));
}

std::string Reply::error_code() const {
  if (kind != Kind::Error) return {};
  auto sp = text.find(' ');
  return text.substr(0, sp);
}

std::string encode_reply(const Reply& r) {
  switch (r.kind) {
    case Reply::Kind::Simple: return "+" + r.text + "\r\n";
    case Reply::Kind::Error: return "-ERR " + r.text + "\r\n";
    case Reply::Kind::Integer: return ":" + std::to_string(r.integer) + "\r\n";
    case Reply::Kind::Bulk: return "$" + std::to_string(r.text.size()) + "\r\n" + r.text + "\r\n";
    case Reply::Kind::Nil: return "$-1\r\n";
    case Reply::Kind::Array: {
      std::string out = "*" + std::to_string(r.elements.size()) + "\r\n";
      for (const auto& e : r.elements) out += encode_reply(e);
      return out;
    }
  }
  return {};
}

namespace {

std::optional<Reply> parse_reply(std::string_view buf, std::size_t& pos) {
  if (pos >= buf.size()) return std::nullopt;
  char t = buf[pos];
  if (t == '+' || t == '-') {
    auto end = buf.find("\r\n", pos);
    if (end == std::string_view::npos) return std::nullopt;
    std::string text(buf.substr(pos + 1, end - pos - 1));
    pos = end + 2;
    if (t == '+') return Reply::simple(std::move(text));
    if (text.rfind("ERR ", 0) == 0) text.erase(0, 4);
    else if (text == "ERR") text.clear();
    return Reply::error_text(std::move(text));
  }
  if (t == ':') {
    auto v = read_line_int(buf, pos, ':');
    if (!v) return std::nullopt;
    return Reply::integer_reply(*v);
  }
  if (t == '$') {
    std::size_t p = pos;
    auto len = read_line_int(buf, p, '$');
    if (!len) return std::nullopt;
    if (*len == -1) {
      pos = p;
      return Reply::nil();
    }
    if (*len < 0 || *len > kMaxBulk) proto_error("bad bulk length");
    auto ulen = static_cast<std::size_t>(*len);
    if (buf.size() - p < ulen + 2) return std::nullopt;
    if (buf.substr(p + ulen, 2) != "\r\n") proto_error("bulk string not terminated by CRLF");
    Reply r = Reply::bulk(std::string(buf.substr(p, ulen)));
    pos = p + ulen + 2;
    return r;
  }
  if (t == '*') {
    std::size_t p = pos;
    auto n = read_line_int(buf, p, '*');
    if (!n) return std::nullopt;
    if (*n < 0 || *n > kMaxArgs) proto_error("bad array length");
    std::vector<Reply> items;
    for (std::int64_t i = 0; i < *n; ++i) {
      auto item = parse_reply(buf, p);
      if (!item) return std::nullopt;
      items.push_back(std::move(*item));
    }
    pos = p;
    return Reply::array(std::move(items));
  }
  proto_error(std::string("unexpected reply type byte 0x") + std::to_string(static_cast<unsigned char>(t)));
}

}  // namespace

std::optional<Reply> ReplyParser::next() {
  auto r = parse_reply(buf_, pos_);
  if (r) compact_buffer(buf_, pos_);
  return r;
}

Command split_command(const std::vector<Bytes>& args, std::size_t positional) {
  if (args.empty()) throw Error(ErrorCode::ProtoError, "empty command");
  Command cmd;
  cmd.name = args[0];
  std::transform(cmd.name.begin(), cmd.name.end(), cmd.name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (args.size() < positional + 1) {
    throw Error(ErrorCode::Arity, "wrong number of arguments for " + cmd.name);
  }
  cmd.positional.assign(args.begin() + 1, args.begin() + 1 + static_cast<std::ptrdiff_t>(positional));
  for (std::size_t i = positional + 1; i < args.size(); ++i) {
    auto eq = args[i].find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::Arity, "expected key=value argument, got '" + args[i] + "'");
    }
    cmd.meta.insert_or_assign(args[i].substr(0, eq), args[i].substr(eq + 1));
  }
  return cmd;
}

}  // namespace gdprkv
