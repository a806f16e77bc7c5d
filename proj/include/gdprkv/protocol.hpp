#pragma once

// Length-prefixed request/reply framing.
//
// Request: "*<n>\r\n" followed by n bulk strings "$<len>\r\n<bytes>\r\n".
// Reply:   "+<text>\r\n" | "-ERR <CODE> <msg>\r\n" | ":<int>\r\n"
//          | "$<len>\r\n<bytes>\r\n" | "$-1\r\n" | "*<n>\r\n" <reply>...

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gdprkv/common.hpp"

namespace gdprkv {

std::string encode_request(const std::vector<Bytes>& args);

/// Incremental request decoder. Feed bytes as they arrive and pull
/// complete requests. Malformed input throws `Error(ProtoError)`; the
/// connection must then be closed.
class RequestParser {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }
  std::optional<std::vector<Bytes>> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

/// Decodes exactly one request occupying all of `bytes`.
std::vector<Bytes> decode_request(std::string_view bytes);

struct Reply {
  enum class Kind { Simple, Error, Integer, Bulk, Nil, Array };
  Kind kind = Kind::Nil;
  std::string text;  // Simple, Error (without "ERR "), Bulk
  std::int64_t integer = 0;
  std::vector<Reply> elements;

  static Reply ok() { return simple("OK"); }
  static Reply simple(std::string s) { return {Kind::Simple, std::move(s), 0, {}}; }
  static Reply error(ErrorCode code, std::string_view message);
  static Reply error_text(std::string s) { return {Kind::Error, std::move(s), 0, {}}; }
  static Reply integer_reply(std::int64_t v) { return {Kind::Integer, {}, v, {}}; }
  static Reply bulk(std::string s) { return {Kind::Bulk, std::move(s), 0, {}}; }
  static Reply nil() { return {}; }
  static Reply array(std::vector<Reply> items) { return {Kind::Array, {}, 0, std::move(items)}; }

  bool is_error() const { return kind == Kind::Error; }
  /// For errors: the code token after "ERR ".
  std::string error_code() const;

  friend bool operator==(const Reply&, const Reply&) = default;
};

std::string encode_reply(const Reply& reply);

class ReplyParser {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }
  std::optional<Reply> next();

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

/// A request split into command name (upper-cased), positional arguments
/// and trailing key=value metadata arguments.
struct Command {
  std::string name;
  std::vector<Bytes> positional;
  std::map<std::string, Bytes, std::less<>> meta;

  const Bytes* find(std::string_view k) const {
    auto it = meta.find(k);
    return it == meta.end() ? nullptr : &it->second;
  }
};

/// Splits `args` taking the first `positional` arguments after the name
/// verbatim; the remainder must each look like key=value.
Command split_command(const std::vector<Bytes>& args, std::size_t positional);

}  // namespace gdprkv
