#include "gdprkv/config.hpp"

#include <charconv>

namespace gdprkv {

std::string_view to_string(ErasureMode m) {
  return m == ErasureMode::Realtime ? "realtime" : "eventual";
}

ErasureMode parse_erasure_mode(std::string_view text) {
  if (text == "realtime" || text == "real-time") return ErasureMode::Realtime;
  if (text == "eventual") return ErasureMode::Eventual;
  throw Error(ErrorCode::BadConfig, "unknown erasure mode: " + std::string(text));
}

std::shared_ptr<Cipher> ComplianceConfig::make_cipher() const {
  return gdprkv::make_cipher(cipher, key_file);
}

std::string ComplianceConfig::echo() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) {
    out.append(k);
    out.push_back('=');
    out.append(v);
    out.push_back('\n');
  };
  line("fsync_mode", fsync.to_string());
  line("expiry_strategy", std::string(to_string(expiry_strategy)));
  line("expiry_tick_ms", std::to_string(lazy.tick_interval_ms));
  line("expiry_sample_size", std::to_string(lazy.sample_size));
  line("expiry_repeat_threshold", std::to_string(lazy.repeat_threshold));
  line("erasure_mode", std::string(to_string(erasure_mode)));
  line("compaction_interval_s", std::to_string(compaction_interval_s));
  line("server_region", server_region);
  line("cipher", cipher);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view v, std::size_t line) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw Error(ErrorCode::BadConfig,
                "line " + std::to_string(line) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace

ComplianceConfig parse_config(std::string_view text) {
  ComplianceConfig cfg;
  std::optional<std::uint32_t> interval_ms;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;

    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto line = trim(raw);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::BadConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    std::string v(value);

    try {
      if (key == "log_path") cfg.log_path = v;
      else if (key == "fsync_mode") cfg.fsync = FsyncPolicy::parse(value);
      else if (key == "fsync_interval_ms") interval_ms = parse_number<std::uint32_t>(value, line_no);
      else if (key == "expiry_strategy") cfg.expiry_strategy = parse_expiry_strategy(value);
      else if (key == "expiry_tick_ms") cfg.lazy.tick_interval_ms = parse_number<std::uint32_t>(value, line_no);
      else if (key == "expiry_sample_size") cfg.lazy.sample_size = parse_number<std::uint32_t>(value, line_no);
      else if (key == "expiry_repeat_threshold") cfg.lazy.repeat_threshold = parse_number<std::uint32_t>(value, line_no);
      else if (key == "erasure_mode") cfg.erasure_mode = parse_erasure_mode(value);
      else if (key == "compaction_interval_s") cfg.compaction_interval_s = parse_number<std::int64_t>(value, line_no);
      else if (key == "server_region") cfg.server_region = v;
      else if (key == "cipher") cfg.cipher = v;
      else if (key == "key_file") cfg.key_file = v;
      else if (key == "rng_seed") cfg.rng_seed = parse_number<std::uint64_t>(value, line_no);
      else if (key == "bind") cfg.bind_address = v;
      else if (key == "port") cfg.port = parse_number<std::uint16_t>(value, line_no);
      else if (key == "admin") cfg.admins.insert(v);
      else if (key == "auth") {
        auto colon = value.find(':');
        if (colon == std::string_view::npos || colon == 0) {
          throw Error(ErrorCode::BadConfig, "auth entries look like actor:secret");
        }
        cfg.auth.insert_or_assign(std::string(value.substr(0, colon)), std::string(value.substr(colon + 1)));
      } else {
        throw Error(ErrorCode::BadConfig, "unknown key '" + std::string(key) + "'");
      }
    } catch (const Error& e) {
      if (std::string_view(e.what()).rfind("line ", 0) == 0) throw;
      throw Error(ErrorCode::BadConfig, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (interval_ms) {
    if (cfg.fsync.mode != FsyncPolicy::Mode::Every) {
      throw Error(ErrorCode::BadConfig, "fsync_interval_ms requires fsync_mode = every");
    }
    if (*interval_ms == 0) throw Error(ErrorCode::BadConfig, "fsync_interval_ms must be positive");
    cfg.fsync.interval_ms = *interval_ms;
  }
  cfg.lazy.validate();
  return cfg;
}

ComplianceConfig load_config(const std::string& path) {
  try {
    return parse_config(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw Error(ErrorCode::BadConfig, e.what());
    throw;
  }
}

}  // namespace gdprkv
