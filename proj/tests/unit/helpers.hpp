#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "gdprkv/config.hpp"

namespace gdprkv::test {

class TempDir {
 public:
  explicit TempDir(const std::filesystem::path& base = std::filesystem::temp_directory_path()) {
    std::string tmpl = (base / "gdprkv-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline ComplianceConfig make_config(const std::string& log_path) {
  ComplianceConfig cfg;
  cfg.log_path = log_path;
  cfg.fsync = FsyncPolicy::none();
  cfg.compaction_interval_s = 0;
  cfg.admins.insert("admin");
  return cfg;
}

inline std::string random_bytes(std::mt19937_64& rng, std::size_t max_len) {
  std::string s(rng() % (max_len + 1), '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

}  // namespace gdprkv::test
