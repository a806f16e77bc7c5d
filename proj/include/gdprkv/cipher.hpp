#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace gdprkv {

/// At-rest transform applied to whole log frames. Implementations must
/// authenticate: `open` rejects any sealed blob that was modified.
class Cipher {
 public:
  virtual ~Cipher() = default;

  virtual std::string_view name() const = 0;
  virtual bool is_null() const { return false; }
  virtual std::string seal(std::string_view plain) = 0;
  /// Throws `Error(CorruptLog)` when authentication fails.
  virtual std::string open(std::string_view sealed) const = 0;
};

class NullCipher final : public Cipher {
 public:
  std::string_view name() const override { return "none"; }
  bool is_null() const override { return true; }
  std::string seal(std::string_view plain) override { return std::string(plain); }
  std::string open(std::string_view sealed) const override { return std::string(sealed); }
};

/// AES-256-GCM with a 96-bit nonce made of a random per-instance prefix
/// and a message counter. Sealed layout: nonce(12) | ciphertext | tag(16).
class AesGcmCipher final : public Cipher {
 public:
  explicit AesGcmCipher(std::string key);

  std::string_view name() const override { return "aes-256-gcm"; }
  std::string seal(std::string_view plain) override;
  std::string open(std::string_view sealed) const override;

 private:
  std::string key_;
  unsigned char prefix_[4];
  std::uint64_t counter_ = 0;
};

/// Reads a 32-byte key from `path`: either 32 raw bytes or 64 hex digits
/// (surrounding whitespace ignored).
std::string load_key_file(const std::string& path);

/// `name` is "none" or "aes-256-gcm". Throws `Error(BadConfig)` otherwise.
std::shared_ptr<Cipher> make_cipher(std::string_view name, const std::string& key_file);

}  // namespace gdprkv
