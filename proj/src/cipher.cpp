#include "gdprkv/cipher.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <memory>

#include "gdprkv/common.hpp"

namespace gdprkv {

namespace {

constexpr std::size_t kNonceLen = 12;
constexpr std::size_t kTagLen = 16;

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CtxPtr new_ctx() {
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error(ErrorCode::IoError, "EVP_CIPHER_CTX_new failed");
  return ctx;
}

const unsigned char* u8(const std::string& s) {
  return reinterpret_cast<const unsigned char*>(s.data());
}

}  // namespace

AesGcmCipher::AesGcmCipher(std::string key) : key_(std::move(key)) {
  if (key_.size() != 32) throw Error(ErrorCode::BadConfig, "aes-256-gcm needs a 32-byte key");
  if (RAND_bytes(prefix_, sizeof(prefix_)) != 1) {
    throw Error(ErrorCode::IoError, "RAND_bytes failed");
  }
}

std::string AesGcmCipher::seal(std::string_view plain) {
  std::string out(kNonceLen + plain.size() + kTagLen, '\0');
  auto* nonce = reinterpret_cast<unsigned char*>(out.data());
  std::copy(prefix_, prefix_ + 4, nonce);
  std::uint64_t ctr = ++counter_;
  for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<unsigned char>(ctr >> (8 * i));

  auto ctx = new_ctx();
  int len = 0;
  auto* body = nonce + kNonceLen;
  bool ok = EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, u8(key_), nonce) == 1 &&
            EVP_EncryptUpdate(ctx.get(), body, &len,
                              reinterpret_cast<const unsigned char*>(plain.data()),
                              static_cast<int>(plain.size())) == 1 &&
            EVP_EncryptFinal_ex(ctx.get(), body + len, &len) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagLen,
                                body + plain.size()) == 1;
  if (!ok) throw Error(ErrorCode::IoError, "aes-256-gcm encryption failed");
  return out;
}

std::string AesGcmCipher::open(std::string_view sealed) const {
  if (sealed.size() < kNonceLen + kTagLen) {
    throw Error(ErrorCode::CorruptLog, "sealed frame too short");
  }
  const auto* nonce = reinterpret_cast<const unsigned char*>(sealed.data());
  const auto* body = nonce + kNonceLen;
  std::size_t body_len = sealed.size() - kNonceLen - kTagLen;
  std::string plain(body_len, '\0');
  std::string tag(sealed.substr(kNonceLen + body_len));

  auto ctx = new_ctx();
  int len = 0;
  auto* outp = reinterpret_cast<unsigned char*>(plain.data());
  bool ok = EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, u8(key_), nonce) == 1 &&
            EVP_DecryptUpdate(ctx.get(), outp, &len, body, static_cast<int>(body_len)) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagLen, tag.data()) == 1 &&
            EVP_DecryptFinal_ex(ctx.get(), outp + len, &len) == 1;
  if (!ok) throw Error(ErrorCode::CorruptLog, "frame authentication failed");
  return plain;
}

std::string load_key_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot read key file " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() == 32) return raw;

  std::string hex;
  for (char c : raw) {
    if (!std::isspace(static_cast<unsigned char>(c))) hex.push_back(c);
  }
  if (hex.size() != 64) throw Error(ErrorCode::BadConfig, "key file must hold 32 bytes or 64 hex digits");
  std::string key(32, '\0');
  for (std::size_t i = 0; i < 32; ++i) {
    key[i] = static_cast<char>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
  }
  return key;
}

std::shared_ptr<Cipher> make_cipher(std::string_view name, const std::string& key_file) {
  if (name.empty() || name == "none" || name == "null") return std::make_shared<NullCipher>();
  if (name == "aes-256-gcm" || name == "aes") {
    return std::make_shared<AesGcmCipher>(load_key_file(key_file));
  }
  throw Error(ErrorCode::BadConfig, "unknown cipher: " + std::string(name));
}

}  // namespace gdprkv
