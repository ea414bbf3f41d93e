#include "gemombus/crypto/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <cstring>
#include <memory>
#include <stdexcept>

namespace gemom::crypto {

namespace {

struct PKeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct CtxDeleter {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};

using PKeyPtr = std::unique_ptr<EVP_PKEY, PKeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

[[noreturn]] void fail(const char* what) { throw std::runtime_error(what); }

PKeyPtr raw_private(int type, std::span<const std::uint8_t> raw) {
  PKeyPtr key(EVP_PKEY_new_raw_private_key(type, nullptr, raw.data(), raw.size()));
  if (!key) fail("EVP_PKEY_new_raw_private_key");
  return key;
}

PKeyPtr raw_public(int type, std::span<const std::uint8_t> raw) {
  PKeyPtr key(EVP_PKEY_new_raw_public_key(type, nullptr, raw.data(), raw.size()));
  if (!key) fail("EVP_PKEY_new_raw_public_key");
  return key;
}

Bytes raw_public_of(EVP_PKEY* key) {
  std::size_t len = 0;
  if (EVP_PKEY_get_raw_public_key(key, nullptr, &len) != 1) fail("get_raw_public_key size");
  Bytes out(len);
  if (EVP_PKEY_get_raw_public_key(key, out.data(), &len) != 1) fail("get_raw_public_key");
  out.resize(len);
  return out;
}

const EVP_CIPHER* gcm_cipher(std::size_t key_len) {
  switch (key_len) {
    case 16: return EVP_aes_128_gcm();
    case 24: return EVP_aes_192_gcm();
    case 32: return EVP_aes_256_gcm();
    default: fail("unsupported AES key size");
  }
}

}  // namespace

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
            data.size(), out.data(), &len) ||
      len != out.size()) {
    fail("HMAC");
  }
  return out;
}

Bytes aead_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad) {
  if (nonce.size() != kAeadNonceSize) fail("bad nonce size");
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) fail("EVP_CIPHER_CTX_new");
  if (EVP_EncryptInit_ex(ctx.get(), gcm_cipher(key.size()), nullptr, key.data(),
                         nonce.data()) != 1) {
    fail("EncryptInit");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
    fail("aad update");
  }
  Bytes out(plaintext.size() + kAeadTagSize);
  if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1) {
    fail("EncryptUpdate");
  }
  int total = len;
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + total, &len) != 1) fail("EncryptFinal");
  total += len;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kAeadTagSize,
                          out.data() + total) != 1) {
    fail("GET_TAG");
  }
  out.resize(total + kAeadTagSize);
  return out;
}

std::optional<Bytes> aead_open(std::span<const std::uint8_t> key,
                               std::span<const std::uint8_t> nonce,
                               std::span<const std::uint8_t> ciphertext,
                               std::span<const std::uint8_t> aad) {
  if (nonce.size() != kAeadNonceSize || ciphertext.size() < kAeadTagSize) return std::nullopt;
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) fail("EVP_CIPHER_CTX_new");
  if (EVP_DecryptInit_ex(ctx.get(), gcm_cipher(key.size()), nullptr, key.data(),
                         nonce.data()) != 1) {
    fail("DecryptInit");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
    fail("aad update");
  }
  const std::size_t body = ciphertext.size() - kAeadTagSize;
  Bytes out(body);
  if (body > 0 &&
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data(),
                        static_cast<int>(body)) != 1) {
    return std::nullopt;
  }
  Bytes tag(ciphertext.end() - kAeadTagSize, ciphertext.end());
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kAeadTagSize, tag.data()) != 1) {
    fail("SET_TAG");
  }
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1) return std::nullopt;
  return out;
}

KeyPair KeyPair::from_seed(std::span<const std::uint8_t> seed32) {
  if (seed32.size() != 32) fail("seed must be 32 bytes");
  KeyPair kp;
  kp.sign_priv.assign(seed32.begin(), seed32.end());

  // Independent exchange key derived from the same identity seed.
  Bytes kx_seed_input(seed32.begin(), seed32.end());
  const std::string label = "gemom-kx-v1";
  kx_seed_input.insert(kx_seed_input.end(), label.begin(), label.end());
  const Digest kx_seed = sha256(kx_seed_input);
  kp.kx_priv.assign(kx_seed.begin(), kx_seed.end());

  auto sk = raw_private(EVP_PKEY_ED25519, kp.sign_priv);
  auto kk = raw_private(EVP_PKEY_X25519, kp.kx_priv);
  kp.pub.sign_pub = raw_public_of(sk.get());
  kp.pub.kx_pub = raw_public_of(kk.get());
  return kp;
}

KeyPair KeyPair::generate(Rng& rng) {
  std::array<std::uint8_t, 32> seed{};
  rng.fill(seed);
  return from_seed(seed);
}

Bytes sign(std::span<const std::uint8_t> sign_priv, std::span<const std::uint8_t> msg) {
  auto key = raw_private(EVP_PKEY_ED25519, sign_priv);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx) fail("EVP_MD_CTX_new");
  if (EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    fail("DigestSignInit");
  }
  std::size_t sig_len = 64;
  Bytes sig(sig_len);
  if (EVP_DigestSign(ctx.get(), sig.data(), &sig_len, msg.data(), msg.size()) != 1) {
    fail("DigestSign");
  }
  sig.resize(sig_len);
  return sig;
}

bool verify(std::span<const std::uint8_t> sign_pub, std::span<const std::uint8_t> msg,
            std::span<const std::uint8_t> sig) {
  if (sign_pub.size() != 32 || sig.size() != 64) return false;
  PKeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, sign_pub.data(),
                                          sign_pub.size()));
  if (!key) return false;
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx) return false;
  if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    return false;
  }
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

namespace {

Bytes x25519_shared(EVP_PKEY* priv, EVP_PKEY* peer) {
  std::unique_ptr<EVP_PKEY_CTX, CtxDeleter> ctx(EVP_PKEY_CTX_new(priv, nullptr));
  if (!ctx) fail("EVP_PKEY_CTX_new");
  if (EVP_PKEY_derive_init(ctx.get()) != 1) fail("derive_init");
  if (EVP_PKEY_derive_set_peer(ctx.get(), peer) != 1) fail("set_peer");
  std::size_t len = 0;
  if (EVP_PKEY_derive(ctx.get(), nullptr, &len) != 1) fail("derive size");
  Bytes shared(len);
  if (EVP_PKEY_derive(ctx.get(), shared.data(), &len) != 1) fail("derive");
  shared.resize(len);
  return shared;
}

// KDF binding the shared secret to both public halves of the exchange.
Bytes wrap_key(std::span<const std::uint8_t> shared, std::span<const std::uint8_t> eph_pub,
               std::span<const std::uint8_t> recip_pub) {
  Bytes ikm(shared.begin(), shared.end());
  ikm.insert(ikm.end(), eph_pub.begin(), eph_pub.end());
  ikm.insert(ikm.end(), recip_pub.begin(), recip_pub.end());
  const std::string label = "gemom-wrap-v1";
  const Digest key = hmac_sha256(to_bytes(label), ikm);
  return Bytes(key.begin(), key.end());
}

}  // namespace

WrappedBlob wrap(const PublicKey& recipient, std::span<const std::uint8_t> plaintext,
                 Rng& rng) {
  std::array<std::uint8_t, 32> eph_seed{};
  rng.fill(eph_seed);
  auto eph_priv = raw_private(EVP_PKEY_X25519, eph_seed);
  auto recip_pub = raw_public(EVP_PKEY_X25519, recipient.kx_pub);

  WrappedBlob blob;
  blob.eph_pub = raw_public_of(eph_priv.get());
  const Bytes shared = x25519_shared(eph_priv.get(), recip_pub.get());
  const Bytes key = wrap_key(shared, blob.eph_pub, recipient.kx_pub);
  blob.nonce = rng.bytes(kAeadNonceSize);
  blob.ct = aead_seal(key, blob.nonce, plaintext, {});
  return blob;
}

std::optional<Bytes> unwrap(const KeyPair& self, const WrappedBlob& blob) {
  if (blob.eph_pub.size() != 32) return std::nullopt;
  auto priv = raw_private(EVP_PKEY_X25519, self.kx_priv);
  auto eph = raw_public(EVP_PKEY_X25519, blob.eph_pub);
  const Bytes shared = x25519_shared(priv.get(), eph.get());
  const Bytes key = wrap_key(shared, blob.eph_pub, self.pub.kx_pub);
  return aead_open(key, blob.nonce, blob.ct, {});
}

}  // namespace gemom::crypto
