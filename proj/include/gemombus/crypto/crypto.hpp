#ifndef GEMOMBUS_CRYPTO_CRYPTO_HPP
#define GEMOMBUS_CRYPTO_CRYPTO_HPP

#include <array>
#include <optional>
#include <span>
#include <string>

#include "gemombus/util/bytes.hpp"
#include "gemombus/util/rng.hpp"

namespace gemom::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);

constexpr std::size_t kAeadNonceSize = 12;
constexpr std::size_t kAeadTagSize = 16;

/// AES-GCM. Key must be 16, 24, or 32 bytes; nonce 12 bytes. Tag is appended
/// to the ciphertext.
Bytes aead_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad);

/// Returns nullopt on authentication failure.
std::optional<Bytes> aead_open(std::span<const std::uint8_t> key,
                               std::span<const std::uint8_t> nonce,
                               std::span<const std::uint8_t> ciphertext,
                               std::span<const std::uint8_t> aad);

/// Public half of a principal identity: Ed25519 verify key + X25519 exchange key.
struct PublicKey {
  Bytes sign_pub;  // 32 bytes
  Bytes kx_pub;    // 32 bytes

  bool operator==(const PublicKey&) const = default;
};

/// A principal's identity keys. Both halves derive deterministically from one
/// 32-byte seed, so a seeded Rng reproduces the same identity across runs.
struct KeyPair {
  Bytes sign_priv;  // ed25519 raw private, 32 bytes
  Bytes kx_priv;    // x25519 raw private, 32 bytes
  PublicKey pub;

  static KeyPair from_seed(std::span<const std::uint8_t> seed32);
  static KeyPair generate(Rng& rng);
};

/// Detached Ed25519 signature, 64 bytes.
Bytes sign(std::span<const std::uint8_t> sign_priv, std::span<const std::uint8_t> msg);
bool verify(std::span<const std::uint8_t> sign_pub, std::span<const std::uint8_t> msg,
            std::span<const std::uint8_t> sig);

/// Ephemeral-static X25519 + HKDF + AES-256-GCM. Only the holder of the
/// recipient's kx_priv can recover the plaintext.
struct WrappedBlob {
  Bytes eph_pub;  // 32
  Bytes nonce;    // 12
  Bytes ct;       // ciphertext + tag
};

WrappedBlob wrap(const PublicKey& recipient, std::span<const std::uint8_t> plaintext,
                 Rng& rng);
std::optional<Bytes> unwrap(const KeyPair& self, const WrappedBlob& blob);

}  // namespace gemom::crypto

#endif
