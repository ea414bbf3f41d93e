#ifndef GEMOMBUS_UTIL_RNG_HPP
#define GEMOMBUS_UTIL_RNG_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>

#include "gemombus/util/bytes.hpp"

namespace gemom {

/// Source of all randomness. Components take an Rng& so a scenario seed can
/// make every run bit-reproducible; live deployments use the OS entropy pool.
class Rng {
 public:
  virtual ~Rng() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  Bytes bytes(std::size_t n) {
    Bytes b(n);
    fill(b);
    return b;
  }
  /// 128-bit identifier as 32 lowercase hex chars.
  std::string id128() { return to_hex(bytes(16)); }

  std::uint64_t u64() {
    std::uint8_t raw[8];
    fill(raw);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | raw[i];
    return v;
  }
  /// Uniform in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) { return u64() % n; }
  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }
};

/// Seeded, reproducible stream (mt19937_64 under the hood).
class SeededRng final : public Rng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}
  void fill(std::span<std::uint8_t> out) override {
    for (auto& b : out) b = static_cast<std::uint8_t>(gen_());
  }

 private:
  std::mt19937_64 gen_;
};

/// OS entropy via OpenSSL RAND_bytes.
class SystemRng final : public Rng {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

}  // namespace gemom

#endif
