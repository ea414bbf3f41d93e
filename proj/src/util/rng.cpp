#include "gemombus/util/rng.hpp"

#include <openssl/rand.h>

#include <stdexcept>

namespace gemom {

void SystemRng::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
}

}  // namespace gemom
