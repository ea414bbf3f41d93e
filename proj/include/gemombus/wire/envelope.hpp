#ifndef GEMOMBUS_WIRE_ENVELOPE_HPP
#define GEMOMBUS_WIRE_ENVELOPE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "gemombus/util/bytes.hpp"
#include "gemombus/util/clock.hpp"

namespace gemom::wire {

/// Thrown on malformed or oversize frames/envelopes.
class WireError : public std::runtime_error {
 public:
  enum class Kind { FrameTooLarge, Framing, Parse };

  WireError(Kind kind, const std::string& msg, std::size_t offset = 0)
      : std::runtime_error(msg), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  /// Byte offset of the problem for Parse errors (0 when unknown).
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

struct EncryptionMeta {
  std::string key_id;
  std::string cipher;  // e.g. "aes-128-gcm"
  Bytes nonce;

  bool operator==(const EncryptionMeta&) const = default;
};

struct Signature {
  std::string signer;
  Bytes signature;

  bool operator==(const Signature&) const = default;
};

/// The unit of messaging. `seq` is 0 until a sequencer assigns it.
struct Envelope {
  std::string id;      // 128-bit hex
  std::string topic;   // topic name or pseudonym
  std::string sender;  // principal name
  TimestampMs ts = 0;
  std::uint64_t seq = 0;
  std::map<std::string, std::string> headers;
  Bytes payload;
  std::optional<EncryptionMeta> enc;
  std::optional<Signature> sig;

  bool operator==(const Envelope&) const = default;

  const std::string* header(const std::string& key) const {
    auto it = headers.find(key);
    return it == headers.end() ? nullptr : &it->second;
  }
};

/// Deterministic byte form covering every field except sig: lexicographically
/// sorted keys, no insignificant whitespace, payload and nonce base64-coded.
/// This is the exact content that envelope signatures cover.
Bytes canonical_bytes(const Envelope& e);

/// Full wire serialization (canonical form plus sig when present).
std::string serialize_envelope(const Envelope& e);

/// Inverse of serialize_envelope. Unknown fields are ignored.
Envelope parse_envelope(std::string_view body);

}  // namespace gemom::wire

#endif
