#ifndef GEMOMBUS_WIRE_FRAME_HPP
#define GEMOMBUS_WIRE_FRAME_HPP

#include <cstdint>
#include <deque>
#include <span>
#include <string>

#include "gemombus/wire/envelope.hpp"

namespace gemom::wire {

constexpr std::size_t kDefaultMaxFrame = 1 << 20;  // 1 MiB

/// Length-prefixed unit on the byte stream: 4-byte big-endian count followed
/// by the UTF-8 text of one serialized Envelope.
struct Frame {
  std::string body;

  std::uint32_t length() const { return static_cast<std::uint32_t>(body.size()); }
};

Frame encode_envelope(const Envelope& e, std::size_t max_frame = kDefaultMaxFrame);
Envelope decode_envelope(const Frame& f);

/// Frame -> raw stream bytes (prefix + body).
std::string frame_to_bytes(const Frame& f);

/// Incremental stream splitter. Feed arbitrary chunks; complete frames come
/// out in order. Throws WireError on oversize declared lengths.
class FrameReader {
 public:
  explicit FrameReader(std::size_t max_frame = kDefaultMaxFrame) : max_frame_(max_frame) {}

  void feed(std::span<const char> chunk);
  bool next(Frame& out);
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
  std::size_t max_frame_;
};

}  // namespace gemom::wire

#endif
