#include "gemombus/wire/frame.hpp"

namespace gemom::wire {

Frame encode_envelope(const Envelope& e, std::size_t max_frame) {
  Frame f{serialize_envelope(e)};
  if (f.body.size() > max_frame) {
    throw WireError(WireError::Kind::FrameTooLarge,
                    "frame of " + std::to_string(f.body.size()) + " bytes exceeds max " +
                        std::to_string(max_frame));
  }
  return f;
}

Envelope decode_envelope(const Frame& f) { return parse_envelope(f.body); }

std::string frame_to_bytes(const Frame& f) {
  const std::uint32_t n = f.length();
  std::string out;
  out.reserve(4 + f.body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(f.body);
  return out;
}

void FrameReader::feed(std::span<const char> chunk) {
  buf_.append(chunk.data(), chunk.size());
}

bool FrameReader::next(Frame& out) {
  if (buf_.size() < 4) return false;
  const auto b = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[i]));
  };
  const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (n > max_frame_) {
    throw WireError(WireError::Kind::FrameTooLarge,
                    "declared frame length " + std::to_string(n) + " exceeds max " +
                        std::to_string(max_frame_));
  }
  if (buf_.size() < 4 + static_cast<std::size_t>(n)) return false;
  out.body.assign(buf_, 4, n);
  buf_.erase(0, 4 + static_cast<std::size_t>(n));
  return true;
}

}  // namespace gemom::wire
