#ifndef GEMOMBUS_UTIL_CLOCK_HPP
#define GEMOMBUS_UTIL_CLOCK_HPP

#include <chrono>
#include <cstdint>

namespace gemom {

/// Milliseconds since epoch (wall clock) or since scenario start (virtual).
using TimestampMs = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now_ms() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

/// Manually advanced clock driven by the simulation scheduler.
class VirtualClock final : public Clock {
 public:
  TimestampMs now_ms() const override { return now_; }
  void set(TimestampMs t) { now_ = t; }

 private:
  TimestampMs now_ = 0;
};

}  // namespace gemom

#endif
