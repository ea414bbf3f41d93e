#ifndef GEMOMBUS_CONFIG_AUDIT_HPP
#define GEMOMBUS_CONFIG_AUDIT_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "gemombus/util/clock.hpp"

namespace gemom::config {

enum class AuditCategory { Auth, Authz, Key, Adapt, Overlay };

std::string to_string(AuditCategory c);

struct AuditEvent {
  TimestampMs ts = 0;
  AuditCategory category = AuditCategory::Auth;
  std::string actor;
  std::map<std::string, std::string> detail;
};

/// Append-only audit sink: line-delimited JSON, optionally mirrored to a file
/// and to a tap (the metrics topic publisher). Enqueue never blocks beyond
/// the bounded buffer; overflow drops oldest and counts the drops.
class AuditLog {
 public:
  explicit AuditLog(const Clock& clock, std::size_t capacity = 65536);

  void write(AuditCategory category, const std::string& actor,
             std::map<std::string, std::string> detail);
  void write(AuditEvent ev);

  /// Called synchronously for every accepted event (sensor ingestion path).
  void set_tap(std::function<void(const AuditEvent&)> tap);

  /// Mirror events to a file as they arrive. Returns false if unwritable.
  bool open_file(const std::string& path);

  std::vector<AuditEvent> snapshot() const;
  std::uint64_t dropped() const;
  std::size_t size() const;

  static std::string to_json_line(const AuditEvent& ev);

 private:
  const Clock& clock_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::vector<AuditEvent> events_;
  std::uint64_t dropped_ = 0;
  std::function<void(const AuditEvent&)> tap_;
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file_{nullptr, nullptr};
};

}  // namespace gemom::config

#endif
