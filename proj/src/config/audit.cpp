#include "gemombus/config/audit.hpp"

#include <json.hpp>

#include <cstdio>

namespace gemom::config {

std::string to_string(AuditCategory c) {
  switch (c) {
    case AuditCategory::Auth: return "auth";
    case AuditCategory::Authz: return "authz";
    case AuditCategory::Key: return "key";
    case AuditCategory::Adapt: return "adapt";
    case AuditCategory::Overlay: return "overlay";
  }
  return "auth";
}

AuditLog::AuditLog(const Clock& clock, std::size_t capacity)
    : clock_(clock), capacity_(capacity) {}

void AuditLog::write(AuditCategory category, const std::string& actor,
                     std::map<std::string, std::string> detail) {
  AuditEvent ev;
  ev.ts = clock_.now_ms();
  ev.category = category;
  ev.actor = actor;
  ev.detail = std::move(detail);
  write(std::move(ev));
}

void AuditLog::write(AuditEvent ev) {
  std::function<void(const AuditEvent&)> tap;
  {
    std::lock_guard lock(mu_);
    if (ev.ts == 0) ev.ts = clock_.now_ms();
    if (events_.size() >= capacity_) {
      events_.erase(events_.begin());
      ++dropped_;
    }
    events_.push_back(ev);
    if (file_) {
      const std::string line = to_json_line(ev);
      std::fwrite(line.data(), 1, line.size(), file_.get());
      std::fputc('\n', file_.get());
    }
    tap = tap_;
  }
  if (tap) tap(ev);
}

void AuditLog::set_tap(std::function<void(const AuditEvent&)> tap) {
  std::lock_guard lock(mu_);
  tap_ = std::move(tap);
}

bool AuditLog::open_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "a");
  if (!f) return false;
  std::lock_guard lock(mu_);
  file_ = {f, &std::fclose};
  return true;
}

std::vector<AuditEvent> AuditLog::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::uint64_t AuditLog::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::string AuditLog::to_json_line(const AuditEvent& ev) {
  nlohmann::json j;
  j["ts"] = ev.ts;
  j["category"] = to_string(ev.category);
  j["actor"] = ev.actor;
  j["detail"] = nlohmann::json::object();
  for (const auto& [k, v] : ev.detail) j["detail"][k] = v;
  return j.dump();
}

}  // namespace gemom::config
