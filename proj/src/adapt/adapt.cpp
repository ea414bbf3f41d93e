#include "gemombus/adapt/adapt.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>

namespace gemom::adapt {

namespace {

double clip01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

std::string fmt_threat(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", t);
  return buf;
}

}  // namespace

std::string to_string(ThresholdsProfile p) {
  return p == ThresholdsProfile::Normal ? "normal" : "strict";
}

std::string to_string(AdaptationAction::Kind k) {
  switch (k) {
    case AdaptationAction::Kind::RotateKeys: return "RotateKeys";
    case AdaptationAction::Kind::RaiseFloor: return "RaiseFloor";
    case AdaptationAction::Kind::LowerFloor: return "LowerFloor";
    case AdaptationAction::Kind::TriggerFailover: return "TriggerFailover";
    case AdaptationAction::Kind::TightenThresholds: return "TightenThresholds";
    case AdaptationAction::Kind::RelaxThresholds: return "RelaxThresholds";
    case AdaptationAction::Kind::RevokeAllKeys: return "RevokeAllKeys";
  }
  return "RotateKeys";
}

std::string AdaptationAction::describe() const {
  switch (kind) {
    case Kind::RotateKeys:
    case Kind::RevokeAllKeys:
      return to_string(kind) + "(" + std::to_string(bits) + ")";
    case Kind::RaiseFloor:
    case Kind::LowerFloor:
      return to_string(kind) + "(" + std::to_string(floor) + ")";
    case Kind::TriggerFailover:
      return to_string(kind) + "(" + group + ")";
    default:
      return to_string(kind);
  }
}

Goals Goals::defaults() {
  Goals g;
  g.constraints.push_back({"threat", [](const SystemState& s) { return s.threat <= 0.7; }});
  g.constraints.push_back(
      {"delivery_ratio", [](const SystemState& s) { return s.delivery_ratio >= 0.995; }});
  g.constraints.push_back({"root_trustworthiness",
                           [](const SystemState& s) { return s.root_trustworthiness >= 0.5; }});
  return g;
}

std::vector<std::string> Goals::violated(const SystemState& s) const {
  std::vector<std::string> out;
  for (const auto& c : constraints) {
    if (!c.holds(s)) out.push_back(c.name);
  }
  return out;
}

double update_threat(double prev_threat, const EnvInfluence& x, double lambda_t) {
  double max_anomaly = 0.0;
  for (const auto& [id, score] : x.anomaly_scores) max_anomaly = std::max(max_anomaly, score);
  double mean_suspicion = 0.0;
  if (!x.suspicion.empty()) {
    for (const auto& [p, s] : x.suspicion) mean_suspicion += s;
    mean_suspicion /= static_cast<double>(x.suspicion.size());
  }
  const double agg = 0.7 * max_anomaly + 0.3 * mean_suspicion;
  return clip01(lambda_t * agg + (1.0 - lambda_t) * prev_threat);
}

std::vector<AdaptationAction> decide(const SystemState& s, const Goals& goals,
                                     ThresholdsProfile current_profile,
                                     const std::vector<std::string>& dead_primary_groups,
                                     const AdaptConfig& cfg, TimestampMs now) {
  std::vector<AdaptationAction> actions;
  const double threat = s.threat;
  const std::string threat_tag = "threat=" + fmt_threat(threat);

  // Key size with hysteresis: triggers at trigger_mid/trigger_hi, releases at
  // release_mid/release_hi; inside a band the previous choice holds.
  int target_bits = s.key_bits;
  if (threat >= cfg.trigger_hi) {
    target_bits = 256;
  } else if (threat <= cfg.release_mid) {
    target_bits = 128;
  } else if (threat >= cfg.trigger_mid) {
    target_bits = (s.key_bits == 256 && threat >= cfg.release_hi) ? 256 : 192;
  }
  if (target_bits != s.key_bits) {
    AdaptationAction a{AdaptationAction::Kind::RotateKeys};
    a.bits = target_bits;
    a.issued_at = now;
    a.cause = threat_tag;
    actions.push_back(std::move(a));
  }

  int target_floor = s.auth_floor;
  if (threat >= cfg.trigger_hi) {
    target_floor = std::min(cfg.baseline_floor + 1, 5);
  } else if (threat <= cfg.release_mid) {
    target_floor = cfg.baseline_floor;
  }
  if (target_floor > s.auth_floor) {
    AdaptationAction a{AdaptationAction::Kind::RaiseFloor};
    a.floor = target_floor;
    a.issued_at = now;
    a.cause = threat_tag;
    actions.push_back(std::move(a));
  } else if (target_floor < s.auth_floor) {
    AdaptationAction a{AdaptationAction::Kind::LowerFloor};
    a.floor = target_floor;
    a.issued_at = now;
    a.cause = threat_tag + " below release band";
    actions.push_back(std::move(a));
  }

  ThresholdsProfile target_profile = current_profile;
  if (threat >= cfg.trigger_hi) {
    target_profile = ThresholdsProfile::Strict;
  } else if (threat <= cfg.release_mid) {
    target_profile = ThresholdsProfile::Normal;
  }
  if (target_profile != current_profile) {
    AdaptationAction a{target_profile == ThresholdsProfile::Strict
                           ? AdaptationAction::Kind::TightenThresholds
                           : AdaptationAction::Kind::RelaxThresholds};
    a.issued_at = now;
    a.cause = threat_tag;
    actions.push_back(std::move(a));
  }

  const std::vector<std::string> violated = goals.violated(s);
  const bool delivery_violated =
      std::find(violated.begin(), violated.end(), "delivery_ratio") != violated.end();
  if (delivery_violated) {
    for (const auto& g : dead_primary_groups) {
      AdaptationAction a{AdaptationAction::Kind::TriggerFailover};
      a.group = g;
      a.issued_at = now;
      a.cause = "delivery_ratio goal violated, primary dead";
      actions.push_back(std::move(a));
    }
  }
  return actions;
}

std::string StepReport::to_json_line() const {
  nlohmann::json j;
  j["ts"] = ts;
  j["threat"] = state.threat;
  j["actions"] = nlohmann::json::array();
  for (const auto& a : actions) {
    nlohmann::json aj;
    aj["kind"] = to_string(a.kind);
    if (a.bits != 0) aj["bits"] = a.bits;
    if (a.kind == AdaptationAction::Kind::RaiseFloor ||
        a.kind == AdaptationAction::Kind::LowerFloor) {
      aj["floor"] = a.floor;
    }
    if (!a.group.empty()) aj["group"] = a.group;
    aj["cause"] = a.cause;
    j["actions"].push_back(std::move(aj));
  }
  std::string cause = "nominal";
  if (!goal_violations.empty()) {
    cause.clear();
    for (std::size_t i = 0; i < goal_violations.size(); ++i) {
      if (i) cause += ",";
      cause += goal_violations[i];
    }
  }
  j["cause"] = cause;
  return j.dump();
}

AdaptationManager::AdaptationManager(const Clock& clock, AdaptConfig cfg, Sensors sensors,
                                     config::AuditLog* audit)
    : clock_(clock), cfg_(cfg), sensors_(std::move(sensors)), audit_(audit) {
  control_.monitoring_lambda = 0.1;
}

void AdaptationManager::submit_offline_report(monitor::OfflineMetricReport report) {
  offline_queue_.push_back(std::move(report));
}

EnvInfluence AdaptationManager::sense() {
  const TimestampMs now = clock_.now_ms();
  EnvInfluence x;
  if (sensors_.anomaly_scores) x.anomaly_scores = sensors_.anomaly_scores();
  if (sensors_.fault_events) x.fault_events = sensors_.fault_events();
  if (sensors_.qos) x.qos = sensors_.qos();
  if (sensors_.suspicion) x.suspicion = sensors_.suspicion();
  x.fault_events.insert(x.fault_events.end(), carried_faults_.begin(), carried_faults_.end());
  carried_faults_.clear();
  while (!offline_queue_.empty()) {
    x.offline_reports.push_back(std::move(offline_queue_.front()));
    offline_queue_.pop_front();
  }

  // Channel staleness: a silent feed is neutral, flagged once per lapse.
  const auto observe = [&](const std::string& channel, bool active) {
    auto [it, inserted] = channel_seen_.try_emplace(channel, now);
    if (active) {
      it->second = now;
    } else if (now - it->second > cfg_.staleness_ms) {
      x.stale_channels.push_back(channel);
      if (audit_) {
        audit_->write(config::AuditCategory::Adapt, "asm",
                      {{"event", "sensor-stale"}, {"channel", channel}});
      }
      it->second = now;  // warn once per staleness lapse
    }
  };
  observe("anomaly", !x.anomaly_scores.empty());
  observe("faults", !x.fault_events.empty());
  observe("qos", !x.qos.empty());
  observe("suspicion", !x.suspicion.empty());
  return x;
}

void AdaptationManager::act(std::vector<AdaptationAction>& actions) {
  for (auto& action : actions) {
    bool ok = dispatch ? dispatch(action) : false;
    if (!ok && dispatch) ok = dispatch(action);  // one retry
    if (ok) {
      switch (action.kind) {
        case AdaptationAction::Kind::RotateKeys:
        case AdaptationAction::Kind::RevokeAllKeys:
          control_.key_bits = action.bits;
          break;
        case AdaptationAction::Kind::RaiseFloor:
        case AdaptationAction::Kind::LowerFloor:
          control_.auth_floor = action.floor;
          break;
        case AdaptationAction::Kind::TightenThresholds:
          control_.thresholds_profile = ThresholdsProfile::Strict;
          break;
        case AdaptationAction::Kind::RelaxThresholds:
          control_.thresholds_profile = ThresholdsProfile::Normal;
          break;
        case AdaptationAction::Kind::TriggerFailover:
          break;
      }
    } else {
      monitor::ThresholdEvent ev;
      ev.metric_id = "asm.dispatch." + to_string(action.kind);
      ev.severity = monitor::Severity::Critical;
      ev.at = action.issued_at;
      carried_faults_.push_back(ev);
    }
    if (audit_) {
      audit_->write(config::AuditCategory::Adapt, "asm",
                    {{"event", "action"},
                     {"action", action.describe()},
                     {"cause", action.cause},
                     {"dispatched", ok ? "true" : "false"}});
    }
    if (metric_sink) {
      metric_sink({"asm.action", static_cast<double>(static_cast<int>(action.kind)),
                   action.issued_at, "asm"});
    }
  }
}

StepReport AdaptationManager::control_step(TimestampMs now) {
  EnvInfluence x = sense();
  threat_ = update_threat(threat_, x, cfg_.lambda_t);

  state_.threat = threat_;
  state_.key_bits = control_.key_bits;
  state_.auth_floor = control_.auth_floor;
  if (auto it = x.qos.find("overlay_health"); it != x.qos.end()) {
    state_.overlay_health = it->second;
  }
  if (auto it = x.qos.find("delivery_ratio"); it != x.qos.end()) {
    state_.delivery_ratio = it->second;
  }
  if (sensors_.root_trustworthiness) {
    state_.root_trustworthiness = sensors_.root_trustworthiness();
  }

  std::vector<std::string> dead_groups;
  if (sensors_.dead_primary_groups) dead_groups = sensors_.dead_primary_groups();

  StepReport report;
  report.ts = now;
  report.goal_violations = goals_.violated(state_);
  report.actions = decide(state_, goals_, control_.thresholds_profile, dead_groups, cfg_, now);

  for (const auto& r : x.offline_reports) {
    if (apply_offline) apply_offline(r);
  }

  act(report.actions);
  state_.key_bits = control_.key_bits;
  state_.auth_floor = control_.auth_floor;

  report.x = std::move(x);
  report.state = state_;
  trail_.push_back(report);
  return report;
}

}  // namespace gemom::adapt
