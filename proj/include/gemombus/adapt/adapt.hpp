#ifndef GEMOMBUS_ADAPT_ADAPT_HPP
#define GEMOMBUS_ADAPT_ADAPT_HPP

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gemombus/config/audit.hpp"
#include "gemombus/monitor/monitor.hpp"
#include "gemombus/util/clock.hpp"

namespace gemom::adapt {

/// Snapshot of the environment's influence on the system since the last step.
struct EnvInfluence {
  std::map<std::string, double> anomaly_scores;      // metric id -> [0,1]
  std::vector<monitor::ThresholdEvent> fault_events;
  std::map<std::string, double> qos;                 // summary floats
  std::map<std::string, double> suspicion;           // principal -> [0,1]
  std::vector<monitor::OfflineMetricReport> offline_reports;
  std::vector<std::string> stale_channels;
};

enum class ThresholdsProfile { Normal, Strict };

std::string to_string(ThresholdsProfile p);

struct SystemState {
  double threat = 0;
  int key_bits = 128;
  int auth_floor = 0;
  double overlay_health = 1.0;
  double delivery_ratio = 1.0;
  double root_trustworthiness = 0.5;
};

struct Constraint {
  std::string name;
  std::function<bool(const SystemState&)> holds;
};

struct Goals {
  std::vector<Constraint> constraints;

  static Goals defaults();  // threat <= 0.7, delivery_ratio >= 0.995, root tw >= 0.5
  std::vector<std::string> violated(const SystemState& s) const;
};

struct ControlVector {
  int key_bits = 128;
  int auth_floor = 0;
  double monitoring_lambda = 0.1;
  ThresholdsProfile thresholds_profile = ThresholdsProfile::Normal;
  std::uint64_t policy_version_min = 0;
};

struct AdaptationAction {
  enum class Kind {
    RotateKeys,
    RaiseFloor,
    LowerFloor,
    TriggerFailover,
    TightenThresholds,
    RelaxThresholds,
    RevokeAllKeys,
  };

  Kind kind;
  int bits = 0;       // RotateKeys / RevokeAllKeys
  int floor = 0;      // RaiseFloor / LowerFloor
  std::string group;  // TriggerFailover
  TimestampMs issued_at = 0;
  std::string cause;  // always non-empty

  std::string describe() const;
};

std::string to_string(AdaptationAction::Kind k);

struct AdaptConfig {
  double lambda_t = 0.3;
  double trigger_hi = 0.7;
  double trigger_mid = 0.4;
  double release_hi = 0.6;
  double release_mid = 0.3;
  int baseline_floor = 1;
  TimestampMs period_ms = 1000;
  TimestampMs staleness_ms = 5000;
};

/// threat' = clip(lambda*agg(x) + (1-lambda)*prev) with
/// agg = 0.7*max(anomaly scores) + 0.3*mean(suspicion). Monotone in x.
double update_threat(double prev_threat, const EnvInfluence& x, double lambda_t = 0.3);

/// Deterministic rule table with hysteresis. Inside a band (between release
/// and trigger) the previous choice is preserved and no action fires.
std::vector<AdaptationAction> decide(const SystemState& s, const Goals& goals,
                                     ThresholdsProfile current_profile,
                                     const std::vector<std::string>& dead_primary_groups,
                                     const AdaptConfig& cfg, TimestampMs now);

struct StepReport {
  TimestampMs ts = 0;
  EnvInfluence x;
  SystemState state;
  std::vector<AdaptationAction> actions;
  std::vector<std::string> goal_violations;

  std::string to_json_line() const;
};

/// The Adaptive Security Manager's global loop: sense -> assess -> decide ->
/// act, with every action audited exactly once.
class AdaptationManager {
 public:
  struct Sensors {
    std::function<std::map<std::string, double>()> anomaly_scores;
    std::function<std::vector<monitor::ThresholdEvent>()> fault_events;  // drained
    std::function<std::map<std::string, double>()> qos;
    std::function<std::map<std::string, double>()> suspicion;
    std::function<double()> root_trustworthiness;
    std::function<std::vector<std::string>()> dead_primary_groups;
  };

  AdaptationManager(const Clock& clock, AdaptConfig cfg, Sensors sensors,
                    config::AuditLog* audit = nullptr);

  /// Action effector; returns false on dispatch failure (retried once).
  std::function<bool(const AdaptationAction&)> dispatch;
  /// Off-line report application (monitoring fuse).
  std::function<void(const monitor::OfflineMetricReport&)> apply_offline;
  /// Per-dispatch metric sample sink ("asm.action").
  std::function<void(const monitor::MetricSample&)> metric_sink;

  void submit_offline_report(monitor::OfflineMetricReport report);

  EnvInfluence sense();
  StepReport control_step(TimestampMs now);

  double threat() const { return threat_; }
  const ControlVector& control() const { return control_; }
  SystemState state() const { return state_; }
  const std::vector<StepReport>& trail() const { return trail_; }
  Goals& goals() { return goals_; }
  const AdaptConfig& config() const { return cfg_; }

 private:
  void act(std::vector<AdaptationAction>& actions);

  const Clock& clock_;
  AdaptConfig cfg_;
  Sensors sensors_;
  config::AuditLog* audit_;
  Goals goals_ = Goals::defaults();

  double threat_ = 0.0;
  ControlVector control_;
  SystemState state_;
  std::deque<monitor::OfflineMetricReport> offline_queue_;
  std::map<std::string, TimestampMs> channel_seen_;
  std::vector<StepReport> trail_;
  std::vector<monitor::ThresholdEvent> carried_faults_;
};

}  // namespace gemom::adapt

#endif
