#ifndef GEMOMBUS_SIM_SIM_HPP
#define GEMOMBUS_SIM_SIM_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "gemombus/sim/scenario.hpp"
#include "gemombus/util/clock.hpp"
#include "gemombus/util/rng.hpp"
#include "gemombus/wire/envelope.hpp"
#include "gemombus/wire/frame.hpp"

namespace gemom::sim {

/// Deterministic virtual-time event loop. Events at equal instants run in
/// submission order.
class Scheduler {
 public:
  using Fn = std::function<void()>;

  void at(TimestampMs t, Fn fn);
  void after(TimestampMs dt, Fn fn) { at(clock_.now_ms() + dt, std::move(fn)); }
  void run_until(TimestampMs end);
  TimestampMs now() const { return clock_.now_ms(); }
  const Clock& clock() const { return clock_; }

 private:
  struct Event {
    TimestampMs t;
    std::uint64_t seq;
    Fn fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  VirtualClock clock_;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
};

/// In-process message fabric. Every transit is framed exactly as it would be
/// on the wire, captured, size-checked, and scanned for secret material.
class SimNet {
 public:
  using Handler = std::function<void(const std::string& from, const wire::Envelope&)>;

  struct LinkState {
    double drop_rate = 0.0;
    TimestampMs latency_ms = 1;
    std::string selective_drop_topic;  // drop frames whose topic equals this
  };

  SimNet(Scheduler& sched, Rng& rng) : sched_(sched), rng_(rng) {}

  void register_node(const std::string& id, Handler handler);
  void set_down(const std::string& id, bool down);
  bool is_down(const std::string& id) const;
  LinkState& link(const std::string& from, const std::string& to);

  void send(const std::string& from, const std::string& to, const wire::Envelope& e);

  /// Register key material whose hex/base64 encodings must never appear in
  /// any captured frame.
  void add_secret(const Bytes& material);

  std::uint64_t frames_captured() const { return frames_; }
  std::uint64_t secret_hits() const { return secret_hits_; }
  std::uint64_t frames_dropped() const { return dropped_; }

 private:
  Scheduler& sched_;
  Rng& rng_;
  std::map<std::string, Handler> handlers_;
  std::map<std::string, bool> down_;
  std::map<std::pair<std::string, std::string>, LinkState> links_;
  std::vector<std::string> secret_patterns_;
  std::uint64_t frames_ = 0;
  std::uint64_t secret_hits_ = 0;
  std::uint64_t dropped_ = 0;
};

struct TopicStats {
  std::uint64_t published = 0;       // unique envelopes submitted by publishers
  std::uint64_t expected_pairs = 0;  // published x matching live subscribers
  std::uint64_t acked_pairs = 0;
  std::uint64_t lost_pairs = 0;
  std::uint64_t inflight_pairs = 0;  // at shutdown
};

struct RunReport {
  bool failed = false;
  std::string failure;

  double delivery_ratio = 1.0;
  double throughput_mps = 0.0;
  std::map<std::string, TopicStats> per_topic;

  std::vector<std::pair<TimestampMs, double>> threat_trace;
  std::vector<std::pair<TimestampMs, std::string>> actions;  // ASM actions, in order
  std::vector<std::string> overlay_actions;                  // ACTION lines
  struct ThresholdEventRow {
    TimestampMs ts;
    std::string metric_id;
    std::string severity;
    double value;
  };
  std::vector<ThresholdEventRow> threshold_events;
  struct TrustRow {
    TimestampMs ts;
    std::string entity;
    double alpha;
    double beta;
  };
  std::vector<TrustRow> trust_trace;
  struct DeliveryRow {
    TimestampMs ts;
    std::uint64_t expected;
    std::uint64_t acked;
    double ratio;
  };
  std::vector<DeliveryRow> delivery_trace;
  std::vector<std::pair<TimestampMs, int>> key_rotations;  // (ts, new bits)

  std::uint64_t frames_captured = 0;
  std::uint64_t secret_scan_hits = 0;
  std::uint64_t decrypt_failures = 0;
  std::uint64_t stale_key_rejects = 0;
  std::uint64_t auth_rejects = 0;
  std::uint64_t order_violations = 0;
  std::uint64_t control_steps = 0;

  std::string to_json() const;  // canonical (sorted keys), byte-reproducible
};

RunReport run_scenario(const Scenario& scenario);
RunReport run_scenario_file(const std::string& path);

/// Writes report.json, threat.csv, trust.csv, delivery.csv plus one
/// "<name>.series" (ts value) file per scalar series into dir.
void export_report(const RunReport& r, const std::string& dir);

}  // namespace gemom::sim

#endif
