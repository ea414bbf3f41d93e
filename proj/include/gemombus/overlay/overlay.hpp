#ifndef GEMOMBUS_OVERLAY_OVERLAY_HPP
#define GEMOMBUS_OVERLAY_OVERLAY_HPP

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gemombus/config/audit.hpp"
#include "gemombus/monitor/monitor.hpp"
#include "gemombus/util/clock.hpp"

namespace gemom::overlay {

enum class NodeRole { Operational, Managerial };
enum class NodeStatus { Alive, Suspect, Dead };

std::string to_string(NodeStatus s);

struct GNode {
  std::string id;
  NodeRole role = NodeRole::Operational;
  std::string address;  // host:port
  NodeStatus status = NodeStatus::Alive;
  TimestampMs last_heartbeat = 0;
};

struct TopicGroup {
  std::string id;
  std::vector<std::string> patterns;
  std::string primary;               // GNode id, empty while unassigned
  std::vector<std::string> mirrors;  // GNode ids
  int replication_factor = 1;
  bool parked = false;  // no live member can own the group
};

struct QoSSample {
  std::string from;
  std::string to;
  double rtt_ms = 0;
  double loss_rate = 0;  // [0,1]
  double throughput_mps = 0;
  TimestampMs at = 0;
};

enum class OverlayActionKind { AddMirror, MovePrimary, Rebalance, Promote, Park };

std::string to_string(OverlayActionKind k);

struct OverlayAction {
  OverlayActionKind kind;
  std::string group;  // empty for node-level actions
  std::string node;
  std::string peer;  // counterpart node when meaningful
  TimestampMs at = 0;
};

struct ReconfigThresholds {
  double loss_hi = 0.1;
  double rtt_hi_ms = 250.0;
  double skew_hi = 0.5;  // (max-min)/max node load
};

/// Pure rule table: one action per violating sample, plus one rebalance when
/// per-node load skew exceeds the bound.
std::vector<OverlayAction> decide_reconfiguration(const std::vector<QoSSample>& samples,
                                                  const ReconfigThresholds& thresholds);

/// The Broker Overlay Manager Agent: membership, heartbeat failure detection,
/// group mirroring assignments, and hot-swap failover.
class OverlayManager {
 public:
  struct Options {
    TimestampMs suspect_timeout_ms = 5000;
    TimestampMs dead_timeout_ms = 15000;
  };

  OverlayManager(const Clock& clock, Options opts = {},
                 config::AuditLog* audit = nullptr);

  // -- wiring --
  /// Highest contiguous sequence a node's replica buffer holds for a group.
  std::function<std::uint64_t(const std::string& node, const std::string& group)> seq_query;
  /// Fired when a mirror is promoted to primary.
  std::function<void(const std::string& group, const std::string& new_primary)> on_promote;
  /// Fired when a node joins (the trust engine opens a record on it).
  std::function<void(const std::string& node)> on_node_joined;
  /// Structured `ACTION <kind> <group> <node> <ts>` lines for the harness.
  std::function<void(const std::string& line)> action_log;

  void add_node(GNode n);  // throws std::invalid_argument on duplicate id
  void add_group(TopicGroup g);

  const GNode* node(const std::string& id) const;
  const TopicGroup* group(const std::string& id) const;
  std::vector<std::string> node_ids() const;
  std::vector<std::string> group_ids() const;

  void on_heartbeat(const std::string& node, TimestampMs now);

  /// Applies the suspect/dead transitions and fires failover for every group
  /// whose primary died. Returns ids of nodes that newly became dead.
  std::vector<std::string> detect_failure(TimestampMs now);

  /// Promotes the highest-seq alive mirror (ties by lexicographic id).
  /// Returns the promoted node id, or nullopt when the group got parked.
  std::optional<std::string> failover(const std::string& group_id);

  QoSSample measure_qos(const std::string& a, const std::string& b);
  /// Raw probe result; the harness wires this to the simulated links.
  std::function<std::optional<QoSSample>(const std::string&, const std::string&)> prober;
  /// Sink for qos.* samples (normally the monitoring service).
  std::function<void(const monitor::MetricSample&)> metric_sink;

  /// Fraction of known nodes currently alive, 1.0 with no nodes.
  double health() const;

 private:
  void assign_node_to_groups(const std::string& node_id);
  void log_action(OverlayActionKind kind, const std::string& group, const std::string& node);

  const Clock& clock_;
  Options opts_;
  config::AuditLog* audit_;
  std::map<std::string, GNode> nodes_;
  std::map<std::string, TopicGroup> groups_;
  std::vector<std::string> group_order_;
};

}  // namespace gemom::overlay

#endif
