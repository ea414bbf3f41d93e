#include "gemombus/overlay/overlay.hpp"

#include <algorithm>
#include <stdexcept>

namespace gemom::overlay {

std::string to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Alive: return "alive";
    case NodeStatus::Suspect: return "suspect";
    case NodeStatus::Dead: return "dead";
  }
  return "dead";
}

std::string to_string(OverlayActionKind k) {
  switch (k) {
    case OverlayActionKind::AddMirror: return "add-mirror";
    case OverlayActionKind::MovePrimary: return "move-primary";
    case OverlayActionKind::Rebalance: return "rebalance";
    case OverlayActionKind::Promote: return "promote";
    case OverlayActionKind::Park: return "park";
  }
  return "promote";
}

std::vector<OverlayAction> decide_reconfiguration(const std::vector<QoSSample>& samples,
                                                  const ReconfigThresholds& thresholds) {
  std::vector<OverlayAction> actions;
  for (const auto& s : samples) {
    if (s.loss_rate > thresholds.loss_hi) {
      actions.push_back({OverlayActionKind::AddMirror, "", s.from, s.to, s.at});
    }
    if (s.rtt_ms > thresholds.rtt_hi_ms) {
      actions.push_back({OverlayActionKind::MovePrimary, "", s.from, s.to, s.at});
    }
  }
  // Load skew over mean throughput per originating node.
  std::map<std::string, std::pair<double, int>> loads;
  for (const auto& s : samples) {
    auto& [sum, n] = loads[s.from];
    sum += s.throughput_mps;
    ++n;
  }
  if (loads.size() >= 2) {
    std::string max_node, min_node;
    double max_load = -1, min_load = -1;
    for (const auto& [node, acc] : loads) {
      const double mean = acc.first / acc.second;
      if (max_load < 0 || mean > max_load) {
        max_load = mean;
        max_node = node;
      }
      if (min_load < 0 || mean < min_load) {
        min_load = mean;
        min_node = node;
      }
    }
    if (max_load > 0 && (max_load - min_load) / max_load > thresholds.skew_hi) {
      actions.push_back({OverlayActionKind::Rebalance, "", max_node, min_node, 0});
    }
  }
  return actions;
}

OverlayManager::OverlayManager(const Clock& clock, Options opts, config::AuditLog* audit)
    : clock_(clock), opts_(opts), audit_(audit) {}

void OverlayManager::add_node(GNode n) {
  if (nodes_.count(n.id) > 0) {
    throw std::invalid_argument("duplicate node id: " + n.id);
  }
  n.status = NodeStatus::Alive;
  if (n.last_heartbeat == 0) n.last_heartbeat = clock_.now_ms();
  const std::string id = n.id;
  nodes_.emplace(id, std::move(n));
  if (on_node_joined) on_node_joined(id);
  if (nodes_.at(id).role == NodeRole::Operational) assign_node_to_groups(id);
}

void OverlayManager::add_group(TopicGroup g) {
  const std::string id = g.id;
  if (groups_.emplace(id, std::move(g)).second) group_order_.push_back(id);
  // Fill roles from already-known operational nodes, in id order.
  for (const auto& [nid, node] : nodes_) {
    if (node.role == NodeRole::Operational) assign_node_to_groups(nid);
  }
}

void OverlayManager::assign_node_to_groups(const std::string& node_id) {
  for (const auto& gid : group_order_) {
    TopicGroup& g = groups_.at(gid);
    if (g.primary == node_id ||
        std::find(g.mirrors.begin(), g.mirrors.end(), node_id) != g.mirrors.end()) {
      continue;
    }
    if (g.primary.empty()) {
      g.primary = node_id;
      g.parked = false;
      log_action(OverlayActionKind::Promote, gid, node_id);
    } else if (static_cast<int>(g.mirrors.size()) + 1 < g.replication_factor) {
      g.mirrors.push_back(node_id);
      log_action(OverlayActionKind::AddMirror, gid, node_id);
    }
  }
}

const GNode* OverlayManager::node(const std::string& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const TopicGroup* OverlayManager::group(const std::string& id) const {
  auto it = groups_.find(id);
  return it == groups_.end() ? nullptr : &it->second;
}

std::vector<std::string> OverlayManager::node_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, n] : nodes_) out.push_back(id);
  return out;
}

std::vector<std::string> OverlayManager::group_ids() const { return group_order_; }

void OverlayManager::on_heartbeat(const std::string& node, TimestampMs now) {
  auto it = nodes_.find(node);
  if (it == nodes_.end()) return;
  it->second.last_heartbeat = now;
  if (it->second.status == NodeStatus::Suspect) {
    it->second.status = NodeStatus::Alive;  // dead is terminal
  }
}

std::vector<std::string> OverlayManager::detect_failure(TimestampMs now) {
  std::vector<std::string> newly_dead;
  for (auto& [id, n] : nodes_) {
    const TimestampMs silent = now - n.last_heartbeat;
    if (n.status == NodeStatus::Alive && silent > opts_.suspect_timeout_ms) {
      n.status = NodeStatus::Suspect;
      if (audit_) {
        audit_->write(config::AuditCategory::Overlay, id, {{"event", "node-suspect"}});
      }
    }
    if (n.status == NodeStatus::Suspect && silent > opts_.dead_timeout_ms) {
      n.status = NodeStatus::Dead;
      newly_dead.push_back(id);
      if (audit_) {
        audit_->write(config::AuditCategory::Overlay, id, {{"event", "node-dead"}});
      }
    }
  }
  for (const auto& dead : newly_dead) {
    for (const auto& gid : group_order_) {
      if (groups_.at(gid).primary == dead) failover(gid);
    }
  }
  return newly_dead;
}

std::optional<std::string> OverlayManager::failover(const std::string& group_id) {
  auto git = groups_.find(group_id);
  if (git == groups_.end()) return std::nullopt;
  TopicGroup& g = git->second;

  // Highest contiguous seq wins; ties go to the lexicographically first id.
  std::string best;
  std::uint64_t best_seq = 0;
  for (const auto& m : g.mirrors) {
    const GNode* n = node(m);
    if (!n || n->status != NodeStatus::Alive) continue;
    const std::uint64_t seq = seq_query ? seq_query(m, group_id) : 0;
    if (best.empty() || seq > best_seq || (seq == best_seq && m < best)) {
      best = m;
      best_seq = seq;
    }
  }
  if (best.empty()) {
    g.parked = true;
    log_action(OverlayActionKind::Park, group_id, g.primary);
    if (audit_) {
      audit_->write(config::AuditCategory::Overlay, g.primary,
                    {{"event", "group-unavailable"}, {"group", group_id}});
    }
    return std::nullopt;
  }

  g.mirrors.erase(std::find(g.mirrors.begin(), g.mirrors.end(), best));
  const std::string old_primary = g.primary;
  g.primary = best;
  g.parked = false;
  log_action(OverlayActionKind::Promote, group_id, best);
  if (audit_) {
    audit_->write(config::AuditCategory::Overlay, best,
                  {{"event", "failover"},
                   {"group", group_id},
                   {"old_primary", old_primary},
                   {"seq", std::to_string(best_seq)}});
  }
  if (on_promote) on_promote(group_id, best);
  return best;
}

QoSSample OverlayManager::measure_qos(const std::string& a, const std::string& b) {
  QoSSample s;
  s.from = a;
  s.to = b;
  s.at = clock_.now_ms();
  std::optional<QoSSample> probe = prober ? prober(a, b) : std::nullopt;
  if (probe) {
    s.rtt_ms = probe->rtt_ms;
    s.loss_rate = probe->loss_rate;
    s.throughput_mps = probe->throughput_mps;
  } else {
    s.loss_rate = 1.0;  // unreachable peer
  }
  if (metric_sink) {
    metric_sink({"qos.rtt." + a + "." + b, s.rtt_ms, s.at, a});
    metric_sink({"qos.loss." + a + "." + b, s.loss_rate, s.at, a});
    metric_sink({"qos.throughput." + a + "." + b, s.throughput_mps, s.at, a});
  }
  return s;
}

double OverlayManager::health() const {
  if (nodes_.empty()) return 1.0;
  std::size_t alive = 0;
  for (const auto& [id, n] : nodes_) {
    if (n.status == NodeStatus::Alive) ++alive;
  }
  return static_cast<double>(alive) / static_cast<double>(nodes_.size());
}

void OverlayManager::log_action(OverlayActionKind kind, const std::string& group,
                                const std::string& node) {
  if (!action_log) return;
  action_log("ACTION " + to_string(kind) + " " + group + " " + node + " " +
             std::to_string(clock_.now_ms()));
}

}  // namespace gemom::overlay
