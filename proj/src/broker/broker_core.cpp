#include "gemombus/broker/broker_core.hpp"

#include "gemombus/wire/topics.hpp"

#include <algorithm>

namespace gemom::broker {

namespace {

bool broadcast_topic(std::string_view topic) {
  return topic == wire::topics::kKmfRevocation || topic == wire::topics::kKmfPubkeys ||
         topic.starts_with(wire::topics::kPolicyEvolutionPrefix);
}

bool reserved_scope(const std::string& pattern) {
  return std::string_view(pattern).starts_with(wire::topics::kReservedPrefix);
}

}  // namespace

std::string to_string(RejectKind k) {
  switch (k) {
    case RejectKind::None: return "none";
    case RejectKind::Auth: return "auth";
    case RejectKind::Authz: return "authz";
    case RejectKind::Strength: return "strength";
    case RejectKind::StaleKey: return "stale-key";
    case RejectKind::Reserved: return "reserved";
    case RejectKind::NotPrimary: return "not-primary";
  }
  return "none";
}

BrokerCore::BrokerCore(std::string node_id, kmf::TokenVerifier verifier, const Clock& clock,
                       Options opts)
    : node_id_(std::move(node_id)), verifier_(std::move(verifier)), clock_(clock),
      opts_(opts) {}

void BrokerCore::configure_group(GroupConfig g, bool primary) {
  const std::string id = g.id;
  GroupState state;
  state.config = std::move(g);
  state.primary = primary;
  if (groups_.emplace(id, std::move(state)).second) {
    group_order_.push_back(id);
  } else {
    groups_[id].config = state.config;
    groups_[id].primary = primary;
  }
}

bool BrokerCore::is_primary(const std::string& group) const {
  const GroupState* g = find_group(group);
  return g && g->primary;
}

void BrokerCore::promote_to_primary(const std::string& group) {
  GroupState* g = find_group(group);
  if (!g) return;
  g->primary = true;
  g->next_seq = (g->replay.empty() ? 0 : g->replay.back().seq) + 1;
}

const std::string* BrokerCore::group_of(std::string_view topic) const {
  for (const auto& id : group_order_) {
    const GroupState& g = groups_.at(id);
    for (const auto& p : g.config.patterns) {
      if (match(p, Topic{std::string(topic)})) return &g.config.id;
    }
  }
  return nullptr;
}

std::uint64_t BrokerCore::highest_seq(const std::string& group) const {
  const GroupState* g = find_group(group);
  if (!g || g->replay.empty()) return 0;
  return g->replay.back().seq;
}

std::vector<std::string> BrokerCore::group_ids() const { return group_order_; }

BrokerCore::GroupState* BrokerCore::find_group(const std::string& id) {
  auto it = groups_.find(id);
  return it == groups_.end() ? nullptr : &it->second;
}

const BrokerCore::GroupState* BrokerCore::find_group(const std::string& id) const {
  auto it = groups_.find(id);
  return it == groups_.end() ? nullptr : &it->second;
}

PublishOutcome BrokerCore::reject(RejectKind kind, const std::string& reason,
                                  const std::string& principal) {
  switch (kind) {
    case RejectKind::Auth: ++counters_.rejected_auth; break;
    case RejectKind::Authz: ++counters_.rejected_authz; break;
    case RejectKind::Strength: ++counters_.rejected_strength; break;
    case RejectKind::StaleKey: ++counters_.rejected_stale_key; break;
    default: ++counters_.rejected_other; break;
  }
  if (audit) {
    audit->write(config::AuditCategory::Authz, principal,
                 {{"event", "publish-rejected"},
                  {"kind", to_string(kind)},
                  {"reason", reason}});
  }
  if (evidence && (kind == RejectKind::Auth || kind == RejectKind::Authz)) {
    evidence(principal, false);
  }
  PublishOutcome out;
  out.reject = kind;
  out.reason = reason;
  return out;
}

PublishOutcome BrokerCore::publish(wire::Envelope e, const kmf::SecurityToken& token) {
  const kmf::TokenStatus status = verifier_.verify(token, clock_.now_ms());
  if (status != kmf::TokenStatus::Valid) {
    return reject(RejectKind::Auth, kmf::to_string(status), e.sender);
  }

  const bool reserved = wire::topics::is_reserved(e.topic);
  if (reserved && !wire::topics::is_kmf_request(e.topic) && !reserved_scope(token.pattern)) {
    return reject(RejectKind::Reserved, "control namespace", e.sender);
  }

  // KMF request topics are the doorway every authenticated client may use;
  // everything else requires an in-scope publish right.
  if (!wire::topics::is_kmf_request(e.topic)) {
    if (!token.has_right(kmf::Right::Publish)) {
      return reject(RejectKind::Authz, "token lacks publish right", e.sender);
    }
    if (!match(TopicPattern{token.pattern}, Topic{e.topic})) {
      return reject(RejectKind::Authz, "topic outside token scope", e.sender);
    }
  }

  if (token.auth_strength < current_floor()) {
    return reject(RejectKind::Strength,
                  "authorization floor " + std::to_string(current_floor()), e.sender);
  }

  if (e.enc) {
    if (verifier_.key_revoked(e.enc->key_id)) {
      return reject(RejectKind::StaleKey, "key revoked: " + e.enc->key_id, e.sender);
    }
    verifier_.note_key_seen(e.enc->key_id);
  }

  const std::string* group_id = group_of(e.topic);
  if (!group_id) {
    return reject(RejectKind::NotPrimary, "no group for topic", e.sender);
  }
  GroupState& g = *find_group(*group_id);
  if (!g.primary) {
    PublishOutcome out = reject(RejectKind::NotPrimary, "group owned elsewhere", e.sender);
    out.group = *group_id;
    return out;
  }

  PublishOutcome out;
  out.accepted = true;
  out.group = *group_id;

  if (auto dup = g.id_index.find(e.id); dup != g.id_index.end()) {
    // Publisher retry of an envelope we already sequenced.
    out.seq = dup->second;
    out.duplicate = true;
    ++counters_.duplicates;
    return out;
  }

  if (e.ts == 0) e.ts = clock_.now_ms();
  e.seq = g.next_seq++;
  out.seq = e.seq;
  buffer_envelope(g, e);
  if (replicate) replicate(*group_id, e);
  route_to_subscribers(e);

  ++counters_.published_ok;
  ++principal_counts_[e.sender];
  if (evidence) {
    // Sampled 1-in-10 so steady traffic does not swamp failure evidence.
    if (++success_streak_[e.sender] % 10 == 0) evidence(e.sender, true);
  }
  return out;
}

void BrokerCore::buffer_envelope(GroupState& g, const wire::Envelope& e) {
  g.replay.push_back(e);
  g.id_index[e.id] = e.seq;
  while (g.replay.size() > g.config.replay_cap) {
    g.id_index.erase(g.replay.front().id);
    g.replay.pop_front();
  }
}

void BrokerCore::route_to_subscribers(const wire::Envelope& e) {
  const Topic topic{e.topic};
  for (const auto& [id, sub] : subs_) {
    if (!match(sub.pattern, topic)) continue;
    record_delivery(sub, e);
  }
}

void BrokerCore::record_delivery(const Subscription& sub, const wire::Envelope& e) {
  const PendingKey key{sub.subscriber, e.id};
  auto it = pending_.find(key);
  if (it != pending_.end() && it->second.state != DeliveryRecord::State::Pending) {
    return;  // already terminal for this subscriber
  }
  if (it == pending_.end()) {
    DeliveryRecord rec;
    rec.envelope_id = e.id;
    rec.subscriber = sub.subscriber;
    rec.due = clock_.now_ms() + opts_.ack_timeout_ms;
    pending_.emplace(key, rec);
    if (held_refs_[e.id]++ == 0) held_[e.id] = e;
    sweep_.emplace_back(rec.due, key);
  }
  ++counters_.delivered;
  if (deliver) deliver(sub, e);
}

SubscribeOutcome BrokerCore::subscribe(const TopicPattern& pattern,
                                       const kmf::SecurityToken& token,
                                       const std::string& subscriber,
                                       const std::map<std::string, std::uint64_t>& resume_after) {
  SubscribeOutcome out;
  const kmf::TokenStatus status = verifier_.verify(token, clock_.now_ms());
  if (status != kmf::TokenStatus::Valid) {
    out.reject = RejectKind::Auth;
    out.reason = kmf::to_string(status);
  } else if (!valid_pattern(pattern.pattern)) {
    out.reject = RejectKind::Authz;
    out.reason = "malformed pattern";
  } else if (!broadcast_topic(pattern.pattern)) {
    if (!token.has_right(kmf::Right::Subscribe)) {
      out.reject = RejectKind::Authz;
      out.reason = "token lacks subscribe right";
    } else if (!pattern_contains(TopicPattern{token.pattern}, pattern)) {
      out.reject = RejectKind::Authz;
      out.reason = "pattern broader than token scope";
    } else if (token.auth_strength < current_floor()) {
      out.reject = RejectKind::Strength;
      out.reason = "authorization floor " + std::to_string(current_floor());
    }
  }
  if (out.reject != RejectKind::None) {
    if (audit) {
      audit->write(config::AuditCategory::Authz, subscriber,
                   {{"event", "subscribe-rejected"},
                    {"kind", to_string(out.reject)},
                    {"reason", out.reason}});
    }
    if (evidence && out.reject == RejectKind::Auth) evidence(subscriber, false);
    return out;
  }

  Subscription sub;
  sub.sub_id = next_sub_id_++;
  sub.subscriber = subscriber;
  sub.pattern = pattern;
  sub.token_id = token.token_id;
  sub.created = clock_.now_ms();
  subs_[sub.sub_id] = sub;
  out.accepted = true;
  out.sub_id = sub.sub_id;

  // Replay buffered history the subscriber has not seen yet.
  for (const auto& [gid, after] : resume_after) {
    const GroupState* g = find_group(gid);
    if (!g || !g->primary) continue;
    for (const auto& e : g->replay) {
      if (e.seq > after && match(pattern, Topic{e.topic})) record_delivery(sub, e);
    }
  }
  return out;
}

bool BrokerCore::unsubscribe(std::uint64_t sub_id) { return subs_.erase(sub_id) > 0; }

std::size_t BrokerCore::drop_subscriptions_of_token(const std::string& token_id) {
  std::size_t dropped = 0;
  for (auto it = subs_.begin(); it != subs_.end();) {
    if (it->second.token_id == token_id) {
      it = subs_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

void BrokerCore::ack(const std::string& envelope_id, const std::string& subscriber) {
  auto it = pending_.find(PendingKey{subscriber, envelope_id});
  if (it == pending_.end() || it->second.state != DeliveryRecord::State::Pending) {
    return;  // unknown or repeated ack: idempotent no-op
  }
  it->second.state = DeliveryRecord::State::Acked;
  ++counters_.acked;
  if (--held_refs_[envelope_id] == 0) {
    held_refs_.erase(envelope_id);
    held_.erase(envelope_id);
  }
}

void BrokerCore::ingest_replica(const std::string& group, const wire::Envelope& e) {
  GroupState* g = find_group(group);
  if (!g) return;
  const std::uint64_t last = g->replay.empty() ? 0 : g->replay.back().seq;
  if (e.seq <= last) return;  // duplicate or stale replica
  if (e.seq != last + 1) {
    // A gap means a lost replication frame; keeping the buffer contiguous
    // matters more than keeping every envelope, so drop out-of-order tails.
    return;
  }
  buffer_envelope(*g, e);
}

void BrokerCore::tick(TimestampMs now) {
  while (!sweep_.empty() && sweep_.front().first <= now) {
    const PendingKey key = sweep_.front().second;
    sweep_.pop_front();
    auto it = pending_.find(key);
    if (it == pending_.end() || it->second.state != DeliveryRecord::State::Pending) continue;
    DeliveryRecord& rec = it->second;
    if (rec.attempts >= opts_.max_redelivery) {
      rec.state = DeliveryRecord::State::Expired;
      ++counters_.expired;
      if (--held_refs_[rec.envelope_id] == 0) {
        held_refs_.erase(rec.envelope_id);
        held_.erase(rec.envelope_id);
      }
      continue;
    }
    ++rec.attempts;
    rec.due = now + opts_.ack_timeout_ms;
    sweep_.emplace_back(rec.due, key);
    ++counters_.redelivered;
    auto held = held_.find(rec.envelope_id);
    if (held == held_.end()) continue;
    // Deliver to the same subscriber if it still has a matching subscription.
    for (const auto& [sid, sub] : subs_) {
      if (sub.subscriber == rec.subscriber && match(sub.pattern, Topic{held->second.topic})) {
        if (deliver) deliver(sub, held->second);
        break;
      }
    }
  }
}

std::map<std::string, std::uint64_t> BrokerCore::drain_principal_counts() {
  std::map<std::string, std::uint64_t> out;
  out.swap(principal_counts_);
  return out;
}

std::size_t BrokerCore::pending_deliveries() const {
  std::size_t n = 0;
  for (const auto& [key, rec] : pending_) {
    if (rec.state == DeliveryRecord::State::Pending) ++n;
  }
  return n;
}

std::vector<Subscription> BrokerCore::subscriptions() const {
  std::vector<Subscription> out;
  out.reserve(subs_.size());
  for (const auto& [id, sub] : subs_) out.push_back(sub);
  return out;
}

}  // namespace gemom::broker
