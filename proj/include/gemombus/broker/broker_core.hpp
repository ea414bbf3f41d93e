#ifndef GEMOMBUS_BROKER_BROKER_CORE_HPP
#define GEMOMBUS_BROKER_BROKER_CORE_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gemombus/broker/topic.hpp"
#include "gemombus/config/audit.hpp"
#include "gemombus/kmf/kmf.hpp"
#include "gemombus/util/clock.hpp"
#include "gemombus/wire/envelope.hpp"

namespace gemom::broker {

enum class RejectKind {
  None,
  Auth,        // token invalid / expired / revoked
  Authz,       // rights or scope insufficient
  Strength,    // below the dynamic authorization floor
  StaleKey,    // encrypted under a revoked TopicKey
  Reserved,    // control namespace not open to this principal
  NotPrimary,  // this node does not sequence the topic's group
};

std::string to_string(RejectKind k);

struct PublishOutcome {
  bool accepted = false;
  RejectKind reject = RejectKind::None;
  std::string reason;
  std::string group;
  std::uint64_t seq = 0;
  bool duplicate = false;  // publisher retry of an envelope already sequenced
};

struct SubscribeOutcome {
  bool accepted = false;
  RejectKind reject = RejectKind::None;
  std::string reason;
  std::uint64_t sub_id = 0;
};

struct Subscription {
  std::uint64_t sub_id = 0;
  std::string subscriber;
  TopicPattern pattern;
  std::string token_id;
  TimestampMs created = 0;
};

struct DeliveryRecord {
  enum class State { Pending, Acked, Expired };

  std::string envelope_id;
  std::string subscriber;
  State state = State::Pending;
  int attempts = 0;  // redeliveries so far, <= max_redelivery
  TimestampMs due = 0;
};

struct GroupConfig {
  std::string id;
  std::vector<TopicPattern> patterns;
  std::size_t replay_cap = 10000;
};

/// The operational node: subscription matching, per-group sequencing, replay
/// buffering, at-least-once delivery, and the enforcement hooks. Transport
/// and connection handling live above this class.
class BrokerCore {
 public:
  struct Options {
    int max_redelivery = 3;
    TimestampMs ack_timeout_ms = 2000;
  };

  struct Counters {
    std::uint64_t published_ok = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t rejected_auth = 0;
    std::uint64_t rejected_authz = 0;
    std::uint64_t rejected_strength = 0;
    std::uint64_t rejected_stale_key = 0;
    std::uint64_t rejected_other = 0;
    std::uint64_t delivered = 0;
    std::uint64_t redelivered = 0;
    std::uint64_t acked = 0;
    std::uint64_t expired = 0;
  };

  BrokerCore(std::string node_id, kmf::TokenVerifier verifier, const Clock& clock,
             Options opts = {});

  // -- wiring --
  /// Delivery of an envelope to a matching subscriber.
  std::function<void(const Subscription&, const wire::Envelope&)> deliver;
  /// Forward an accepted envelope to the group's mirrors.
  std::function<void(const std::string& group, const wire::Envelope&)> replicate;
  /// Dynamic minimum authentication strength (the adaptive floor).
  std::function<int()> floor;
  /// Trust evidence stream: principal + success/failure outcome.
  std::function<void(const std::string& principal, bool success)> evidence;
  config::AuditLog* audit = nullptr;

  const std::string& node_id() const { return node_id_; }
  kmf::TokenVerifier& verifier() { return verifier_; }

  // -- topic groups --
  void configure_group(GroupConfig g, bool primary);
  bool is_primary(const std::string& group) const;
  void promote_to_primary(const std::string& group);
  const std::string* group_of(std::string_view topic) const;
  std::uint64_t highest_seq(const std::string& group) const;
  std::vector<std::string> group_ids() const;

  // -- data plane --
  PublishOutcome publish(wire::Envelope e, const kmf::SecurityToken& token);
  SubscribeOutcome subscribe(const TopicPattern& pattern, const kmf::SecurityToken& token,
                             const std::string& subscriber,
                             const std::map<std::string, std::uint64_t>& resume_after = {});
  bool unsubscribe(std::uint64_t sub_id);
  std::size_t drop_subscriptions_of_token(const std::string& token_id);
  void ack(const std::string& envelope_id, const std::string& subscriber);
  /// Mirror-side ingestion of a replicated envelope.
  void ingest_replica(const std::string& group, const wire::Envelope& e);
  /// Redelivers overdue pending envelopes; call about once per second.
  void tick(TimestampMs now);

  const Counters& counters() const { return counters_; }
  /// Per-principal accepted-publish counts since the previous drain.
  std::map<std::string, std::uint64_t> drain_principal_counts();
  std::size_t pending_deliveries() const;
  std::vector<Subscription> subscriptions() const;

 private:
  struct GroupState {
    GroupConfig config;
    bool primary = false;
    std::uint64_t next_seq = 1;
    std::deque<wire::Envelope> replay;              // contiguous, sorted by seq
    std::map<std::string, std::uint64_t> id_index;  // envelope id -> seq
  };

  struct PendingKey {
    std::string subscriber;
    std::string envelope_id;
    auto operator<=>(const PendingKey&) const = default;
  };

  GroupState* find_group(const std::string& id);
  const GroupState* find_group(const std::string& id) const;
  void buffer_envelope(GroupState& g, const wire::Envelope& e);
  void route_to_subscribers(const wire::Envelope& e);
  void record_delivery(const Subscription& sub, const wire::Envelope& e);
  PublishOutcome reject(RejectKind kind, const std::string& reason,
                        const std::string& principal);
  int current_floor() const { return floor ? floor() : 0; }

  std::string node_id_;
  kmf::TokenVerifier verifier_;
  const Clock& clock_;
  Options opts_;
  Counters counters_;

  std::vector<std::string> group_order_;
  std::map<std::string, GroupState> groups_;
  std::uint64_t next_sub_id_ = 1;
  std::map<std::uint64_t, Subscription> subs_;
  std::map<PendingKey, DeliveryRecord> pending_;
  std::map<std::string, wire::Envelope> held_;      // envelope id -> envelope
  std::map<std::string, int> held_refs_;            // envelope id -> pending records
  std::deque<std::pair<TimestampMs, PendingKey>> sweep_;
  std::map<std::string, std::uint64_t> principal_counts_;
  std::map<std::string, std::uint64_t> success_streak_;
};

}  // namespace gemom::broker

#endif
