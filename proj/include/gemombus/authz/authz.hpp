#ifndef GEMOMBUS_AUTHZ_AUTHZ_HPP
#define GEMOMBUS_AUTHZ_AUTHZ_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "gemombus/broker/topic.hpp"
#include "gemombus/config/audit.hpp"
#include "gemombus/crypto/crypto.hpp"
#include "gemombus/util/clock.hpp"
#include "gemombus/wire/envelope.hpp"

namespace gemom::authz {

enum class Operation { Publish, Subscribe, Create, Delete };

std::string to_string(Operation op);
std::optional<Operation> operation_from(const std::string& s);

using ContextValue = std::variant<double, std::string>;
using ContextMap = std::map<std::string, ContextValue>;

/// The unit-entity authorization is decided against: who, how strongly
/// authenticated, under which context, when, and at which system profile.
struct CompositeKey {
  std::string actor;
  int auth_strength = 0;  // 0..5
  ContextMap env;
  ContextMap access;
  ContextMap business;
  TimestampMs time = 0;
  std::map<std::string, double> security_profile;  // dimension -> [0,1]

  /// Context lookup across the env/access/business scopes, in that order.
  const ContextValue* context(const std::string& key) const;
};

struct Interval {
  double lo;
  double hi;
};

/// Bound on one context key: numeric interval or exact string.
struct ContextBound {
  std::string key;
  std::variant<Interval, std::string> bound;
};

/// Daily minutes-of-day window [start, end).
struct TimeWindow {
  int start_min = 0;
  int end_min = 0;
};

struct AuthzRule {
  std::set<std::string> groups;
  broker::TopicPattern pattern;
  std::set<Operation> operations;
  int strength_min = 0;
  int strength_max = 5;
  std::vector<TimeWindow> time_windows;     // empty = all day
  std::vector<ContextBound> context_bounds;
  std::map<std::string, Interval> profile_bounds;
};

struct Policy {
  std::uint64_t version = 0;
  std::vector<AuthzRule> rules;
  // default outcome is always deny

  std::string serialize() const;
  static Policy parse(const std::string& text);  // throws std::runtime_error
};

struct Decision {
  bool allow = false;
  std::optional<std::size_t> matched_rule;
  std::string reason;  // non-empty on deny
};

/// One pair per group membership, strength copied verbatim.
std::vector<std::pair<std::string, int>> translate_groups(
    const std::string& actor, int auth_strength,
    const std::map<std::string, std::vector<std::string>>& directory);

/// Pure decision function. First matching rule wins; everything else denies.
/// A rule matches when some group of the actor is in rule.groups, the pattern
/// matches the topic, the operation is granted, auth_strength lies in the
/// rule's range and clears the dynamic floor, the time falls in a window, and
/// all context and profile bounds hold.
Decision evaluate(const CompositeKey& ck, const std::vector<std::string>& actor_groups,
                  Operation op, const broker::Topic& topic, const Policy& policy, int floor);

/// Policy + floor snapshot holder with pub/sub policy evolution.
class AuthzEngine {
 public:
  AuthzEngine(const Clock& clock, config::AuditLog* audit = nullptr);

  void set_directory(std::map<std::string, std::vector<std::string>> directory);
  void load_policy(Policy p);
  const Policy& policy() const { return policy_; }

  void set_floor(int n);  // throws on out-of-range
  int floor() const { return floor_; }

  Decision evaluate(const CompositeKey& ck, Operation op, const broker::Topic& topic) const;

  /// Accepts a signed policy document from the policy evolution topic.
  /// Stale versions are ignored; bad signatures rejected and audited.
  /// Returns true when the policy was swapped in.
  bool apply_policy_evolution(const wire::Envelope& e, const crypto::PublicKey& owner_key);

 private:
  const Clock& clock_;
  config::AuditLog* audit_;
  std::map<std::string, std::vector<std::string>> directory_;
  Policy policy_;
  int floor_ = 0;
};

}  // namespace gemom::authz

#endif
