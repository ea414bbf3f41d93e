#include "gemombus/authz/authz.hpp"

#include <json.hpp>

#include <cstdio>
#include <stdexcept>

namespace gemom::authz {

namespace {

using nlohmann::json;

int minutes_of_day(TimestampMs ts) {
  const std::int64_t minutes = ts / 60000;
  return static_cast<int>(((minutes % 1440) + 1440) % 1440);
}

std::optional<int> parse_hhmm(const std::string& s) {
  int h = 0, m = 0;
  if (std::sscanf(s.c_str(), "%d:%d", &h, &m) != 2) return std::nullopt;
  if (h < 0 || h > 24 || m < 0 || m > 59) return std::nullopt;
  return h * 60 + m;
}

std::string format_hhmm(int minutes) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

bool context_bound_holds(const CompositeKey& ck, const ContextBound& bound) {
  const ContextValue* value = ck.context(bound.key);
  if (!value) return false;
  if (const auto* iv = std::get_if<Interval>(&bound.bound)) {
    const double* num = std::get_if<double>(value);
    return num && *num >= iv->lo && *num <= iv->hi;
  }
  const auto& want = std::get<std::string>(bound.bound);
  const std::string* str = std::get_if<std::string>(value);
  return str && *str == want;
}

// All predicates of one rule except the dynamic floor.
bool rule_matches(const AuthzRule& rule, const CompositeKey& ck,
                  const std::vector<std::string>& actor_groups, Operation op,
                  const broker::Topic& topic) {
  if (!rule.groups.empty()) {
    bool in_group = false;
    for (const auto& g : actor_groups) {
      if (rule.groups.count(g) > 0) {
        in_group = true;
        break;
      }
    }
    if (!in_group) return false;
  }
  if (!broker::match(rule.pattern, topic)) return false;
  if (rule.operations.count(op) == 0) return false;
  if (ck.auth_strength < rule.strength_min || ck.auth_strength > rule.strength_max) {
    return false;
  }
  if (!rule.time_windows.empty()) {
    const int mod = minutes_of_day(ck.time);
    bool in_window = false;
    for (const auto& w : rule.time_windows) {
      if (mod >= w.start_min && mod < w.end_min) {
        in_window = true;
        break;
      }
    }
    if (!in_window) return false;
  }
  for (const auto& bound : rule.context_bounds) {
    if (!context_bound_holds(ck, bound)) return false;
  }
  for (const auto& [dim, iv] : rule.profile_bounds) {
    auto it = ck.security_profile.find(dim);
    if (it == ck.security_profile.end()) return false;
    if (it->second < iv.lo || it->second > iv.hi) return false;
  }
  return true;
}

}  // namespace

std::string to_string(Operation op) {
  switch (op) {
    case Operation::Publish: return "publish";
    case Operation::Subscribe: return "subscribe";
    case Operation::Create: return "create";
    case Operation::Delete: return "delete";
  }
  return "publish";
}

std::optional<Operation> operation_from(const std::string& s) {
  if (s == "publish") return Operation::Publish;
  if (s == "subscribe") return Operation::Subscribe;
  if (s == "create") return Operation::Create;
  if (s == "delete") return Operation::Delete;
  return std::nullopt;
}

const ContextValue* CompositeKey::context(const std::string& key) const {
  for (const ContextMap* scope : {&env, &access, &business}) {
    auto it = scope->find(key);
    if (it != scope->end()) return &it->second;
  }
  return nullptr;
}

std::vector<std::pair<std::string, int>> translate_groups(
    const std::string& actor, int auth_strength,
    const std::map<std::string, std::vector<std::string>>& directory) {
  auto it = directory.find(actor);
  if (it == directory.end()) {
    throw std::invalid_argument("unknown actor: " + actor);
  }
  std::vector<std::pair<std::string, int>> out;
  out.reserve(it->second.size());
  for (const auto& g : it->second) out.emplace_back(g, auth_strength);
  return out;
}

Decision evaluate(const CompositeKey& ck, const std::vector<std::string>& actor_groups,
                  Operation op, const broker::Topic& topic, const Policy& policy,
                  int floor) {
  bool floor_blocked = false;
  for (std::size_t i = 0; i < policy.rules.size(); ++i) {
    const AuthzRule& rule = policy.rules[i];
    if (!rule_matches(rule, ck, actor_groups, op, topic)) continue;
    if (ck.auth_strength < floor) {
      floor_blocked = true;
      continue;
    }
    return Decision{true, i, ""};
  }
  return Decision{false, std::nullopt, floor_blocked ? "strength-floor" : "default-deny"};
}

std::string Policy::serialize() const {
  json j;
  j["version"] = version;
  j["default"] = "deny";
  j["rules"] = json::array();
  for (const auto& rule : rules) {
    json r;
    r["groups"] = std::vector<std::string>(rule.groups.begin(), rule.groups.end());
    r["pattern"] = rule.pattern.pattern;
    std::vector<std::string> ops;
    for (Operation op : rule.operations) ops.push_back(to_string(op));
    r["operations"] = ops;
    r["strength"] = {rule.strength_min, rule.strength_max};
    if (!rule.time_windows.empty()) {
      json ws = json::array();
      for (const auto& w : rule.time_windows) {
        ws.push_back({format_hhmm(w.start_min), format_hhmm(w.end_min)});
      }
      r["windows"] = ws;
    }
    if (!rule.context_bounds.empty()) {
      json ctx = json::object();
      for (const auto& bound : rule.context_bounds) {
        if (const auto* iv = std::get_if<Interval>(&bound.bound)) {
          ctx[bound.key] = {iv->lo, iv->hi};
        } else {
          ctx[bound.key] = std::get<std::string>(bound.bound);
        }
      }
      r["context"] = ctx;
    }
    if (!rule.profile_bounds.empty()) {
      json prof = json::object();
      for (const auto& [dim, iv] : rule.profile_bounds) prof[dim] = {iv.lo, iv.hi};
      r["profile"] = prof;
    }
    j["rules"].push_back(std::move(r));
  }
  return j.dump();
}

Policy Policy::parse(const std::string& text) {
  const json j = json::parse(text);
  Policy p;
  p.version = j.at("version").get<std::uint64_t>();
  if (j.contains("default") && j.at("default").get<std::string>() != "deny") {
    throw std::runtime_error("policy default must be \"deny\"");
  }
  for (const auto& r : j.value("rules", json::array())) {
    AuthzRule rule;
    for (const auto& g : r.value("groups", json::array())) {
      rule.groups.insert(g.get<std::string>());
    }
    rule.pattern.pattern = r.at("pattern").get<std::string>();
    if (!broker::valid_pattern(rule.pattern.pattern)) {
      throw std::runtime_error("invalid rule pattern: " + rule.pattern.pattern);
    }
    for (const auto& o : r.at("operations")) {
      auto op = operation_from(o.get<std::string>());
      if (!op) throw std::runtime_error("unknown operation: " + o.get<std::string>());
      rule.operations.insert(*op);
    }
    if (r.contains("strength")) {
      rule.strength_min = r["strength"].at(0).get<int>();
      rule.strength_max = r["strength"].at(1).get<int>();
      if (rule.strength_min > rule.strength_max) {
        throw std::runtime_error("strength range min > max");
      }
    }
    for (const auto& w : r.value("windows", json::array())) {
      auto start = parse_hhmm(w.at(0).get<std::string>());
      auto end = parse_hhmm(w.at(1).get<std::string>());
      if (!start || !end || *start >= *end) throw std::runtime_error("malformed time window");
      rule.time_windows.push_back({*start, *end});
    }
    if (r.contains("context")) {
      for (auto it = r["context"].begin(); it != r["context"].end(); ++it) {
        ContextBound bound;
        bound.key = it.key();
        if (it.value().is_array()) {
          bound.bound = Interval{it.value().at(0).get<double>(), it.value().at(1).get<double>()};
        } else {
          bound.bound = it.value().get<std::string>();
        }
        rule.context_bounds.push_back(std::move(bound));
      }
    }
    if (r.contains("profile")) {
      for (auto it = r["profile"].begin(); it != r["profile"].end(); ++it) {
        rule.profile_bounds[it.key()] =
            Interval{it.value().at(0).get<double>(), it.value().at(1).get<double>()};
      }
    }
    p.rules.push_back(std::move(rule));
  }
  return p;
}

AuthzEngine::AuthzEngine(const Clock& clock, config::AuditLog* audit)
    : clock_(clock), audit_(audit) {}

void AuthzEngine::set_directory(std::map<std::string, std::vector<std::string>> directory) {
  directory_ = std::move(directory);
}

void AuthzEngine::load_policy(Policy p) { policy_ = std::move(p); }

void AuthzEngine::set_floor(int n) {
  if (n < 0 || n > 5) throw std::out_of_range("floor outside 0..5");
  const int old = floor_;
  floor_ = n;
  if (audit_) {
    audit_->write(config::AuditCategory::Authz, "authz",
                  {{"event", "floor-changed"},
                   {"old", std::to_string(old)},
                   {"new", std::to_string(n)}});
  }
}

Decision AuthzEngine::evaluate(const CompositeKey& ck, Operation op,
                               const broker::Topic& topic) const {
  std::vector<std::string> groups;
  if (auto it = directory_.find(ck.actor); it != directory_.end()) groups = it->second;
  return authz::evaluate(ck, groups, op, topic, policy_, floor_);
}

bool AuthzEngine::apply_policy_evolution(const wire::Envelope& e,
                                         const crypto::PublicKey& owner_key) {
  const bool signed_ok =
      e.sig && crypto::verify(owner_key.sign_pub, wire::canonical_bytes(e), e.sig->signature);
  if (!signed_ok) {
    if (audit_) {
      audit_->write(config::AuditCategory::Authz, e.sender,
                    {{"event", "policy-rejected"}, {"reason", "bad-signature"}});
    }
    return false;
  }
  Policy incoming;
  try {
    incoming = Policy::parse(to_string(e.payload));
  } catch (const std::exception& err) {
    if (audit_) {
      audit_->write(config::AuditCategory::Authz, e.sender,
                    {{"event", "policy-rejected"}, {"reason", err.what()}});
    }
    return false;
  }
  if (incoming.version <= policy_.version) {
    return false;  // stale or replayed update
  }
  policy_ = std::move(incoming);
  if (audit_) {
    audit_->write(config::AuditCategory::Authz, e.sender,
                  {{"event", "policy-applied"}, {"version", std::to_string(policy_.version)}});
  }
  return true;
}

}  // namespace gemom::authz
