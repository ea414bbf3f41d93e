#include "gemombus/trust/trust.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gemom::trust {

namespace {

double beta_sd(double alpha, double beta) {
  const double n = alpha + beta;
  return std::sqrt(alpha * beta / (n * n * (n + 1.0)));
}

double clip01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

TrustRecord update_evidence(TrustRecord r, Outcome outcome, TimestampMs now) {
  if (outcome == Outcome::Success) {
    r.alpha += 1.0;
  } else {
    r.beta += 1.0;
  }
  r.updated = now;
  return r;
}

double trust(const TrustRecord& r) { return r.alpha / (r.alpha + r.beta); }

double confidence(const TrustRecord& r) {
  static const double prior_sd = beta_sd(1.0, 1.0);
  return clip01(1.0 - beta_sd(r.alpha, r.beta) / prior_sd);
}

double trustworthiness(double t, double c) { return t * c; }

TrustValues values_of(const TrustRecord& r) {
  TrustValues v;
  v.trust = trust(r);
  v.confidence = confidence(r);
  v.trustworthiness = trustworthiness(v.trust, v.confidence);
  return v;
}

RiskScore compute_risk(double likelihood, double impact) {
  if (likelihood < 0 || likelihood > 1 || impact < 0 || impact > 1) {
    throw std::invalid_argument("risk inputs must lie in [0,1]");
  }
  return RiskScore{likelihood, impact, likelihood * impact};
}

std::vector<std::pair<std::string, RiskScore>> risk_rank(
    std::vector<std::pair<std::string, RiskScore>> items) {
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    return a.first < b.first;
  });
  return items;
}

double effective_trustworthiness(double tw, double security_level, double risk, double w_s,
                                 double w_r) {
  return tw * (w_s * security_level + (1.0 - w_s)) * (1.0 - w_r * risk);
}

namespace {

TrustValues aggregate_node(const monitor::BmcTree& tree, const std::string& id,
                           const std::map<std::string, TrustValues>& leaves,
                           std::map<std::string, TrustValues>& out,
                           std::map<std::string, int>& visiting) {
  if (auto it = out.find(id); it != out.end()) return it->second;
  if (visiting[id]++ > 0) throw std::runtime_error("cycle in BMC tree at " + id);
  const monitor::BMCNode& node = tree.at(id);
  TrustValues v;
  if (node.children.empty()) {
    auto leaf = leaves.find(id);
    if (leaf != leaves.end()) v = leaf->second;
  } else if (node.critical) {
    v = {1.0, 1.0, 1.0};
    for (const auto& c : node.children) {
      const TrustValues cv = aggregate_node(tree, c, leaves, out, visiting);
      v.trust = std::min(v.trust, cv.trust);
      v.confidence = std::min(v.confidence, cv.confidence);
      v.trustworthiness = std::min(v.trustworthiness, cv.trustworthiness);
    }
  } else {
    double wsum = 0.0;
    for (const auto& c : node.children) wsum += tree.at(c).weight;
    v = {0.0, 0.0, 0.0};
    for (const auto& c : node.children) {
      const double w = tree.at(c).weight / wsum;
      const TrustValues cv = aggregate_node(tree, c, leaves, out, visiting);
      v.trust += w * cv.trust;
      v.confidence += w * cv.confidence;
      v.trustworthiness += w * cv.trustworthiness;
    }
  }
  out[id] = v;
  return v;
}

}  // namespace

std::map<std::string, TrustValues> aggregate_trust(
    const monitor::BmcTree& tree, const std::map<std::string, TrustValues>& leaf_values) {
  std::map<std::string, TrustValues> out;
  std::map<std::string, int> visiting;
  for (const auto& [id, node] : tree) aggregate_node(tree, id, leaf_values, out, visiting);
  return out;
}

void TrustStore::open_record(const std::string& entity_id) {
  records_.try_emplace(entity_id, TrustRecord{entity_id, 1.0, 1.0, clock_.now_ms()});
}

void TrustStore::record(const std::string& entity_id, Outcome outcome) {
  auto [it, _] = records_.try_emplace(entity_id, TrustRecord{entity_id, 1.0, 1.0, 0});
  it->second = update_evidence(it->second, outcome, clock_.now_ms());
}

const TrustRecord* TrustStore::find(const std::string& entity_id) const {
  auto it = records_.find(entity_id);
  return it == records_.end() ? nullptr : &it->second;
}

TrustValues TrustStore::values(const std::string& entity_id) const {
  if (const TrustRecord* r = find(entity_id)) return values_of(*r);
  return values_of(TrustRecord{entity_id, 1.0, 1.0, 0});
}

std::map<std::string, double> TrustStore::suspicion() const {
  std::map<std::string, double> out;
  for (const auto& [id, rec] : records_) {
    if (rec.beta > 1.0) out[id] = 1.0 - trust(rec);
  }
  return out;
}

std::string TrustStore::export_csv() const {
  std::ostringstream os;
  os << "ts,entity_id,alpha,beta,trust,confidence,trustworthiness\n";
  for (const auto& [id, rec] : records_) {
    const TrustValues v = values_of(rec);
    os << rec.updated << ',' << id << ',' << rec.alpha << ',' << rec.beta << ',' << v.trust
       << ',' << v.confidence << ',' << v.trustworthiness << '\n';
  }
  return os.str();
}

}  // namespace gemom::trust
