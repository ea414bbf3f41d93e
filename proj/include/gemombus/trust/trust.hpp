#ifndef GEMOMBUS_TRUST_TRUST_HPP
#define GEMOMBUS_TRUST_TRUST_HPP

#include <map>
#include <string>
#include <vector>

#include "gemombus/monitor/monitor.hpp"
#include "gemombus/util/clock.hpp"

namespace gemom::trust {

enum class Outcome { Success, Failure };

/// Beta-posterior evidence with the uniform Beta(1,1) prior baked in.
struct TrustRecord {
  std::string entity_id;
  double alpha = 1.0;  // successes + prior
  double beta = 1.0;   // failures + prior
  TimestampMs updated = 0;
};

struct TrustValues {
  double trust = 0.5;
  double confidence = 0.0;
  double trustworthiness = 0.0;
};

struct RiskScore {
  double likelihood = 0;
  double impact = 0;
  double score = 0;  // likelihood * impact
};

TrustRecord update_evidence(TrustRecord r, Outcome outcome, TimestampMs now = 0);

/// Beta posterior mean alpha/(alpha+beta).
double trust(const TrustRecord& r);

/// 1 - sd(Beta(alpha,beta))/sd(Beta(1,1)), clipped to [0,1].
double confidence(const TrustRecord& r);

/// Product combination of trust and confidence.
double trustworthiness(double t, double c);

TrustValues values_of(const TrustRecord& r);

RiskScore compute_risk(double likelihood, double impact);

/// Descending by score, ties broken by id; permutation-invariant.
std::vector<std::pair<std::string, RiskScore>> risk_rank(
    std::vector<std::pair<std::string, RiskScore>> items);

/// tw * (w_s*level + (1-w_s)) * (1 - w_r*risk); defaults w_s = w_r = 0.5.
double effective_trustworthiness(double tw, double security_level, double risk,
                                 double w_s = 0.5, double w_r = 0.5);

/// Leaf TrustValues propagated with the same weighted-mean / critical-min
/// combinator as the security-level aggregation, component-wise.
std::map<std::string, TrustValues> aggregate_trust(
    const monitor::BmcTree& tree, const std::map<std::string, TrustValues>& leaf_values);

/// Evidence store with one writer; snapshots are plain copies.
class TrustStore {
 public:
  explicit TrustStore(const Clock& clock) : clock_(clock) {}

  void open_record(const std::string& entity_id);
  void record(const std::string& entity_id, Outcome outcome);
  const TrustRecord* find(const std::string& entity_id) const;
  TrustValues values(const std::string& entity_id) const;  // fresh record if unknown

  /// suspicion = 1 - trust, reported only for entities with failure evidence.
  std::map<std::string, double> suspicion() const;

  const std::map<std::string, TrustRecord>& records() const { return records_; }

  /// ts,entity_id,alpha,beta,trust,confidence,trustworthiness
  std::string export_csv() const;

 private:
  const Clock& clock_;
  std::map<std::string, TrustRecord> records_;
};

}  // namespace gemom::trust

#endif
