#ifndef GEMOMBUS_MONITOR_MONITOR_HPP
#define GEMOMBUS_MONITOR_MONITOR_HPP

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gemombus/config/audit.hpp"
#include "gemombus/util/clock.hpp"

namespace gemom::monitor {

enum class Severity { Info, Warn, Critical };

std::string to_string(Severity s);

struct MetricSample {
  std::string metric_id;  // dotted, e.g. "broker1.msg_rate"
  double value = 0;
  TimestampMs at = 0;
  std::string source;  // reporting node
};

/// Bound on a metric. metric_id may end in ".*" to cover a whole prefix.
struct Threshold {
  std::string metric_id;
  std::optional<double> lo;
  std::optional<double> hi;
  Severity severity = Severity::Warn;
};

struct ThresholdEvent {
  std::string metric_id;
  Severity severity = Severity::Warn;
  double value = 0;
  double bound = 0;
  TimestampMs at = 0;
};

struct EwmaState {
  std::string metric_id;
  double lambda = 0.1;  // (0, 1]
  double mean = 0;
  double var = 0;
  std::uint64_t n = 0;
};

/// mean' = lambda*x + (1-lambda)*mean, var' by the same scheme on squared
/// residuals; z is the standardized residual against the prior state.
/// First sample initializes mean without producing a residual.
std::pair<EwmaState, double> ewma_update(EwmaState st, double x);

/// min(|z|/z_max, 1); z_max defaults to 6.
double anomaly_score(double z, double z_max = 6.0);

/// Row-stochastic transition matrix over discretized bins.
struct MarkovModel {
  std::vector<std::vector<double>> transitions;

  static MarkovModel train(const std::vector<int>& trace, int bins);
};

struct MarkovPrediction {
  std::vector<double> distribution;
  int point = 0;  // argmax, ties to the lowest bin
};

MarkovPrediction markov_predict(const MarkovModel& m, int current_bin);  // throws on bad rows

/// Two-class (normal vs bottleneck) Naive Bayes over discretized features,
/// with add-one smoothing. Out-of-range features clamp to the edge bins.
struct NbModel {
  std::vector<std::vector<double>> bin_edges;  // per feature, ascending inner edges
  // counts[class][feature][bin]
  std::vector<std::vector<std::vector<std::uint64_t>>> counts;
  std::uint64_t class_totals[2] = {0, 0};  // 0 = normal, 1 = bottleneck

  static NbModel train(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels,
                       std::vector<std::vector<double>> bin_edges);
  int bin_of(std::size_t feature, double x) const;
};

/// P(bottleneck | features).
double nb_classify(const NbModel& m, const std::vector<double>& features);

struct BMCNode {
  std::string id;
  std::string name;
  std::string parent;  // empty for the root
  double weight = 1.0;
  bool critical = false;          // weakest-link: min over children
  double level = 0.0;             // leaves carry measured levels in [0,1]
  std::vector<std::string> children;
};

using BmcTree = std::map<std::string, BMCNode>;

/// Builds child lists from parent references and validates tree shape.
/// Throws std::runtime_error on cycles, missing parents or multiple roots.
void link_tree(BmcTree& tree);

/// Internal level = weight-normalized mean of children, or min for critical
/// nodes. Returns the level per node id.
std::map<std::string, double> aggregate_levels(const BmcTree& tree);

struct OfflineMetricReport {
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> thresholds;
  std::map<std::string, double> weights;  // BMC id -> new weight

  static OfflineMetricReport parse(const std::string& text);  // JSON form
};

/// The Monitoring Tool: sample store, EWMA states, thresholds, BMC tree,
/// anomaly scores, and the off-line/on-line fusion hook.
class MonitoringService {
 public:
  explicit MonitoringService(config::AuditLog* audit = nullptr, std::size_t ring_cap = 100000);

  void add_threshold(Threshold t);
  void set_tree(BmcTree tree);
  BmcTree& tree() { return tree_; }

  /// Stores the sample, updates EWMA, returns every violated threshold.
  /// Throws std::invalid_argument on per-metric time regression.
  std::vector<ThresholdEvent> record_sample(const MetricSample& s);

  /// Off-line results reconfigure the on-line metrics. Unknown BMC ids are
  /// skipped with a warning entry in the returned list.
  std::vector<std::string> fuse_offline(const OfflineMetricReport& report);

  double anomaly_of(const std::string& metric_id) const;  // score of last sample, 0 if unseen
  std::map<std::string, double> anomaly_scores() const;
  const EwmaState* ewma(const std::string& metric_id) const;
  std::optional<double> last_value(const std::string& metric_id) const;
  const std::vector<ThresholdEvent>& events() const { return events_; }
  std::vector<ThresholdEvent> drain_events();

  /// ts,metric_id,value,ewma_mean,z,score rows for the stored ring.
  std::string export_csv() const;

  double lambda_default() const { return lambda_default_; }
  void set_lambda_default(double lambda) { lambda_default_ = lambda; }

 private:
  struct StoredSample {
    MetricSample sample;
    double ewma_mean = 0;
    double z = 0;
    double score = 0;
  };

  config::AuditLog* audit_;
  std::size_t ring_cap_;
  double lambda_default_ = 0.1;
  std::deque<StoredSample> ring_;
  std::vector<Threshold> thresholds_;
  std::map<std::string, EwmaState> ewma_;
  std::map<std::string, double> last_score_;
  std::map<std::string, double> last_value_;
  std::map<std::string, TimestampMs> last_ts_;
  std::vector<ThresholdEvent> events_;
  BmcTree tree_;
};

}  // namespace gemom::monitor

#endif
