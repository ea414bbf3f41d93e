#include "gemombus/monitor/monitor.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gemom::monitor {

namespace {

constexpr double kZEps = 1e-6;

bool metric_matches(const std::string& threshold_id, const std::string& metric_id) {
  if (threshold_id.size() >= 2 && threshold_id.ends_with(".*")) {
    const std::string_view prefix(threshold_id.data(), threshold_id.size() - 1);
    return std::string_view(metric_id).starts_with(prefix);
  }
  return threshold_id == metric_id;
}

}  // namespace

std::string to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warn: return "warn";
    case Severity::Critical: return "critical";
  }
  return "warn";
}

std::pair<EwmaState, double> ewma_update(EwmaState st, double x) {
  if (st.lambda <= 0.0 || st.lambda > 1.0) {
    throw std::invalid_argument("ewma lambda must be in (0,1]");
  }
  double z = 0.0;
  if (st.n == 0) {
    st.mean = x;
    st.var = 0.0;
  } else {
    const double resid = x - st.mean;
    z = resid / std::max(std::sqrt(st.var), kZEps);
    st.mean = st.lambda * x + (1.0 - st.lambda) * st.mean;
    st.var = st.lambda * resid * resid + (1.0 - st.lambda) * st.var;
  }
  ++st.n;
  return {st, z};
}

double anomaly_score(double z, double z_max) {
  const double s = std::abs(z) / z_max;
  return s > 1.0 ? 1.0 : s;
}

MarkovModel MarkovModel::train(const std::vector<int>& trace, int bins) {
  if (bins <= 0) throw std::invalid_argument("bins must be positive");
  std::vector<std::vector<double>> counts(bins, std::vector<double>(bins, 0.0));
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    const int a = trace[i];
    const int b = trace[i + 1];
    if (a < 0 || a >= bins || b < 0 || b >= bins) {
      throw std::invalid_argument("trace bin out of range");
    }
    counts[a][b] += 1.0;
  }
  for (auto& row : counts) {
    double total = 0.0;
    for (double c : row) total += c;
    if (total == 0.0) {
      // Unvisited state: no evidence either way, stay uniform.
      for (double& c : row) c = 1.0 / bins;
    } else {
      for (double& c : row) c /= total;
    }
  }
  return MarkovModel{std::move(counts)};
}

MarkovPrediction markov_predict(const MarkovModel& m, int current_bin) {
  if (current_bin < 0 || current_bin >= static_cast<int>(m.transitions.size())) {
    throw std::out_of_range("current bin outside model");
  }
  const auto& row = m.transitions[current_bin];
  double total = 0.0;
  for (double p : row) {
    if (p < 0.0) throw std::invalid_argument("negative transition probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("transition row does not sum to 1");
  }
  MarkovPrediction out;
  out.distribution = row;
  out.point = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i) {
    if (row[i] > row[out.point]) out.point = i;  // strict: ties keep the lowest bin
  }
  return out;
}

int NbModel::bin_of(std::size_t feature, double x) const {
  const auto& edges = bin_edges[feature];
  int bin = 0;
  while (bin < static_cast<int>(edges.size()) && x >= edges[bin]) ++bin;
  return bin;  // clamps out-of-range values to the edge bins by construction
}

NbModel NbModel::train(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels,
                       std::vector<std::vector<double>> bin_edges) {
  if (features.size() != labels.size()) {
    throw std::invalid_argument("features/labels size mismatch");
  }
  NbModel m;
  m.bin_edges = std::move(bin_edges);
  const std::size_t n_features = m.bin_edges.size();
  m.counts.assign(2, {});
  for (int c = 0; c < 2; ++c) {
    m.counts[c].resize(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
      m.counts[c][f].assign(m.bin_edges[f].size() + 1, 0);
    }
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int label = labels[i];
    if (label != 0 && label != 1) throw std::invalid_argument("labels must be 0 or 1");
    if (features[i].size() != n_features) {
      throw std::invalid_argument("feature vector size mismatch");
    }
    ++m.class_totals[label];
    for (std::size_t f = 0; f < n_features; ++f) {
      ++m.counts[label][f][m.bin_of(f, features[i][f])];
    }
  }
  return m;
}

double nb_classify(const NbModel& m, const std::vector<double>& features) {
  if (features.size() != m.bin_edges.size()) {
    throw std::invalid_argument("feature count does not match model");
  }
  const double total = static_cast<double>(m.class_totals[0] + m.class_totals[1]);
  // Add-one smoothing throughout keeps every factor inside (0,1).
  double like[2];
  for (int c = 0; c < 2; ++c) {
    like[c] = (static_cast<double>(m.class_totals[c]) + 1.0) / (total + 2.0);
    for (std::size_t f = 0; f < features.size(); ++f) {
      const int bin = m.bin_of(f, features[f]);
      const double bins = static_cast<double>(m.counts[c][f].size());
      like[c] *= (static_cast<double>(m.counts[c][f][bin]) + 1.0) /
                 (static_cast<double>(m.class_totals[c]) + bins);
    }
  }
  return like[1] / (like[0] + like[1]);
}

void link_tree(BmcTree& tree) {
  for (auto& [id, node] : tree) node.children.clear();
  std::string root;
  for (auto& [id, node] : tree) {
    if (node.weight <= 0) throw std::runtime_error("BMC weight must be > 0: " + id);
    if (node.parent.empty()) {
      if (!root.empty()) throw std::runtime_error("multiple BMC roots");
      root = id;
      continue;
    }
    auto parent = tree.find(node.parent);
    if (parent == tree.end()) throw std::runtime_error("missing BMC parent: " + node.parent);
    parent->second.children.push_back(id);
  }
  if (root.empty() && !tree.empty()) throw std::runtime_error("no BMC root");
}

namespace {

double aggregate_node(const BmcTree& tree, const std::string& id,
                      std::map<std::string, double>& out,
                      std::map<std::string, int>& visiting) {
  if (auto it = out.find(id); it != out.end()) return it->second;
  if (visiting[id]++ > 0) throw std::runtime_error("cycle in BMC tree at " + id);
  const BMCNode& node = tree.at(id);
  double level;
  if (node.children.empty()) {
    level = node.level;
  } else if (node.critical) {
    level = 1.0;
    for (const auto& c : node.children) {
      level = std::min(level, aggregate_node(tree, c, out, visiting));
    }
  } else {
    double wsum = 0.0;
    double acc = 0.0;
    for (const auto& c : node.children) wsum += tree.at(c).weight;
    for (const auto& c : node.children) {
      acc += tree.at(c).weight / wsum * aggregate_node(tree, c, out, visiting);
    }
    level = acc;
  }
  out[id] = level;
  return level;
}

}  // namespace

std::map<std::string, double> aggregate_levels(const BmcTree& tree) {
  std::map<std::string, double> out;
  std::map<std::string, int> visiting;
  for (const auto& [id, node] : tree) aggregate_node(tree, id, out, visiting);
  return out;
}

OfflineMetricReport OfflineMetricReport::parse(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  OfflineMetricReport r;
  if (j.contains("thresholds")) {
    for (auto it = j["thresholds"].begin(); it != j["thresholds"].end(); ++it) {
      std::optional<double> lo, hi;
      if (it.value().contains("lo") && !it.value()["lo"].is_null()) {
        lo = it.value()["lo"].get<double>();
      }
      if (it.value().contains("hi") && !it.value()["hi"].is_null()) {
        hi = it.value()["hi"].get<double>();
      }
      r.thresholds[it.key()] = {lo, hi};
    }
  }
  if (j.contains("weights")) {
    for (auto it = j["weights"].begin(); it != j["weights"].end(); ++it) {
      r.weights[it.key()] = it.value().get<double>();
    }
  }
  return r;
}

MonitoringService::MonitoringService(config::AuditLog* audit, std::size_t ring_cap)
    : audit_(audit), ring_cap_(ring_cap) {}

void MonitoringService::add_threshold(Threshold t) {
  if (t.lo && t.hi && *t.lo >= *t.hi) throw std::invalid_argument("threshold lo >= hi");
  thresholds_.push_back(std::move(t));
}

void MonitoringService::set_tree(BmcTree tree) {
  link_tree(tree);
  tree_ = std::move(tree);
}

std::vector<ThresholdEvent> MonitoringService::record_sample(const MetricSample& s) {
  if (auto it = last_ts_.find(s.metric_id); it != last_ts_.end() && s.at < it->second) {
    throw std::invalid_argument("time regression for metric " + s.metric_id);
  }
  last_ts_[s.metric_id] = s.at;
  last_value_[s.metric_id] = s.value;

  auto [state_it, inserted] = ewma_.try_emplace(s.metric_id);
  if (inserted) {
    state_it->second.metric_id = s.metric_id;
    state_it->second.lambda = lambda_default_;
  }
  auto [next, z] = ewma_update(state_it->second, s.value);
  state_it->second = next;
  const double score = anomaly_score(z);
  last_score_[s.metric_id] = score;

  ring_.push_back({s, next.mean, z, score});
  if (ring_.size() > ring_cap_) ring_.pop_front();

  std::vector<ThresholdEvent> fired;
  for (const auto& t : thresholds_) {
    if (!metric_matches(t.metric_id, s.metric_id)) continue;
    if (t.hi && s.value > *t.hi) {
      fired.push_back({s.metric_id, t.severity, s.value, *t.hi, s.at});
    } else if (t.lo && s.value < *t.lo) {
      fired.push_back({s.metric_id, t.severity, s.value, *t.lo, s.at});
    }
  }
  for (const auto& ev : fired) events_.push_back(ev);
  return fired;
}

std::vector<std::string> MonitoringService::fuse_offline(const OfflineMetricReport& report) {
  std::vector<std::string> warnings;
  for (const auto& [metric_id, bounds] : report.thresholds) {
    bool known = false;
    for (auto& t : thresholds_) {
      if (t.metric_id != metric_id) continue;
      known = true;
      std::map<std::string, std::string> detail{{"event", "threshold-updated"},
                                                {"metric", metric_id}};
      auto fmt = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("none");
      };
      detail["old_lo"] = fmt(t.lo);
      detail["old_hi"] = fmt(t.hi);
      t.lo = bounds.first;
      t.hi = bounds.second;
      detail["new_lo"] = fmt(t.lo);
      detail["new_hi"] = fmt(t.hi);
      if (audit_) audit_->write(config::AuditCategory::Adapt, "monitor", detail);
    }
    if (!known) warnings.push_back("unknown metric id: " + metric_id);
  }
  for (const auto& [bmc_id, weight] : report.weights) {
    auto it = tree_.find(bmc_id);
    if (it == tree_.end()) {
      warnings.push_back("unknown BMC id: " + bmc_id);
      continue;
    }
    if (weight <= 0) {
      warnings.push_back("non-positive weight for " + bmc_id);
      continue;
    }
    if (audit_) {
      audit_->write(config::AuditCategory::Adapt, "monitor",
                    {{"event", "bmc-weight-updated"},
                     {"bmc", bmc_id},
                     {"old", std::to_string(it->second.weight)},
                     {"new", std::to_string(weight)}});
    }
    it->second.weight = weight;
  }
  return warnings;
}

double MonitoringService::anomaly_of(const std::string& metric_id) const {
  auto it = last_score_.find(metric_id);
  return it == last_score_.end() ? 0.0 : it->second;
}

std::map<std::string, double> MonitoringService::anomaly_scores() const { return last_score_; }

const EwmaState* MonitoringService::ewma(const std::string& metric_id) const {
  auto it = ewma_.find(metric_id);
  return it == ewma_.end() ? nullptr : &it->second;
}

std::optional<double> MonitoringService::last_value(const std::string& metric_id) const {
  auto it = last_value_.find(metric_id);
  if (it == last_value_.end()) return std::nullopt;
  return it->second;
}

std::vector<ThresholdEvent> MonitoringService::drain_events() {
  std::vector<ThresholdEvent> out;
  out.swap(events_);
  return out;
}

std::string MonitoringService::export_csv() const {
  std::ostringstream os;
  os << "ts,metric_id,value,ewma_mean,z,score\n";
  for (const auto& row : ring_) {
    os << row.sample.at << ',' << row.sample.metric_id << ',' << row.sample.value << ','
       << row.ewma_mean << ',' << row.z << ',' << row.score << '\n';
  }
  return os.str();
}

}  // namespace gemom::monitor
