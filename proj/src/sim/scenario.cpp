#include "gemombus/sim/scenario.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gemom::sim {

namespace {

using nlohmann::json;

const std::set<std::string> kFaultKinds = {"broker_crash", "link_drop", "selective_drop",
                                           "flood", "credential_misuse"};

[[noreturn]] void fail_all(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid scenario (" << problems.size() << " problem"
     << (problems.size() == 1 ? "" : "s") << ")";
  for (const auto& p : problems) os << "\n  - " << p;
  throw std::runtime_error(os.str());
}

}  // namespace

Scenario Scenario::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw std::runtime_error(std::string("scenario parse error: ") + err.what());
  }

  Scenario s;
  std::vector<std::string> problems;
  try {
    s.seed = j.value("seed", std::uint64_t{1});
    for (const auto& n : j.value("topology", json::array())) {
      NodeSpec spec;
      spec.id = n.at("id").get<std::string>();
      spec.role = n.value("role", "broker");
      s.topology.push_back(std::move(spec));
    }
    s.replication_factor = j.value("replication_factor", 1);
    if (j.contains("workload")) {
      const json& w = j["workload"];
      s.workload.publishers = w.value("publishers", 1);
      s.workload.subscribers = w.value("subscribers", 1);
      s.workload.topics = w.value("topics", 1);
      s.workload.rate_mps = w.value("rate_mps", 10.0);
      s.workload.duration_s = w.value("duration_s", 10.0);
      s.workload.payload_bytes = w.value("payload_bytes", 64);
    }
    for (const auto& e : j.value("events", json::array())) {
      FaultEvent ev;
      ev.at_s = e.at("at_s").get<double>();
      ev.kind = e.at("kind").get<std::string>();
      ev.node = e.value("node", "");
      ev.from = e.value("from", "");
      ev.to = e.value("to", "");
      ev.rate = e.value("rate", 0.0);
      ev.topic = e.value("topic", "");
      ev.principal = e.value("principal", "");
      ev.duration_s = e.value("duration_s", 0.0);
      s.events.push_back(std::move(ev));
    }
    s.pseudonyms = j.value("pseudonyms", false);
    s.secure_topics = j.value("secure_topics", false);
    s.sync_mirroring = j.value("sync_mirroring", false);
    s.drain_s = j.value("drain_s", 10.0);
    if (j.contains("goals")) {
      for (auto it = j["goals"].begin(); it != j["goals"].end(); ++it) {
        s.goal_overrides[it.key()] = it.value().get<double>();
      }
    }
  } catch (const json::exception& err) {
    throw std::runtime_error(std::string("scenario field error: ") + err.what());
  }

  // Validation: collect everything that is wrong, not just the first issue.
  std::set<std::string> broker_ids;
  bool has_managerial = false;
  std::set<std::string> all_ids;
  for (const auto& n : s.topology) {
    if (n.id.empty()) problems.push_back("topology: empty node id");
    if (!all_ids.insert(n.id).second) problems.push_back("topology: duplicate id " + n.id);
    if (n.role == "broker") {
      broker_ids.insert(n.id);
    } else if (n.role == "managerial") {
      has_managerial = true;
    } else {
      problems.push_back("topology: unknown role " + n.role + " for " + n.id);
    }
  }
  if (broker_ids.empty()) problems.push_back("topology: at least one broker required");
  if (!has_managerial) problems.push_back("topology: a managerial node is required");
  if (s.replication_factor < 1) problems.push_back("replication_factor: must be >= 1");
  if (s.workload.publishers < 0 || s.workload.subscribers < 0) {
    problems.push_back("workload: publisher/subscriber counts must be >= 0");
  }
  if (s.workload.topics < 1) problems.push_back("workload.topics: must be >= 1");
  if (s.workload.rate_mps < 0) problems.push_back("workload.rate_mps: must be >= 0");
  if (s.workload.duration_s <= 0) problems.push_back("workload.duration_s: must be > 0");
  if (s.workload.payload_bytes < 0) problems.push_back("workload.payload_bytes: must be >= 0");
  if (s.drain_s < 0) problems.push_back("drain_s: must be >= 0");

  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const FaultEvent& e = s.events[i];
    const std::string tag = "events[" + std::to_string(i) + "]: ";
    if (kFaultKinds.count(e.kind) == 0) {
      problems.push_back(tag + "unknown kind " + e.kind);
      continue;
    }
    if (e.at_s < 0 || e.at_s > s.workload.duration_s) {
      problems.push_back(tag + "at_s outside run duration");
    }
    if (e.kind == "broker_crash" && broker_ids.count(e.node) == 0) {
      problems.push_back(tag + "broker_crash needs a broker node id");
    }
    if (e.kind == "link_drop" && (e.from.empty() || e.to.empty())) {
      problems.push_back(tag + "link_drop needs from/to");
    }
    if (e.kind == "link_drop" && (e.rate < 0 || e.rate > 1)) {
      problems.push_back(tag + "link_drop rate must lie in [0,1]");
    }
    if (e.kind == "selective_drop" && e.topic.empty()) {
      problems.push_back(tag + "selective_drop needs a topic");
    }
    if (e.kind == "flood" && (e.topic.empty() || e.rate <= 0)) {
      problems.push_back(tag + "flood needs a topic and a positive rate");
    }
    if (e.kind == "credential_misuse" && e.principal.empty()) {
      problems.push_back(tag + "credential_misuse needs a principal");
    }
  }

  if (!problems.empty()) fail_all(problems);
  return s;
}

Scenario Scenario::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Scenario::serialize() const {
  json j;
  j["seed"] = seed;
  j["topology"] = json::array();
  for (const auto& n : topology) j["topology"].push_back({{"id", n.id}, {"role", n.role}});
  j["replication_factor"] = replication_factor;
  j["workload"] = {{"publishers", workload.publishers},
                   {"subscribers", workload.subscribers},
                   {"topics", workload.topics},
                   {"rate_mps", workload.rate_mps},
                   {"duration_s", workload.duration_s},
                   {"payload_bytes", workload.payload_bytes}};
  j["events"] = json::array();
  for (const auto& e : events) {
    json ej = {{"at_s", e.at_s}, {"kind", e.kind}};
    if (!e.node.empty()) ej["node"] = e.node;
    if (!e.from.empty()) ej["from"] = e.from;
    if (!e.to.empty()) ej["to"] = e.to;
    if (e.rate != 0) ej["rate"] = e.rate;
    if (!e.topic.empty()) ej["topic"] = e.topic;
    if (!e.principal.empty()) ej["principal"] = e.principal;
    if (e.duration_s != 0) ej["duration_s"] = e.duration_s;
    j["events"].push_back(std::move(ej));
  }
  j["pseudonyms"] = pseudonyms;
  j["secure_topics"] = secure_topics;
  j["sync_mirroring"] = sync_mirroring;
  j["drain_s"] = drain_s;
  if (!goal_overrides.empty()) {
    j["goals"] = json::object();
    for (const auto& [k, v] : goal_overrides) j["goals"][k] = v;
  }
  return j.dump(2);
}

}  // namespace gemom::sim
