#ifndef GEMOMBUS_SIM_SCENARIO_HPP
#define GEMOMBUS_SIM_SCENARIO_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gemom::sim {

struct NodeSpec {
  std::string id;
  std::string role;  // "broker" | "managerial"
};

struct Workload {
  int publishers = 1;
  int subscribers = 1;
  int topics = 1;
  double rate_mps = 10.0;  // aggregate publish rate
  double duration_s = 10.0;
  int payload_bytes = 64;
};

struct FaultEvent {
  double at_s = 0;
  std::string kind;  // broker_crash | link_drop | selective_drop | flood | credential_misuse
  std::string node;        // broker_crash
  std::string from, to;    // link_drop / selective_drop endpoints
  double rate = 0;         // link_drop probability or flood rate_mps
  std::string topic;       // selective_drop / flood
  std::string principal;   // credential_misuse
  double duration_s = 0;   // 0 = until the end of the run
};

/// A deterministic run description: the seed fixes every random choice.
struct Scenario {
  std::uint64_t seed = 1;
  std::vector<NodeSpec> topology;
  int replication_factor = 1;
  Workload workload;
  std::vector<FaultEvent> events;

  bool pseudonyms = false;
  bool secure_topics = false;
  bool sync_mirroring = false;
  double drain_s = 10.0;
  std::map<std::string, double> goal_overrides;

  /// Throws std::runtime_error listing every validation problem.
  static Scenario parse(const std::string& text);
  static Scenario parse_file(const std::string& path);
  std::string serialize() const;
};

}  // namespace gemom::sim

#endif
