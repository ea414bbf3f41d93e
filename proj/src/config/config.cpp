#include "gemombus/config/config.hpp"

#include <json.hpp>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gemom::config {

namespace {

using nlohmann::json;

const char* kKnownKeys[] = {
    "node.id",       "node.role",       "listen",          "kmf.address",
    "asm.period_ms", "asm.trigger_hi",  "asm.trigger_mid", "asm.release_hi",
    "asm.release_mid", "asm.lambda_t",  "asm.baseline_floor",
    "monitor.lambda", "monitor.ring",   "policy.file",     "keys.bits",
    "timeouts.suspect_ms", "timeouts.dead_ms", "timeouts.ack_ms", "audit.log",
};

std::string env_name(const std::string& key) {
  std::string out = "GEMOM_";
  for (char c : key) {
    out.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

// Layered string view of the configuration: CLI > env > file > (defaults in struct).
class Layers {
 public:
  Layers(const json& file, const std::map<std::string, std::string>& cli, bool use_env)
      : file_(file), cli_(cli), use_env_(use_env) {}

  std::optional<std::string> get(const std::string& key) const {
    if (auto it = cli_.find(key); it != cli_.end()) return it->second;
    if (use_env_) {
      if (const char* v = std::getenv(env_name(key).c_str()); v && *v) return std::string(v);
    }
    if (auto it = file_.find(key); it != file_.end()) {
      if (it->is_string()) return it->get<std::string>();
      return it->dump();
    }
    return std::nullopt;
  }

 private:
  const json& file_;
  const std::map<std::string, std::string>& cli_;
  bool use_env_;
};

}  // namespace

std::string ConfigError::join(const std::vector<std::string>& v) {
  std::ostringstream os;
  os << "configuration invalid (" << v.size() << " problem" << (v.size() == 1 ? "" : "s") << ")";
  for (const auto& s : v) os << "\n  - " << s;
  return os.str();
}

NodeConfig load_config(const std::string& path,
                       const std::map<std::string, std::string>& cli_overrides,
                       bool use_env) {
  std::vector<std::string> violations;
  json file = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) {
      throw ConfigError({"config file not readable: " + path});
    }
    try {
      in >> file;
    } catch (const json::exception& err) {
      throw ConfigError({std::string("config file parse error: ") + err.what()});
    }
    if (!file.is_object()) throw ConfigError({"config file must contain a JSON object"});
    for (auto it = file.begin(); it != file.end(); ++it) {
      bool known = false;
      for (const char* k : kKnownKeys) {
        if (it.key() == k) {
          known = true;
          break;
        }
      }
      if (!known) violations.push_back("unknown key: " + it.key());
    }
  }

  Layers layers(file, cli_overrides, use_env);
  NodeConfig cfg;

  const auto str = [&](const char* key, std::string& out) {
    if (auto v = layers.get(key)) out = *v;
  };
  const auto num = [&](const char* key, auto& out) {
    if (auto v = layers.get(key)) {
      try {
        out = static_cast<std::decay_t<decltype(out)>>(std::stod(*v));
      } catch (const std::exception&) {
        violations.push_back(std::string(key) + ": not a number: " + *v);
      }
    }
  };

  str("node.id", cfg.node_id);
  str("node.role", cfg.role);
  str("listen", cfg.listen);
  str("kmf.address", cfg.kmf_address);
  num("asm.period_ms", cfg.asm_params.period_ms);
  num("asm.trigger_hi", cfg.asm_params.trigger_hi);
  num("asm.trigger_mid", cfg.asm_params.trigger_mid);
  num("asm.release_hi", cfg.asm_params.release_hi);
  num("asm.release_mid", cfg.asm_params.release_mid);
  num("asm.lambda_t", cfg.asm_params.lambda_t);
  num("asm.baseline_floor", cfg.asm_params.baseline_floor);
  num("monitor.lambda", cfg.monitor_lambda);
  num("monitor.ring", cfg.monitor_ring);
  str("policy.file", cfg.policy_file);
  num("keys.bits", cfg.key_bits);
  num("timeouts.suspect_ms", cfg.suspect_timeout_ms);
  num("timeouts.dead_ms", cfg.dead_timeout_ms);
  num("timeouts.ack_ms", cfg.ack_timeout_ms);
  str("audit.log", cfg.audit_log);

  if (cfg.node_id.empty()) violations.push_back("node.id: must be non-empty");
  if (cfg.role != "operational" && cfg.role != "managerial") {
    violations.push_back("node.role: must be operational or managerial, got " + cfg.role);
  }
  if (cfg.asm_params.lambda_t <= 0.0 || cfg.asm_params.lambda_t > 1.0) {
    violations.push_back("asm.lambda_t: must lie in (0,1], got " +
                         std::to_string(cfg.asm_params.lambda_t));
  }
  if (cfg.asm_params.period_ms <= 0) violations.push_back("asm.period_ms: must be positive");
  if (!(cfg.asm_params.release_mid < cfg.asm_params.trigger_mid &&
        cfg.asm_params.trigger_mid <= cfg.asm_params.release_hi &&
        cfg.asm_params.release_hi < cfg.asm_params.trigger_hi)) {
    violations.push_back(
        "asm thresholds: need release_mid < trigger_mid <= release_hi < trigger_hi");
  }
  if (cfg.asm_params.baseline_floor < 0 || cfg.asm_params.baseline_floor > 5) {
    violations.push_back("asm.baseline_floor: must lie in 0..5");
  }
  if (cfg.monitor_lambda <= 0.0 || cfg.monitor_lambda > 1.0) {
    violations.push_back("monitor.lambda: must lie in (0,1], got " +
                         std::to_string(cfg.monitor_lambda));
  }
  if (cfg.key_bits != 128 && cfg.key_bits != 192 && cfg.key_bits != 256) {
    violations.push_back("keys.bits: must be 128, 192 or 256, got " +
                         std::to_string(cfg.key_bits));
  }
  if (cfg.suspect_timeout_ms <= 0 || cfg.dead_timeout_ms <= cfg.suspect_timeout_ms) {
    violations.push_back("timeouts: need 0 < suspect_ms < dead_ms");
  }
  if (cfg.ack_timeout_ms <= 0) violations.push_back("timeouts.ack_ms: must be positive");
  if (!cfg.policy_file.empty() && !std::filesystem::exists(cfg.policy_file)) {
    violations.push_back("policy.file: no such file: " + cfg.policy_file);
  }

  if (!violations.empty()) throw ConfigError(std::move(violations));
  return cfg;
}

}  // namespace gemom::config
