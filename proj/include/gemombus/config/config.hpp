#ifndef GEMOMBUS_CONFIG_CONFIG_HPP
#define GEMOMBUS_CONFIG_CONFIG_HPP

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemombus/adapt/adapt.hpp"
#include "gemombus/util/clock.hpp"

namespace gemom::config {

/// All validation failures at once, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v);
  std::vector<std::string> violations_;
};

struct NodeConfig {
  std::string node_id = "node1";
  std::string role = "operational";  // operational | managerial
  std::string listen = "127.0.0.1:7700";
  std::string kmf_address = "127.0.0.1:7701";
  adapt::AdaptConfig asm_params;
  double monitor_lambda = 0.1;
  std::size_t monitor_ring = 100000;
  std::string policy_file;  // optional; must exist when set
  int key_bits = 128;
  TimestampMs suspect_timeout_ms = 5000;
  TimestampMs dead_timeout_ms = 15000;
  TimestampMs ack_timeout_ms = 2000;
  std::string audit_log;  // optional path
};

/// Flat JSON object with dotted keys ("asm.lambda_t": 0.3, ...).
/// Precedence: CLI overrides > environment (GEMOM_ASM_LAMBDA_T style) > file
/// > built-in defaults. Pass an empty path to skip the file layer.
NodeConfig load_config(const std::string& path,
                       const std::map<std::string, std::string>& cli_overrides = {},
                       bool use_env = true);

}  // namespace gemom::config

#endif
