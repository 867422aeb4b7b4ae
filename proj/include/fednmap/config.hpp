#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fednmap/simulator.hpp"

namespace fednmap {

/// Anything wrong with a config file or override: unknown keys, bad types,
/// parse errors (message carries line/column for the latter).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadedConfig {
  RunSpec spec;
  // cmd_sweep grid; defaults echo the fed block when absent.
  std::vector<int> sweep_ns;
  std::vector<int> sweep_qs;
  std::vector<std::uint64_t> sweep_seeds;
};

/// Parses and validates the whole config tree. Unknown keys are errors.
LoadedConfig load_config_json(const nlohmann::json& j);

LoadedConfig load_config_file(const std::string& path);

/// Applies one dotted `key=value` override (value parsed as JSON when it is
/// valid JSON, kept as a string otherwise) onto the raw tree.
void apply_override(nlohmann::json& j, const std::string& key_eq_value);

/// Regularizer from the config's `regularizer` table {kind, nu1, nu2, lo, hi}.
Regularizer regularizer_from_json(const nlohmann::json& j,
                                  const std::string& prefix = "regularizer");

}  // namespace fednmap
