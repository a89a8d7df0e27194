#pragma once

// Run configuration. On disk it is JSON, either nested ({"algo": {"utd": 1}})
// or flat with dotted keys ({"algo.utd": 1}); both map onto the same flat key
// space. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quadlearn/env.hpp"
#include "quadlearn/rl.hpp"

namespace quadlearn {

struct RunConfig {
  EnvConfig env;
  rl::AlgoVariant algo;
  std::uint64_t seed = 0;
  std::int64_t total_steps = 20000;
  std::int64_t checkpoint_interval = 0;  // 0: only at the end
  std::int64_t replay_capacity = 100000;
  int eval_episodes = 5;
  std::string out_dir = "runs/default";

  void validate() const;
};

/// Control rate that goes with an algorithm: 40 Hz for CrossQ, 20 Hz otherwise.
double default_control_frequency(rl::Algo algo);
/// 50k steps for omnidirectional tracking, 20k otherwise.
std::int64_t default_total_steps(tasks::TaskVariant task);

/// Nested objects become dotted keys; arrays and scalars are leaves.
nlohmann::json flatten(const nlohmann::json& j);

/// All keys of a config in flat form.
nlohmann::json to_flat_json(const RunConfig& cfg);

/// Builds a config from flat keys. The algorithm preset, control rate and
/// step budget are derived from `algo.name`, `algo.utd` and `task.variant`
/// first; every other key then overrides a field. Throws ConfigError.
RunConfig config_from_flat(const nlohmann::json& flat);

/// Reads a JSON file (nested or flat) and applies `overrides` (flat) on top.
RunConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = {});

/// Hex SHA-256 of the canonical flat JSON without out_dir, total_steps and
/// checkpoint_interval, i.e. of everything that shapes the trajectory.
std::string config_digest(const RunConfig& cfg);

/// The canonical text hashed by config_digest.
std::string canonical_config_text(const RunConfig& cfg);

}  // namespace quadlearn
