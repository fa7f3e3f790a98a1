#pragma once

#include "posbandit/harness.hpp"
#include "posbandit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace posbandit {

struct ExperimentConfig {
  ProblemInstance instance;
  std::vector<PolicySpec> policies;
  std::int64_t horizon = 0;
  std::vector<std::uint64_t> seeds;  // run seeds, used as given
  std::vector<std::int64_t> checkpoints;  // empty: geometric
  std::filesystem::path output;      // results CSV; the summary goes next to it
};

// Throws std::invalid_argument on a malformed or invalid config. Relative
// instance_file and output paths resolve against `base_dir`.
//
// {
//   "instance": {...} | "instance_file": "path" |
//   "synthetic_instance": {"num_user_types", "num_arms", "num_positions", "seed",
//                          "mu_low", "mu_high", "concentration", "reward_model"},
//   "policies": [{"id": ..., "kind": "ranking" | "oracle" | ..., ...}],
//   "horizon": 100000,
//   "seeds": [1, 2, 3] | {"base_seed": 7, "count": 20},
//   "checkpoints": [t, ...] | {"kind": "geometric"},
//   "output": "results.csv"
// }
ExperimentConfig experiment_config_from_json(const nlohmann::json& json,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Overrides from the command line.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct ExperimentResult {
  std::vector<RegretTrace> traces;  // sorted by (policy_id, seed)
  nlohmann::json summary;
};

// Runs every (policy, seed) pair on `jobs` worker threads. Any failing run
// aborts the experiment with its exception.
ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1);

// Per-policy mean final regret, mean final optimal-action rate, sublinearity
// ratios at every checkpoint pair (t, 2t), and wall-clock totals.
nlohmann::json summarize(const ExperimentConfig& config, const std::vector<RegretTrace>& traces,
                         double total_wall_clock_s);

// Writes `csv` and `summary` atomically (temporary files renamed into place).
void write_results(const ExperimentResult& result, const std::filesystem::path& csv,
                   const std::filesystem::path& summary);

// results.csv -> results.summary.json
std::filesystem::path summary_path_for(const std::filesystem::path& csv);

}  // namespace posbandit
