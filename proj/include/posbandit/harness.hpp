#pragma once

#include "posbandit/model.hpp"
#include "posbandit/optimizer.hpp"
#include "posbandit/policies.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace posbandit {

struct OracleSolution {
  std::vector<Permutation> personalized_optima;  // one per user type
  std::vector<double> personalized_values;
  UtilityFunction utility = UtilityFunction::utilitarian();
  // Absent when only the personalized part was solved.
  std::optional<Permutation> equal_optimum;
  double equal_value = 0.0;
  // Gamma(sigma*) minus the best other permutation; nullopt when the space has
  // a single permutation.
  std::optional<double> gap;
};

// Per-type optima by sort-match on the ground truth. Cross-checked against
// brute force when the space fits under `cap`; throws std::logic_error on a
// mismatch.
OracleSolution solve_personalized_oracle(const ProblemInstance& instance,
                                         std::uint64_t cap = kDefaultEnumerationCap);

// Personalized optima plus the equal-treatment optimum of `utility` by
// exhaustive search. Throws EnumerationCapExceeded when the space exceeds cap.
OracleSolution solve_oracle(const ProblemInstance& instance, const UtilityFunction& utility,
                            std::uint64_t cap = kDefaultEnumerationCap);

nlohmann::json to_json(const OracleSolution& solution);

enum class RegretNotion { kPersonalized, kEqual };

// One named policy of an experiment.
struct PolicySpec {
  enum class Kind {
    kRanking,        // GreedyRank / UCBRank
    kOracle,         // plays the optimum of its regret notion
    kUniformRandom,  // uniformly random permutation
    kFixed,          // fixed permutation(s)
  };

  std::string id;
  Kind kind = Kind::kRanking;
  PolicyConfig ranking;
  // Regret notion and utility for non-ranking kinds. Ranking policies use
  // their own treatment and utility.
  RegretNotion regret = RegretNotion::kPersonalized;
  UtilityFunction regret_utility = UtilityFunction::utilitarian();
  std::vector<Permutation> fixed;  // kFixed: one shared or one per type
};

RegretNotion regret_notion(const PolicySpec& spec);
UtilityFunction regret_utility(const PolicySpec& spec);

PolicySpec policy_spec_from_json(const nlohmann::json& json);
nlohmann::json to_json(const PolicySpec& spec);

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const ProblemInstance& instance,
                                    const OracleSolution& oracle, std::uint64_t seed);

struct Checkpoint {
  std::int64_t t = 0;
  double cumulative_regret = 0.0;
  double cumulative_reward = 0.0;
  double wall_clock_s = 0.0;
  double optimal_action_rate = 0.0;  // over rounds 1..t
  std::int64_t optimal_actions = 0;
};

struct RegretTrace {
  std::string policy_id;
  std::uint64_t seed = 0;
  std::vector<Checkpoint> checkpoints;
  std::int64_t init_rounds = 0;  // length of the initialization phase, 0 if none

  // Checkpoint at exactly t, if scheduled.
  const Checkpoint* at(std::int64_t t) const;
};

// Powers of two below the horizon, then the horizon itself.
std::vector<std::int64_t> geometric_checkpoints(std::int64_t horizon);
// Sorted, deduplicated, clipped to [1, horizon], horizon appended.
std::vector<std::int64_t> normalize_checkpoints(std::vector<std::int64_t> checkpoints,
                                                std::int64_t horizon);

// Seed of run `run_index` in a sweep keyed by `base_seed`.
std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t run_index);

// One seeded run of the interaction protocol. `oracle` must hold the optimum
// for the policy's regret notion; it is solved on the fly when null.
RegretTrace run(const ProblemInstance& instance, const PolicySpec& spec, std::int64_t horizon,
                std::uint64_t seed, const std::vector<std::int64_t>& checkpoints,
                const OracleSolution* oracle = nullptr);

struct SublinearityStats {
  double mean_ratio = 0.0;  // NaN when every run is excluded
  std::vector<double> ratios;
  int included = 0;
  int excluded = 0;  // runs with R(t1) = 0
};

// Mean over runs of R(t2) / R(t1). Throws std::invalid_argument when a trace
// lacks either checkpoint.
SublinearityStats sublinearity_check(std::span<const RegretTrace> traces, std::int64_t t1,
                                     std::int64_t t2);

// Results CSV, one row per checkpoint, rows sorted by (policy_id, seed, t).
void write_csv(std::ostream& out, std::vector<const RegretTrace*> traces);
void write_csv(std::ostream& out, std::span<const RegretTrace> traces);

}  // namespace posbandit
