#pragma once

#include "posbandit/environment.hpp"
#include "posbandit/estimators.hpp"
#include "posbandit/model.hpp"
#include "posbandit/optimizer.hpp"
#include "posbandit/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

namespace posbandit {

struct PolicyConfig {
  enum class Family { kGreedy, kUcb };
  enum class Treatment { kPersonalized, kEqual };

  Family family = Family::kUcb;
  // epsilon scale for GreedyRank, confidence scale a for UCBRank.
  double scale = 1.0;
  Treatment treatment = Treatment::kPersonalized;
  UtilityFunction utility = UtilityFunction::utilitarian();  // equal treatment only
  OptimizerConfig optimizer;                                 // equal treatment only
  // Pool every user type into one (the single-type baseline).
  bool baseline_single_type = false;
  EffectivePullRule effective_pulls = EffectivePullRule::kIncremental;

  static PolicyConfig greedy_personalized(double epsilon_scale);
  static PolicyConfig ucb_personalized(double confidence_scale);
  static PolicyConfig greedy_equal(double epsilon_scale, UtilityFunction utility,
                                   OptimizerConfig optimizer = {});
  static PolicyConfig ucb_equal(double confidence_scale, UtilityFunction utility,
                                OptimizerConfig optimizer = {});
  static PolicyConfig single_type_baseline(double confidence_scale);
};

void validate(const PolicyConfig& config);
nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const nlohmann::json& json);

// Mutable per-run policy state. Single writer.
struct PolicyState {
  PolicyState(int num_user_types, int num_arms, int num_positions, std::uint64_t seed,
              EffectivePullRule rule = EffectivePullRule::kIncremental);

  LearnerState learner;
  int explore_cursor = 1;  // 1-indexed, always in [1, M]
  bool init_done = false;
  std::int64_t init_end = 0;  // last round of the initialization phase
  RngStream rng;
  Permutation last_equal_choice;  // incumbent for the next exact search
};

// Initialization display for round t: position k (1-indexed) shows arm
// ((t + k) mod M) + 1 (1-indexed). K consecutive residues are distinct.
Permutation init_permutation(std::int64_t t, int num_arms, int num_positions);

// GreedyRank exploration display for cursor I in [1, M]: position k (1-indexed)
// shows arm ((I + k) mod M) + 1.
Permutation explore_permutation(int cursor, int num_arms, int num_positions);

// Indices of `values` in decreasing order, ties to the lower index; only the
// first `count` entries are sorted.
template <typename Values>
std::vector<int> decreasing_order(const Eigen::MatrixBase<Values>& values, int count) {
  std::vector<int> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  const auto first = order.begin();
  std::partial_sort(first, first + count, order.end(), [&values](int a, int b) {
    return values(a) > values(b) || (values(a) == values(b) && a < b);
  });
  order.resize(static_cast<std::size_t>(count));
  return order;
}

// Sort-match ranking: the a-th best arm by score goes to the a-th most
// observed position, for a = 1..K.
template <typename Prefs, typename Scores>
Permutation personalized_rank(const Eigen::MatrixBase<Prefs>& position_prefs,
                              const Eigen::MatrixBase<Scores>& arm_scores, int num_positions) {
  const auto arms = decreasing_order(arm_scores, num_positions);
  const auto positions = decreasing_order(position_prefs, num_positions);
  std::vector<int> slots(static_cast<std::size_t>(num_positions));
  for (std::size_t a = 0; a < arms.size(); ++a) slots[static_cast<std::size_t>(positions[a])] = arms[a];
  return Permutation(std::move(slots));
}

// Exploration probability of GreedyRank at round t:
// min(1, scale * t^-1/2), times N under equal treatment.
double greedy_head_rate(const PolicyConfig& config, int num_user_types, std::int64_t t);

// mu_hat_{i,j} + a ln t / N_{i,j} for every arm j. Throws std::logic_error if
// some N_{i,j} is zero.
Eigen::VectorXd ucb_arm_scores(const Estimates& estimates, int user_type, double confidence_scale,
                               std::int64_t t);

// Estimated CUF plus a per-arm additive bonus:
//   sum_i lambda_i f(sum_k rho_{i,k} mu_{i,perm[k]}) + sum_k bonus[perm[k]].
// upper_bound(prefix) bounds every completion of a slot prefix. f is concave
// and nondecreasing, so each f is replaced by its tangent at a reference value
// (the user value under `reference`, or the best value a type can reach), and
// the linearized remainder is solved exactly as an assignment of the free arms
// to the free positions. Nash tangents are first moved toward the optimum of the
// relaxation over the hull of rankings. The bound is tight for utilitarian f.
class CufObjective {
 public:
  CufObjective(const Estimates& estimates, UtilityFunction utility, Eigen::VectorXd arm_bonus,
               const Permutation* reference = nullptr);

  double operator()(const Permutation& perm) const;
  double upper_bound(std::span<const int> prefix) const;
  // Stops refining once the bound falls below threshold.
  double upper_bound(std::span<const int> prefix, double threshold) const;
  // Best ranking met while fitting the tangents.
  Permutation relaxed_choice() const;

 private:
  void prepare_bounds() const;

  const Estimates& estimates_;
  UtilityFunction utility_;
  Eigen::VectorXd arm_bonus_;
  Permutation reference_;
  // Filled on the first upper_bound() call.
  mutable bool bounds_ready_ = false;
  static constexpr int kFrankWolfeSteps = 12;
  mutable Permutation best_vertex_;
  mutable Eigen::VectorXd tangent_point_;   // per type
  mutable Eigen::VectorXd tangent_slope_;   // per type
  // gain_(j, k): linearized gain of arm j at position k, bonus included.
  mutable Eigen::MatrixXd gain_;
  // remaining_(i, d): best value type i can collect from positions d.. with any arms.
  mutable Eigen::MatrixXd remaining_;
  mutable Eigen::VectorXd bonus_tail_;
  mutable Eigen::MatrixXd scratch_;
  mutable Eigen::VectorXd partial_;
  mutable std::vector<char> taken_;
  mutable std::vector<int> free_arms_;
};

// sum_i a ln t / N_{i,j} for every arm j.
Eigen::VectorXd ucb_collective_bonus(const Estimates& estimates, double confidence_scale,
                                     std::int64_t t);

// Maximizes `objective` with the configured optimizer.
Permutation optimize_equal_treatment(PolicyState& state, const PolicyConfig& config,
                                     const CufObjective& objective, std::int64_t t);

// GreedyRank after initialization: explore with probability
// greedy_head_rate, otherwise exploit the estimates (sort-match for the
// arriving type, or the CUF argmax under equal treatment).
Permutation greedy_decide(PolicyState& state, const PolicyConfig& config, const Estimates& estimates,
                          int user_type, std::int64_t t);

// UCBRank after initialization: personalized sort-match on optimistic arm
// scores, or the CUF argmax plus the summed per-arm bonus.
Permutation ucb_decide(PolicyState& state, const PolicyConfig& config, const Estimates& estimates,
                       int user_type, std::int64_t t);

// Personalized UCBRank on counters pooled over user types. `pooled` are the
// estimates of a single-type learner.
Permutation baseline_decide(PolicyState& state, const PolicyConfig& config, const Estimates& pooled,
                            std::int64_t t);

class Policy {
 public:
  virtual ~Policy() = default;
  // Ranking for round t >= 1, after user_type arrived.
  virtual Permutation decide(int user_type, std::int64_t t) = 0;
  virtual void observe(int user_type, const Permutation& shown, const Feedback& feedback) = 0;
};

// GreedyRank / UCBRank including the initialization phase.
class RankingPolicy final : public Policy {
 public:
  RankingPolicy(PolicyConfig config, int num_user_types, int num_arms, int num_positions,
                std::uint64_t seed);

  Permutation decide(int user_type, std::int64_t t) override;
  void observe(int user_type, const Permutation& shown, const Feedback& feedback) override;

  const PolicyState& state() const { return state_; }
  const PolicyConfig& config() const { return config_; }

 private:
  PolicyConfig config_;
  int num_arms_;
  int num_positions_;
  PolicyState state_;
  Estimates estimates_;
};

// Plays a fixed permutation per user type (one shared entry means the same
// ranking for everyone).
class FixedPolicy final : public Policy {
 public:
  explicit FixedPolicy(std::vector<Permutation> per_type);
  Permutation decide(int user_type, std::int64_t t) override;
  void observe(int, const Permutation&, const Feedback&) override {}

 private:
  std::vector<Permutation> per_type_;
};

// Uniformly random K-permutation every round.
class UniformRandomPolicy final : public Policy {
 public:
  UniformRandomPolicy(int num_arms, int num_positions, std::uint64_t seed);
  Permutation decide(int user_type, std::int64_t t) override;
  void observe(int, const Permutation&, const Feedback&) override {}

 private:
  int num_arms_;
  int num_positions_;
  RngStream rng_;
};

}  // namespace posbandit
