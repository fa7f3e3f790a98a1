#pragma once

#include "posbandit/environment.hpp"
#include "posbandit/model.hpp"

#include <Eigen/Dense>

#include <cstdint>

#include <json.hpp>

namespace posbandit {

// Dense N x M x K counter tensor stored as an (N*M) x K row-major matrix, so
// that the K counters of one (type, arm) pair are one contiguous row.
class CountTensor {
 public:
  using Storage = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  CountTensor() = default;
  CountTensor(int num_user_types, int num_arms, int num_positions)
      : num_user_types_(num_user_types),
        num_arms_(num_arms),
        data_(Storage::Zero(num_user_types * num_arms, num_positions)) {}

  int num_user_types() const { return num_user_types_; }
  int num_arms() const { return num_arms_; }
  int num_positions() const { return static_cast<int>(data_.cols()); }

  std::int64_t operator()(int i, int j, int k) const { return data_(i * num_arms_ + j, k); }
  std::int64_t& operator()(int i, int j, int k) { return data_(i * num_arms_ + j, k); }

  // The K counters of (i, j).
  auto cells(int i, int j) const { return data_.row(i * num_arms_ + j); }
  // The M x K block of user type i.
  auto type_block(int i) const { return data_.middleRows(i * num_arms_, num_arms_); }

  const Storage& data() const { return data_; }
  Storage& data() { return data_; }

  friend bool operator==(const CountTensor& a, const CountTensor& b) {
    return a.num_user_types_ == b.num_user_types_ && a.num_arms_ == b.num_arms_ &&
           a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  int num_user_types_ = 0;
  int num_arms_ = 0;
  Storage data_;
};

// How the effective pull counter N_{i,j} is maintained.
enum class EffectivePullRule {
  // N_{i,j} += rho_hat_{i, position of j} at pull time, rho_hat taken before
  // this round's refresh.
  kIncremental,
  // N_{i,j} = sum_k T_{i,j,k} * rho_hat_{i,k}, recomputed with the current
  // rho_hat after every refresh.
  kRecomputed,
};

// Position-preference normalization for one user type. `ratios` is M x K with the
// click/impression ratio of each (arm, position). Each arm's row is scaled to
// sum to one and the rows are averaged. Rows with a non-finite entry or a
// non-positive sum are skipped; if no row is usable the result is uniform.
Eigen::RowVectorXd normalized_position_profile(const Eigen::Ref<const Eigen::ArrayXXd>& ratios);

// All observable counters of a learner, plus the cached position-preference
// estimate. Single writer.
class LearnerState {
 public:
  LearnerState(int num_user_types, int num_arms, int num_positions,
               EffectivePullRule rule = EffectivePullRule::kIncremental);

  int num_user_types() const { return pulls_.num_user_types(); }
  int num_arms() const { return pulls_.num_arms(); }
  int num_positions() const { return pulls_.num_positions(); }
  EffectivePullRule effective_pull_rule() const { return rule_; }

  std::int64_t rounds() const { return rounds_; }
  const CountTensor& pulls() const { return pulls_; }   // T
  const CountTensor& clicks() const { return clicks_; }  // S
  const Eigen::MatrixXd& effective_pulls() const { return effective_pulls_; }
  const Eigen::VectorX<std::int64_t>& arrival_counts() const { return arrival_counts_; }
  // Cached estimate, refreshed after every record(). Uniform rows until
  // initialized().
  const Eigen::MatrixXd& position_prefs() const { return position_prefs_; }
  // True once every click counter S_{i,j,k} is positive.
  bool initialized() const { return zero_click_cells_ == 0; }
  std::int64_t zero_click_cells() const { return zero_click_cells_; }

  // Applies one round. Throws std::invalid_argument if the feedback does not
  // belong to (user_type, perm).
  void record(int user_type, const Permutation& perm, const Feedback& feedback);

  nlohmann::json counters_json() const;
  static LearnerState from_counters_json(const nlohmann::json& json,
                                         EffectivePullRule rule = EffectivePullRule::kIncremental);

 private:
  void refresh_position_prefs(int user_type);
  void recompute_effective_pulls(int user_type);

  EffectivePullRule rule_;
  std::int64_t rounds_ = 0;
  CountTensor pulls_;
  CountTensor clicks_;
  Eigen::MatrixXd effective_pulls_;
  Eigen::VectorX<std::int64_t> arrival_counts_;
  Eigen::MatrixXd position_prefs_;
  std::int64_t zero_click_cells_ = 0;
  bool prefs_estimated_ = false;
};

// Position preferences from the state's click ratios. Uniform rows before
// initialization.
Eigen::MatrixXd estimate_position_prefs(const LearnerState& state);

// ||S_{i,j}||_1 / N_{i,j} clamped to [0,1]; 1.0 when N_{i,j} = 0.
double estimate_arm_mean(const LearnerState& state, int user_type, int arm);
Eigen::MatrixXd estimate_arm_means(const LearnerState& state);

// arrival_counts / t. Throws std::logic_error when t = 0.
Eigen::VectorXd estimate_arrival_rates(const LearnerState& state);

// Plug-in parameter estimates at one point in time.
struct Estimates {
  Eigen::VectorXd arrival_rates;    // N, sums to one
  Eigen::MatrixXd position_prefs;   // N x K
  Eigen::MatrixXd arm_means;        // N x M
  Eigen::MatrixXd effective_pulls;  // N x M
};

void compute_estimates(const LearnerState& state, Estimates& out);
Estimates compute_estimates(const LearnerState& state);

// Estimates equal to the ground truth, with the given effective pull counts
// (all ones when omitted).
Estimates ground_truth_estimates(const ProblemInstance& instance,
                                 const Eigen::MatrixXd& effective_pulls = {});

// sum_i lambda_hat_i * f(sum_k rho_hat_{i,k} mu_hat_{i,perm[k]}).
double estimate_cuf(const Estimates& estimates, const UtilityFunction& utility,
                    const Permutation& perm);
// Throws std::logic_error when no user has arrived yet.
double estimate_cuf(const LearnerState& state, const UtilityFunction& utility,
                    const Permutation& perm);

}  // namespace posbandit
