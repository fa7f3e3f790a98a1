#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace posbandit {

class RngStream;

// A K-permutation: slots[k] is the arm displayed at ranking position k.
// Positions and arms are 0-indexed throughout the library.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<int> slots) : slots_(std::move(slots)) {}
  Permutation(std::initializer_list<int> slots) : slots_(slots) {}

  int size() const { return static_cast<int>(slots_.size()); }
  int operator[](int position) const { return slots_[static_cast<std::size_t>(position)]; }
  int& operator[](int position) { return slots_[static_cast<std::size_t>(position)]; }
  std::span<const int> slots() const { return slots_; }

  // Position of `arm`, or nullopt if the arm is not displayed.
  std::optional<int> position_of(int arm) const;
  bool contains(int arm) const { return position_of(arm).has_value(); }

  // True when all entries are distinct and lie in [0, num_arms).
  bool is_valid(int num_arms) const;

  friend auto operator<=>(const Permutation&, const Permutation&) = default;
  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> slots_;
};

std::string to_string(const Permutation& perm);

class UtilityFunction {
 public:
  enum class Kind { kUtilitarian, kNash };

  static constexpr double kDefaultNashFloor = 1e-6;

  static UtilityFunction utilitarian() { return {Kind::kUtilitarian, 0.0, 1.0}; }
  // Nash utility log(max(x, floor)). The declared Lipschitz constant is the
  // bi-Lipschitz constant of log on [floor, 1], i.e. 1/floor.
  static UtilityFunction nash(double floor = kDefaultNashFloor) {
    return {Kind::kNash, floor, 1.0 / floor};
  }

  Kind kind() const { return kind_; }
  double floor() const { return floor_; }
  double lipschitz() const { return lipschitz_; }

  double operator()(double x) const {
    if (kind_ == Kind::kUtilitarian) return x;
    return std::log(x > floor_ ? x : floor_);
  }

  std::string name() const { return kind_ == Kind::kUtilitarian ? "utilitarian" : "nash"; }

  friend bool operator==(const UtilityFunction&, const UtilityFunction&) = default;

 private:
  UtilityFunction(Kind kind, double floor, double lipschitz)
      : kind_(kind), floor_(floor), lipschitz_(lipschitz) {}

  Kind kind_;
  double floor_;
  double lipschitz_;
};

// Parses "utilitarian" or "nash"; throws std::invalid_argument otherwise.
UtilityFunction parse_utility(const std::string& name);

struct RewardModel {
  enum class Kind { kBernoulli, kBeta };

  Kind kind = Kind::kBernoulli;
  // Beta(c*mu, c*(1-mu)) concentration c, used only for the recorded reward
  // magnitude. Click indicators are Bernoulli(mu) in both modes.
  double concentration = 0.0;

  static RewardModel bernoulli() { return {}; }
  static RewardModel beta(double concentration) { return {Kind::kBeta, concentration}; }

  friend bool operator==(const RewardModel&, const RewardModel&) = default;
};

// Ground-truth parameters of a position-based click model with several user
// types. Rows index user types.
struct ProblemInstance {
  Eigen::VectorXd arrival_rates;   // N
  Eigen::MatrixXd position_prefs;  // N x K, rows are observation distributions
  Eigen::MatrixXd arm_means;       // N x M, click probabilities
  RewardModel reward_model;

  int num_user_types() const { return static_cast<int>(arrival_rates.size()); }
  int num_arms() const { return static_cast<int>(arm_means.cols()); }
  int num_positions() const { return static_cast<int>(position_prefs.cols()); }
};

inline constexpr double kNormalizationTolerance = 1e-9;
inline constexpr double kMinArmMean = 1e-6;

struct Violation {
  std::string message;
};

// Returns every violated invariant; an empty list means the instance is valid.
std::vector<Violation> validate(const ProblemInstance& instance);

// Throws std::invalid_argument listing the violations, if any.
void require_valid(const ProblemInstance& instance);

// <rho_row, mu_row permuted by perm>: the expected click probability of one
// user type for one ranking. Works on any Eigen row/column expression.
template <typename RhoRow, typename MuRow>
typename RhoRow::Scalar ranked_value(const Eigen::MatrixBase<RhoRow>& rho_row,
                                     const Eigen::MatrixBase<MuRow>& mu_row,
                                     const Permutation& perm) {
  typename RhoRow::Scalar value(0);
  for (int k = 0; k < perm.size(); ++k) value += rho_row(k) * mu_row(perm[k]);
  return value;
}

// sum_i weights_i * f(<rho_i, mu_i permuted by perm>).
template <typename Weights, typename Rho, typename Mu>
typename Weights::Scalar collective_value(const Eigen::MatrixBase<Weights>& weights,
                                          const Eigen::MatrixBase<Rho>& rho,
                                          const Eigen::MatrixBase<Mu>& mu,
                                          const UtilityFunction& utility,
                                          const Permutation& perm) {
  typename Weights::Scalar total(0);
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    total += weights(i) * utility(ranked_value(rho.row(i), mu.row(i), perm));
  }
  return total;
}

double expected_user_value(const ProblemInstance& instance, int user_type, const Permutation& perm);

// Ground-truth collective utility of displaying `perm` to every user type.
double cuf_value(const ProblemInstance& instance, const UtilityFunction& utility,
                 const Permutation& perm);

// Random instance with symmetric Dirichlet(concentration) arrival rates and
// position preferences and arm means uniform on [mu_low, mu_high].
ProblemInstance random_instance(int num_user_types, int num_arms, int num_positions,
                                RngStream& rng, double mu_low = 0.05, double mu_high = 0.95,
                                RewardModel reward_model = RewardModel::bernoulli(),
                                double concentration = 1.0);

// The two-type, five-arm, two-position ad fixture (male, female).
ProblemInstance ads_fixture();

nlohmann::json to_json(const ProblemInstance& instance);
// Parses and shape-checks; does not run validate().
ProblemInstance instance_from_json(const nlohmann::json& json);

std::string dump_instance(const ProblemInstance& instance);
ProblemInstance load_instance(const std::filesystem::path& path);
void save_instance(const ProblemInstance& instance, const std::filesystem::path& path);

nlohmann::json to_json(const RewardModel& model);
RewardModel reward_model_from_json(const nlohmann::json& json);
nlohmann::json to_json(const Permutation& perm);

}  // namespace posbandit
