#pragma once

#include "posbandit/model.hpp"

#include <cmath>

namespace testing {

inline posbandit::ProblemInstance minimal_instance(double mu = 0.5) {
  posbandit::ProblemInstance instance;
  instance.arrival_rates = Eigen::VectorXd::Ones(1);
  instance.position_prefs = Eigen::MatrixXd::Ones(1, 1);
  instance.arm_means = Eigen::MatrixXd::Constant(1, 1, mu);
  return instance;
}

// Binomial 3-sigma half width for a proportion p estimated from n draws.
inline double three_sigma(double p, double n) { return 3.0 * std::sqrt(p * (1.0 - p) / n); }

// Reference values of the two-type ads fixture, computed independently by
// exhaustive evaluation over its 20 permutations.
inline constexpr double kMaleValue23 = 0.742108;
inline constexpr double kFemaleValue23 = 0.490416;
inline constexpr double kFemaleValue32 = 0.490584;
inline constexpr double kUtilitarian23 = 0.62129584;
inline constexpr double kUtilitarian32 = 0.58382416;
inline constexpr double kUtilitarianMin = 0.33932184;
inline constexpr double kNash23 = -0.49709606566302567;
inline constexpr double kNash32 = -0.5501683674743161;

}  // namespace testing
