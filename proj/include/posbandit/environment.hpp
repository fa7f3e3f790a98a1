#pragma once

#include "posbandit/model.hpp"
#include "posbandit/rng.hpp"

#include <optional>

namespace posbandit {

// One round's observation. The observed position is never part of the
// feedback: without a click the learner cannot tell which slot was looked at.
struct Feedback {
  int user_type = 0;
  int reward = 0;                   // 1 iff some position was clicked
  std::optional<int> clicked_arm;   // present iff reward == 1
  // Recorded reward magnitude. Equals `reward` under Bernoulli rewards; under
  // Beta rewards it is a Beta(c*mu, c*(1-mu)) draw for the observed arm.
  double realized_reward = 0.0;
};

// Draws a user type from the arrival distribution. Consumes one uniform.
int sample_arrival(const ProblemInstance& instance, RngStream& rng);

// Position-based click chain: one position k ~ Categorical(rho_i) is observed,
// the arm in that slot is clicked with probability mu_{i,arm}. Consumes
// exactly two uniforms from `rng`; Beta magnitudes come from `reward_rng`
// when given, otherwise from `rng` after the two click-chain draws.
Feedback step(const ProblemInstance& instance, int user_type, const Permutation& perm,
              RngStream& rng, RngStream* reward_rng = nullptr);

// Simulator for one run. Arrivals and click chains share one stream with a
// fixed number of draws per round, so two runs with the same seed see the
// same users and the same uniforms regardless of the rankings shown.
class Environment {
 public:
  Environment(const ProblemInstance& instance, std::uint64_t seed);

  const ProblemInstance& instance() const { return instance_; }
  int next_user() { return sample_arrival(instance_, draws_); }
  Feedback step(int user_type, const Permutation& perm) {
    return posbandit::step(instance_, user_type, perm, draws_, &rewards_);
  }

 private:
  const ProblemInstance& instance_;
  RngStream draws_;
  RngStream rewards_;
};

}  // namespace posbandit
