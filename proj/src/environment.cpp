#include "posbandit/environment.hpp"

#include <stdexcept>

namespace posbandit {

int sample_arrival(const ProblemInstance& instance, RngStream& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  const int n = instance.num_user_types();
  for (int i = 0; i < n - 1; ++i) {
    cumulative += instance.arrival_rates(i);
    if (u < cumulative) return i;
  }
  return n - 1;
}

Feedback step(const ProblemInstance& instance, int user_type, const Permutation& perm,
              RngStream& rng, RngStream* reward_rng) {
  const int k_count = perm.size();
  if (k_count != instance.num_positions()) {
    throw std::invalid_argument("step: permutation size does not match num_positions");
  }
  const double u_position = rng.uniform();
  const double u_click = rng.uniform();

  int observed = k_count - 1;
  double cumulative = 0.0;
  for (int k = 0; k < k_count - 1; ++k) {
    cumulative += instance.position_prefs(user_type, k);
    if (u_position < cumulative) {
      observed = k;
      break;
    }
  }
  const int arm = perm[observed];
  const double mu = instance.arm_means(user_type, arm);

  Feedback feedback;
  feedback.user_type = user_type;
  if (u_click < mu) {
    feedback.reward = 1;
    feedback.clicked_arm = arm;
  }
  if (instance.reward_model.kind == RewardModel::Kind::kBeta) {
    RngStream& source = reward_rng ? *reward_rng : rng;
    const double c = instance.reward_model.concentration;
    if (mu >= 1.0) {
      feedback.realized_reward = 1.0;
    } else {
      feedback.realized_reward = source.beta(c * mu, c * (1.0 - mu));
    }
  } else {
    feedback.realized_reward = feedback.reward;
  }
  return feedback;
}

Environment::Environment(const ProblemInstance& instance, std::uint64_t seed)
    : instance_(instance), draws_(seed, 0), rewards_(seed, 1) {}

}  // namespace posbandit
