#include "posbandit/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace posbandit {

PolicyConfig PolicyConfig::greedy_personalized(double epsilon_scale) {
  PolicyConfig config;
  config.family = Family::kGreedy;
  config.scale = epsilon_scale;
  return config;
}

PolicyConfig PolicyConfig::ucb_personalized(double confidence_scale) {
  PolicyConfig config;
  config.family = Family::kUcb;
  config.scale = confidence_scale;
  return config;
}

PolicyConfig PolicyConfig::greedy_equal(double epsilon_scale, UtilityFunction utility,
                                        OptimizerConfig optimizer) {
  PolicyConfig config = greedy_personalized(epsilon_scale);
  config.treatment = Treatment::kEqual;
  config.utility = utility;
  config.optimizer = optimizer;
  return config;
}

PolicyConfig PolicyConfig::ucb_equal(double confidence_scale, UtilityFunction utility,
                                     OptimizerConfig optimizer) {
  PolicyConfig config = ucb_personalized(confidence_scale);
  config.treatment = Treatment::kEqual;
  config.utility = utility;
  config.optimizer = optimizer;
  return config;
}

PolicyConfig PolicyConfig::single_type_baseline(double confidence_scale) {
  PolicyConfig config = ucb_personalized(confidence_scale);
  config.baseline_single_type = true;
  return config;
}

void validate(const PolicyConfig& config) {
  // The UCB scale may be zero (pure exploitation); the greedy scale may not.
  if (config.family == PolicyConfig::Family::kGreedy && !(config.scale > 0.0)) {
    throw std::invalid_argument("epsilon_scale must be positive");
  }
  if (config.family == PolicyConfig::Family::kUcb && !(config.scale >= 0.0)) {
    throw std::invalid_argument("confidence_scale must be nonnegative");
  }
  if (config.baseline_single_type && config.treatment == PolicyConfig::Treatment::kEqual) {
    throw std::invalid_argument("the single-type baseline is a personalized policy");
  }
  validate(config.optimizer);
}

nlohmann::json to_json(const PolicyConfig& config) {
  nlohmann::json json;
  const bool greedy = config.family == PolicyConfig::Family::kGreedy;
  json["family"] = greedy ? "greedy" : "ucb";
  json[greedy ? "epsilon_scale" : "confidence_scale"] = config.scale;
  json["treatment"] = config.treatment == PolicyConfig::Treatment::kEqual ? "equal" : "personalized";
  if (config.treatment == PolicyConfig::Treatment::kEqual) {
    json["utility"] = config.utility.name();
    json["optimizer"] = to_json(config.optimizer);
  }
  json["baseline_single_type"] = config.baseline_single_type;
  json["effective_pulls"] =
      config.effective_pulls == EffectivePullRule::kIncremental ? "incremental" : "recomputed";
  return json;
}

PolicyConfig policy_config_from_json(const nlohmann::json& json) {
  PolicyConfig config;
  const std::string family = json.at("family").get<std::string>();
  if (family == "greedy") {
    config.family = PolicyConfig::Family::kGreedy;
    config.scale = json.value("epsilon_scale", 1.0);
  } else if (family == "ucb") {
    config.family = PolicyConfig::Family::kUcb;
    config.scale = json.value("confidence_scale", 1.0);
  } else {
    throw std::invalid_argument("unknown policy family '" + family + "'");
  }
  const std::string treatment = json.value("treatment", "personalized");
  if (treatment == "equal") {
    config.treatment = PolicyConfig::Treatment::kEqual;
  } else if (treatment != "personalized") {
    throw std::invalid_argument("unknown treatment '" + treatment + "'");
  }
  if (json.contains("utility")) config.utility = parse_utility(json.at("utility").get<std::string>());
  if (json.contains("optimizer")) config.optimizer = optimizer_config_from_json(json.at("optimizer"));
  config.baseline_single_type = json.value("baseline_single_type", false);
  const std::string pulls = json.value("effective_pulls", "incremental");
  if (pulls == "recomputed") {
    config.effective_pulls = EffectivePullRule::kRecomputed;
  } else if (pulls != "incremental") {
    throw std::invalid_argument("unknown effective_pulls rule '" + pulls + "'");
  }
  validate(config);
  return config;
}

PolicyState::PolicyState(int num_user_types, int num_arms, int num_positions, std::uint64_t seed,
                         EffectivePullRule rule)
    : learner(num_user_types, num_arms, num_positions, rule), rng(seed, 2) {}

Permutation init_permutation(std::int64_t t, int num_arms, int num_positions) {
  std::vector<int> slots(static_cast<std::size_t>(num_positions));
  const std::int64_t m = num_arms;
  const std::int64_t base = ((t % m) + m) % m;
  for (int k = 0; k < num_positions; ++k) {
    slots[static_cast<std::size_t>(k)] = static_cast<int>((base + k + 1) % m);
  }
  return Permutation(std::move(slots));
}

Permutation explore_permutation(int cursor, int num_arms, int num_positions) {
  return init_permutation(cursor, num_arms, num_positions);
}

double greedy_head_rate(const PolicyConfig& config, int num_user_types, std::int64_t t) {
  double rate = config.scale / std::sqrt(static_cast<double>(std::max<std::int64_t>(t, 1)));
  if (config.treatment == PolicyConfig::Treatment::kEqual) rate *= num_user_types;
  return std::min(1.0, rate);
}

Eigen::VectorXd ucb_arm_scores(const Estimates& estimates, int user_type, double confidence_scale,
                               std::int64_t t) {
  const auto pulls = estimates.effective_pulls.row(user_type);
  if ((pulls.array() <= 0.0).any()) {
    throw std::logic_error("ucb: an effective pull counter is zero after initialization");
  }
  const double numerator = confidence_scale * std::log(static_cast<double>(t));
  return (estimates.arm_means.row(user_type).array() + numerator / pulls.array()).transpose();
}

Eigen::VectorXd ucb_collective_bonus(const Estimates& estimates, double confidence_scale,
                                     std::int64_t t) {
  if ((estimates.effective_pulls.array() <= 0.0).any()) {
    throw std::logic_error("ucb: an effective pull counter is zero after initialization");
  }
  const double numerator = confidence_scale * std::log(static_cast<double>(t));
  return (numerator / estimates.effective_pulls.array()).colwise().sum().transpose();
}

CufObjective::CufObjective(const Estimates& estimates, UtilityFunction utility,
                           Eigen::VectorXd arm_bonus, const Permutation* reference)
    : estimates_(estimates), utility_(utility), arm_bonus_(std::move(arm_bonus)) {
  if (arm_bonus_.size() == 0) arm_bonus_ = Eigen::VectorXd::Zero(estimates.arm_means.cols());
  if (reference != nullptr && reference->size() == estimates.position_prefs.cols() &&
      reference->is_valid(static_cast<int>(estimates.arm_means.cols()))) {
    reference_ = *reference;
  }
}

void CufObjective::prepare_bounds() const {
  const auto n = estimates_.arm_means.rows();
  const auto k_count = static_cast<int>(estimates_.position_prefs.cols());
  tangent_point_.resize(n);
  tangent_slope_.resize(n);
  std::vector<double> prefs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto rho = estimates_.position_prefs.row(i);
    const auto mu = estimates_.arm_means.row(i);
    double point = 0.0;
    if (reference_.size() > 0) {
      point = ranked_value(rho, mu, reference_);
    } else {
      const auto top_arms = decreasing_order(mu, k_count);
      prefs.assign(rho.begin(), rho.end());
      std::sort(prefs.begin(), prefs.end(), std::greater<>());
      for (int r = 0; r < k_count; ++r) point += prefs[static_cast<std::size_t>(r)] * mu(top_arms[static_cast<std::size_t>(r)]);
    }
    if (utility_.kind() == UtilityFunction::Kind::kUtilitarian) {
      tangent_point_(i) = point;
      tangent_slope_(i) = 1.0;
    } else {
      // Above e * floor the tangent of log stays above the clamped part.
      point = std::max(point, 3.0 * utility_.floor());
      tangent_point_(i) = point;
      tangent_slope_(i) = 1.0 / point;
    }
  }
  auto linear_gains = [this](const Eigen::VectorXd& slope) {
    const Eigen::VectorXd type_weight = estimates_.arrival_rates.cwiseProduct(slope);
    gain_ = estimates_.arm_means.transpose() * type_weight.asDiagonal() * estimates_.position_prefs;
    gain_.colwise() += arm_bonus_;
  };
  linear_gains(tangent_slope_);

  // Frank-Wolfe steps over the hull of rankings move the Nash tangents toward
  // the relaxed optimum. Every vertex is a ranking and a candidate incumbent.
  best_vertex_ = Permutation();
  double best_vertex_value = -std::numeric_limits<double>::infinity();
  std::vector<int> vertex;
  const int steps = utility_.kind() == UtilityFunction::Kind::kNash ? kFrankWolfeSteps : 1;
  for (int step = 0; step < steps; ++step) {
    max_assignment_value(gain_.transpose(), &vertex);
    Permutation candidate(vertex);
    const double value = (*this)(candidate);
    if (value > best_vertex_value) {
      best_vertex_value = value;
      best_vertex_ = candidate;
    }
    if (steps == 1) break;
    const double gamma = 2.0 / (step + 3.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = ranked_value(estimates_.position_prefs.row(i), estimates_.arm_means.row(i), candidate);
      tangent_point_(i) = std::max(tangent_point_(i) + gamma * (x - tangent_point_(i)), 3.0 * utility_.floor());
    }
    tangent_slope_ = tangent_point_.cwiseInverse();
    linear_gains(tangent_slope_);
  }
  taken_.assign(static_cast<std::size_t>(estimates_.arm_means.cols()), 0);

  // Per-type best value of positions d.. ignoring which arms are taken.
  remaining_.setZero(n, k_count + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto top_arms = decreasing_order(estimates_.arm_means.row(i), k_count);
    for (int d = k_count - 1; d >= 0; --d) {
      prefs.assign(estimates_.position_prefs.row(i).begin() + d, estimates_.position_prefs.row(i).end());
      std::sort(prefs.begin(), prefs.end(), std::greater<>());
      double best = 0.0;
      for (std::size_t r = 0; r < prefs.size(); ++r) best += prefs[r] * estimates_.arm_means(i, top_arms[r]);
      remaining_(i, d) = best;
    }
  }
  std::vector<double> bonuses(arm_bonus_.begin(), arm_bonus_.end());
  std::sort(bonuses.begin(), bonuses.end(), std::greater<>());
  bonus_tail_.setZero(k_count + 1);
  for (int d = k_count - 1; d >= 0; --d) {
    for (int r = 0; r < k_count - d; ++r) bonus_tail_(d) += bonuses[static_cast<std::size_t>(r)];
  }
  bounds_ready_ = true;
}

double CufObjective::operator()(const Permutation& perm) const {
  double value = collective_value(estimates_.arrival_rates, estimates_.position_prefs,
                                  estimates_.arm_means, utility_, perm);
  for (int k = 0; k < perm.size(); ++k) value += arm_bonus_(perm[k]);
  return value;
}

double CufObjective::upper_bound(std::span<const int> prefix) const {
  return upper_bound(prefix, -std::numeric_limits<double>::infinity());
}

double CufObjective::upper_bound(std::span<const int> prefix, double threshold) const {
  if (!bounds_ready_) prepare_bounds();
  const auto& rho = estimates_.position_prefs;
  const auto& mu = estimates_.arm_means;
  const auto& lambda = estimates_.arrival_rates;
  const auto n = lambda.size();
  const auto m = mu.cols();
  const auto depth = static_cast<Eigen::Index>(prefix.size());
  const Eigen::Index rows = rho.cols() - depth;

  partial_.setZero(n);
  double prefix_bonus = 0.0;
  for (Eigen::Index k = 0; k < depth; ++k) {
    const int arm = prefix[static_cast<std::size_t>(k)];
    partial_ += rho.col(k).cwiseProduct(mu.col(arm));
    prefix_bonus += arm_bonus_(arm);
    taken_[static_cast<std::size_t>(arm)] = 1;
  }
  free_arms_.clear();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!taken_[static_cast<std::size_t>(j)]) free_arms_.push_back(static_cast<int>(j));
  }
  for (int arm : prefix) taken_[static_cast<std::size_t>(arm)] = 0;

  double loose = prefix_bonus + bonus_tail_(depth);
  for (Eigen::Index i = 0; i < n; ++i) loose += lambda(i) * utility_(partial_(i) + remaining_(i, depth));
  if (loose < threshold) return loose;

  auto linear_part = [&](const Eigen::VectorXd& point, const Eigen::VectorXd& slope) {
    double total = prefix_bonus;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += lambda(i) * (utility_(point(i)) + slope(i) * (partial_(i) - point(i)));
    }
    return total;
  };

  double bound = linear_part(tangent_point_, tangent_slope_);
  if (rows == 0) return std::min(loose, bound);
  scratch_.resize(rows, static_cast<Eigen::Index>(free_arms_.size()));
  for (std::size_t c = 0; c < free_arms_.size(); ++c) {
    scratch_.col(static_cast<Eigen::Index>(c)) = gain_.row(free_arms_[c]).tail(rows).transpose();
  }
  return std::min(loose, bound + max_assignment_value(scratch_));
}

Permutation CufObjective::relaxed_choice() const {
  if (!bounds_ready_) prepare_bounds();
  return best_vertex_;
}

Permutation optimize_equal_treatment(PolicyState& state, const PolicyConfig& config,
                                     const CufObjective& objective, std::int64_t t) {
  const int m = state.learner.num_arms();
  const int k_count = state.learner.num_positions();
  const auto& optimizer = config.optimizer;
  Permutation choice;
  if (optimizer.kind == OptimizerConfig::Kind::kSampled) {
    choice = argmax_sampled(m, k_count, objective, optimizer.schedule(t), state.rng,
                            optimizer.min_samples, optimizer.cap)
                 .perm;
  } else if (count_permutations(m, k_count) > optimizer.prune_above) {
    Permutation hint = objective.relaxed_choice();
    if (state.last_equal_choice.size() == k_count && objective(state.last_equal_choice) > objective(hint)) {
      hint = state.last_equal_choice;
    }
    choice = argmax_exact_pruned(m, k_count, objective, &hint, optimizer.cap).perm;
  } else {
    choice = argmax_exact(m, k_count, objective, optimizer.cap).perm;
  }
  state.last_equal_choice = choice;
  return choice;
}

Permutation greedy_decide(PolicyState& state, const PolicyConfig& config, const Estimates& estimates,
                          int user_type, std::int64_t t) {
  const int m = state.learner.num_arms();
  const int k_count = state.learner.num_positions();
  const double rate = greedy_head_rate(config, state.learner.num_user_types(), t);
  if (state.rng.uniform() < rate) {
    Permutation explore = explore_permutation(state.explore_cursor, m, k_count);
    state.explore_cursor = state.explore_cursor % m + 1;
    return explore;
  }
  if (config.treatment == PolicyConfig::Treatment::kPersonalized) {
    return personalized_rank(estimates.position_prefs.row(user_type),
                             estimates.arm_means.row(user_type), k_count);
  }
  const CufObjective objective(estimates, config.utility, Eigen::VectorXd(), &state.last_equal_choice);
  return optimize_equal_treatment(state, config, objective, t);
}

Permutation ucb_decide(PolicyState& state, const PolicyConfig& config, const Estimates& estimates,
                       int user_type, std::int64_t t) {
  const int k_count = state.learner.num_positions();
  if (config.treatment == PolicyConfig::Treatment::kPersonalized) {
    const Eigen::VectorXd scores = ucb_arm_scores(estimates, user_type, config.scale, t);
    return personalized_rank(estimates.position_prefs.row(user_type), scores, k_count);
  }
  const CufObjective objective(estimates, config.utility,
                               ucb_collective_bonus(estimates, config.scale, t), &state.last_equal_choice);
  return optimize_equal_treatment(state, config, objective, t);
}

Permutation baseline_decide(PolicyState& state, const PolicyConfig& config, const Estimates& pooled,
                            std::int64_t t) {
  PolicyConfig personalized = config;
  personalized.treatment = PolicyConfig::Treatment::kPersonalized;
  return ucb_decide(state, personalized, pooled, 0, t);
}

RankingPolicy::RankingPolicy(PolicyConfig config, int num_user_types, int num_arms,
                             int num_positions, std::uint64_t seed)
    : config_(std::move(config)),
      num_arms_(num_arms),
      num_positions_(num_positions),
      state_(config_.baseline_single_type ? 1 : num_user_types, num_arms, num_positions, seed,
             config_.effective_pulls) {
  validate(config_);
}

Permutation RankingPolicy::decide(int user_type, std::int64_t t) {
  if (!state_.learner.initialized()) return init_permutation(t, num_arms_, num_positions_);
  if (!state_.init_done) {
    state_.init_done = true;
    state_.init_end = t - 1;
    state_.explore_cursor = 1;
  }
  compute_estimates(state_.learner, estimates_);
  if (config_.baseline_single_type) {
    if (config_.family == PolicyConfig::Family::kGreedy) {
      return greedy_decide(state_, config_, estimates_, 0, t);
    }
    return baseline_decide(state_, config_, estimates_, t);
  }
  if (config_.family == PolicyConfig::Family::kGreedy) {
    return greedy_decide(state_, config_, estimates_, user_type, t);
  }
  return ucb_decide(state_, config_, estimates_, user_type, t);
}

void RankingPolicy::observe(int user_type, const Permutation& shown, const Feedback& feedback) {
  if (!config_.baseline_single_type) {
    state_.learner.record(user_type, shown, feedback);
    return;
  }
  Feedback pooled = feedback;
  pooled.user_type = 0;
  state_.learner.record(0, shown, pooled);
}

FixedPolicy::FixedPolicy(std::vector<Permutation> per_type) : per_type_(std::move(per_type)) {
  if (per_type_.empty()) throw std::invalid_argument("FixedPolicy needs at least one permutation");
}

Permutation FixedPolicy::decide(int user_type, std::int64_t) {
  if (per_type_.size() == 1) return per_type_.front();
  return per_type_.at(static_cast<std::size_t>(user_type));
}

UniformRandomPolicy::UniformRandomPolicy(int num_arms, int num_positions, std::uint64_t seed)
    : num_arms_(num_arms), num_positions_(num_positions), rng_(seed, 2) {}

Permutation UniformRandomPolicy::decide(int, std::int64_t) {
  return random_permutation(num_arms_, num_positions_, rng_);
}

}  // namespace posbandit
