#include "posbandit/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace posbandit {

Eigen::RowVectorXd normalized_position_profile(const Eigen::Ref<const Eigen::ArrayXXd>& ratios) {
  const Eigen::Index k_count = ratios.cols();
  Eigen::RowVectorXd profile = Eigen::RowVectorXd::Zero(k_count);
  int used = 0;
  for (Eigen::Index j = 0; j < ratios.rows(); ++j) {
    const auto row = ratios.row(j);
    if (!row.isFinite().all()) continue;
    const double total = row.sum();
    if (!(total > 0.0)) continue;
    profile += (row / total).matrix();
    ++used;
  }
  if (used == 0) return Eigen::RowVectorXd::Constant(k_count, 1.0 / static_cast<double>(k_count));
  return profile / static_cast<double>(used);
}

LearnerState::LearnerState(int num_user_types, int num_arms, int num_positions,
                           EffectivePullRule rule)
    : rule_(rule),
      pulls_(num_user_types, num_arms, num_positions),
      clicks_(num_user_types, num_arms, num_positions),
      effective_pulls_(Eigen::MatrixXd::Zero(num_user_types, num_arms)),
      arrival_counts_(Eigen::VectorX<std::int64_t>::Zero(num_user_types)),
      position_prefs_(Eigen::MatrixXd::Constant(num_user_types, num_positions,
                                                1.0 / static_cast<double>(num_positions))),
      zero_click_cells_(static_cast<std::int64_t>(num_user_types) * num_arms * num_positions) {
  if (num_user_types <= 0 || num_arms <= 0 || num_positions <= 0 || num_positions > num_arms) {
    throw std::invalid_argument("LearnerState: need N, M, K positive and K <= M");
  }
}

void LearnerState::record(int user_type, const Permutation& perm, const Feedback& feedback) {
  if (user_type < 0 || user_type >= num_user_types()) {
    throw std::invalid_argument("record: user type out of range");
  }
  if (perm.size() != num_positions() || !perm.is_valid(num_arms())) {
    throw std::invalid_argument("record: invalid permutation " + to_string(perm));
  }
  if (feedback.user_type != user_type) {
    throw std::invalid_argument("record: feedback belongs to another user type");
  }
  if (feedback.reward != 0 && feedback.reward != 1) {
    throw std::invalid_argument("record: reward must be 0 or 1");
  }
  if ((feedback.reward == 1) != feedback.clicked_arm.has_value()) {
    throw std::invalid_argument("record: clicked arm must be present iff reward is 1");
  }
  std::optional<int> clicked_position;
  if (feedback.clicked_arm) {
    clicked_position = perm.position_of(*feedback.clicked_arm);
    if (!clicked_position) {
      throw std::invalid_argument("record: clicked arm " + std::to_string(*feedback.clicked_arm) +
                                  " is not displayed in " + to_string(perm));
    }
  }

  for (int k = 0; k < perm.size(); ++k) {
    const int arm = perm[k];
    ++pulls_(user_type, arm, k);
    if (rule_ == EffectivePullRule::kIncremental) {
      effective_pulls_(user_type, arm) += position_prefs_(user_type, k);
    }
  }
  if (clicked_position) {
    auto& cell = clicks_(user_type, *feedback.clicked_arm, *clicked_position);
    if (cell == 0) --zero_click_cells_;
    ++cell;
  }
  ++arrival_counts_(user_type);
  ++rounds_;

  if (initialized()) {
    if (!prefs_estimated_) {
      for (int i = 0; i < num_user_types(); ++i) refresh_position_prefs(i);
      prefs_estimated_ = true;
    } else {
      refresh_position_prefs(user_type);
    }
  }
  if (rule_ == EffectivePullRule::kRecomputed) {
    for (int i = 0; i < num_user_types(); ++i) recompute_effective_pulls(i);
  }
}

void LearnerState::refresh_position_prefs(int user_type) {
  const auto t_block = pulls_.type_block(user_type).cast<double>().array();
  const auto s_block = clicks_.type_block(user_type).cast<double>().array();
  position_prefs_.row(user_type) = normalized_position_profile(s_block / t_block);
}

void LearnerState::recompute_effective_pulls(int user_type) {
  const Eigen::MatrixXd t_block = pulls_.type_block(user_type).cast<double>();
  effective_pulls_.row(user_type) = (t_block * position_prefs_.row(user_type).transpose()).transpose();
}

nlohmann::json LearnerState::counters_json() const {
  auto flat = [](const CountTensor& tensor) {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(tensor.data().size()));
    for (Eigen::Index r = 0; r < tensor.data().rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor.data().cols(); ++c) out.push_back(tensor.data()(r, c));
    }
    return out;
  };
  nlohmann::json json;
  json["num_user_types"] = num_user_types();
  json["num_arms"] = num_arms();
  json["num_positions"] = num_positions();
  json["t"] = rounds_;
  json["T"] = flat(pulls_);
  json["S"] = flat(clicks_);
  std::vector<double> n_eff;
  for (int i = 0; i < num_user_types(); ++i) {
    for (int j = 0; j < num_arms(); ++j) n_eff.push_back(effective_pulls_(i, j));
  }
  json["N_eff"] = n_eff;
  json["arrival_counts"] = std::vector<std::int64_t>(arrival_counts_.data(),
                                                     arrival_counts_.data() + arrival_counts_.size());
  return json;
}

LearnerState LearnerState::from_counters_json(const nlohmann::json& json, EffectivePullRule rule) {
  LearnerState state(json.at("num_user_types").get<int>(), json.at("num_arms").get<int>(),
                     json.at("num_positions").get<int>(), rule);
  const auto t_flat = json.at("T").get<std::vector<std::int64_t>>();
  const auto s_flat = json.at("S").get<std::vector<std::int64_t>>();
  const auto n_eff = json.at("N_eff").get<std::vector<double>>();
  const auto arrivals = json.at("arrival_counts").get<std::vector<std::int64_t>>();
  const auto cells = static_cast<std::size_t>(state.pulls_.data().size());
  if (t_flat.size() != cells || s_flat.size() != cells ||
      n_eff.size() != static_cast<std::size_t>(state.effective_pulls_.size()) ||
      arrivals.size() != static_cast<std::size_t>(state.num_user_types())) {
    throw std::invalid_argument("counter snapshot has inconsistent sizes");
  }
  const Eigen::Index k_count = state.num_positions();
  state.zero_click_cells_ = 0;
  for (std::size_t idx = 0; idx < cells; ++idx) {
    const auto r = static_cast<Eigen::Index>(idx) / k_count;
    const auto c = static_cast<Eigen::Index>(idx) % k_count;
    state.pulls_.data()(r, c) = t_flat[idx];
    state.clicks_.data()(r, c) = s_flat[idx];
    if (s_flat[idx] > t_flat[idx]) throw std::invalid_argument("counter snapshot has S > T");
    if (s_flat[idx] == 0) ++state.zero_click_cells_;
  }
  for (int i = 0; i < state.num_user_types(); ++i) {
    for (int j = 0; j < state.num_arms(); ++j) {
      state.effective_pulls_(i, j) = n_eff[static_cast<std::size_t>(i * state.num_arms() + j)];
    }
    state.arrival_counts_(i) = arrivals[static_cast<std::size_t>(i)];
  }
  state.rounds_ = json.at("t").get<std::int64_t>();
  if (state.initialized()) {
    for (int i = 0; i < state.num_user_types(); ++i) state.refresh_position_prefs(i);
    state.prefs_estimated_ = true;
  }
  return state;
}

Eigen::MatrixXd estimate_position_prefs(const LearnerState& state) {
  const int n = state.num_user_types();
  const int k_count = state.num_positions();
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, k_count, 1.0 / k_count);
  if (!state.initialized()) return out;
  for (int i = 0; i < n; ++i) {
    const auto t_block = state.pulls().type_block(i).cast<double>().array();
    const auto s_block = state.clicks().type_block(i).cast<double>().array();
    out.row(i) = normalized_position_profile(s_block / t_block);
  }
  return out;
}

double estimate_arm_mean(const LearnerState& state, int user_type, int arm) {
  const double n_eff = state.effective_pulls()(user_type, arm);
  if (!(n_eff > 0.0)) return 1.0;
  const auto clicks = static_cast<double>(state.clicks().cells(user_type, arm).sum());
  return std::clamp(clicks / n_eff, 0.0, 1.0);
}

Eigen::MatrixXd estimate_arm_means(const LearnerState& state) {
  Eigen::MatrixXd out(state.num_user_types(), state.num_arms());
  for (int i = 0; i < state.num_user_types(); ++i) {
    for (int j = 0; j < state.num_arms(); ++j) out(i, j) = estimate_arm_mean(state, i, j);
  }
  return out;
}

Eigen::VectorXd estimate_arrival_rates(const LearnerState& state) {
  if (state.rounds() == 0) throw std::logic_error("estimate_arrival_rates: no arrivals yet");
  return state.arrival_counts().cast<double>() / static_cast<double>(state.rounds());
}

void compute_estimates(const LearnerState& state, Estimates& out) {
  if (state.rounds() > 0) {
    out.arrival_rates = estimate_arrival_rates(state);
  } else {
    out.arrival_rates = Eigen::VectorXd::Zero(state.num_user_types());
  }
  out.position_prefs = state.position_prefs();
  out.effective_pulls = state.effective_pulls();
  out.arm_means.resize(state.num_user_types(), state.num_arms());
  for (int i = 0; i < state.num_user_types(); ++i) {
    for (int j = 0; j < state.num_arms(); ++j) out.arm_means(i, j) = estimate_arm_mean(state, i, j);
  }
}

Estimates compute_estimates(const LearnerState& state) {
  Estimates out;
  compute_estimates(state, out);
  return out;
}

Estimates ground_truth_estimates(const ProblemInstance& instance,
                                 const Eigen::MatrixXd& effective_pulls) {
  Estimates out;
  out.arrival_rates = instance.arrival_rates;
  out.position_prefs = instance.position_prefs;
  out.arm_means = instance.arm_means;
  out.effective_pulls = effective_pulls.size() == 0
                            ? Eigen::MatrixXd::Ones(instance.num_user_types(), instance.num_arms())
                            : effective_pulls;
  return out;
}

double estimate_cuf(const Estimates& estimates, const UtilityFunction& utility,
                    const Permutation& perm) {
  return collective_value(estimates.arrival_rates, estimates.position_prefs, estimates.arm_means,
                          utility, perm);
}

double estimate_cuf(const LearnerState& state, const UtilityFunction& utility,
                    const Permutation& perm) {
  if (state.arrival_counts().sum() == 0) throw std::logic_error("estimate_cuf: no arrivals yet");
  return estimate_cuf(compute_estimates(state), utility, perm);
}

}  // namespace posbandit
