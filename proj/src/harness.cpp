#include "posbandit/harness.hpp"

#include "posbandit/environment.hpp"
#include "posbandit/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace posbandit {

OracleSolution solve_personalized_oracle(const ProblemInstance& instance, std::uint64_t cap) {
  require_valid(instance);
  const int n = instance.num_user_types();
  const int m = instance.num_arms();
  const int k_count = instance.num_positions();
  const bool cross_check = count_permutations(m, k_count) <= cap;

  OracleSolution solution;
  for (int i = 0; i < n; ++i) {
    const auto rho = instance.position_prefs.row(i);
    const auto mu = instance.arm_means.row(i);
    Permutation best = personalized_rank(rho, mu, k_count);
    const double value = ranked_value(rho, mu, best);
    if (cross_check) {
      const auto exact = argmax_exact(
          m, k_count, [&](const Permutation& perm) { return ranked_value(rho, mu, perm); }, cap);
      // Ties between equal means can give different optima of equal value.
      if (std::abs(exact.value - value) > 1e-12 * (1.0 + std::abs(value))) {
        throw std::logic_error("sort-match optimum " + to_string(best) + " of user type " +
                               std::to_string(i) + " disagrees with brute force " +
                               to_string(exact.perm));
      }
      if (exact.value > value) best = exact.perm;
    }
    solution.personalized_values.push_back(ranked_value(rho, mu, best));
    solution.personalized_optima.push_back(std::move(best));
  }
  return solution;
}

OracleSolution solve_oracle(const ProblemInstance& instance, const UtilityFunction& utility,
                            std::uint64_t cap) {
  OracleSolution solution = solve_personalized_oracle(instance, cap);
  const int m = instance.num_arms();
  const int k_count = instance.num_positions();
  require_enumerable(m, k_count, cap);

  const auto& weights = instance.arrival_rates;
  const auto& rho = instance.position_prefs;
  const auto& mu = instance.arm_means;
  ArgmaxResult best;
  double second = -std::numeric_limits<double>::infinity();
  for (KPermutationEnumerator it(m, k_count); !it.done(); it.advance()) {
    const double value = collective_value(weights, rho, mu, utility, it.current());
    if (!std::isfinite(value)) throw NonFiniteObjective(it.current());
    if (value > best.value || best.evaluated == 0) {
      if (best.evaluated > 0) second = best.value;
      best.value = value;
      best.perm = it.current();
    } else {
      second = std::max(second, value);
    }
    ++best.evaluated;
  }
  solution.utility = utility;
  solution.equal_optimum = best.perm;
  solution.equal_value = best.value;
  if (best.evaluated > 1) solution.gap = best.value - second;
  return solution;
}

nlohmann::json to_json(const OracleSolution& solution) {
  nlohmann::json json;
  nlohmann::json personalized = nlohmann::json::array();
  for (std::size_t i = 0; i < solution.personalized_optima.size(); ++i) {
    personalized.push_back({{"user_type", i},
                            {"permutation", to_json(solution.personalized_optima[i])},
                            {"value", solution.personalized_values[i]}});
  }
  json["personalized_optima"] = personalized;
  if (solution.equal_optimum) {
    json["utility"] = solution.utility.name();
    json["equal_optimum"] = {{"permutation", to_json(*solution.equal_optimum)},
                             {"value", solution.equal_value}};
    json["gap"] = solution.gap ? nlohmann::json(*solution.gap) : nlohmann::json(nullptr);
  }
  return json;
}

RegretNotion regret_notion(const PolicySpec& spec) {
  if (spec.kind != PolicySpec::Kind::kRanking) return spec.regret;
  return spec.ranking.treatment == PolicyConfig::Treatment::kEqual ? RegretNotion::kEqual
                                                                   : RegretNotion::kPersonalized;
}

UtilityFunction regret_utility(const PolicySpec& spec) {
  if (spec.kind != PolicySpec::Kind::kRanking) return spec.regret_utility;
  return spec.ranking.utility;
}

namespace {

Permutation permutation_from_json(const nlohmann::json& json) {
  return Permutation(json.get<std::vector<int>>());
}

}  // namespace

PolicySpec policy_spec_from_json(const nlohmann::json& json) {
  PolicySpec spec;
  spec.id = json.at("id").get<std::string>();
  if (spec.id.empty()) throw std::invalid_argument("policy id must not be empty");
  const std::string kind = json.value("kind", "ranking");
  if (kind == "ranking") {
    spec.kind = PolicySpec::Kind::kRanking;
    spec.ranking = policy_config_from_json(json);
    return spec;
  }
  if (kind == "oracle") {
    spec.kind = PolicySpec::Kind::kOracle;
  } else if (kind == "uniform_random") {
    spec.kind = PolicySpec::Kind::kUniformRandom;
  } else if (kind == "fixed") {
    spec.kind = PolicySpec::Kind::kFixed;
    const auto& perms = json.at("permutations");
    for (const auto& perm : perms) spec.fixed.push_back(permutation_from_json(perm));
    if (spec.fixed.empty()) throw std::invalid_argument("fixed policy needs permutations");
  } else {
    throw std::invalid_argument("unknown policy kind '" + kind + "'");
  }
  const std::string regret = json.value("regret", "personalized");
  if (regret == "equal") {
    spec.regret = RegretNotion::kEqual;
  } else if (regret != "personalized") {
    throw std::invalid_argument("unknown regret notion '" + regret + "'");
  }
  if (json.contains("utility")) spec.regret_utility = parse_utility(json.at("utility").get<std::string>());
  return spec;
}

nlohmann::json to_json(const PolicySpec& spec) {
  nlohmann::json json;
  if (spec.kind == PolicySpec::Kind::kRanking) {
    json = to_json(spec.ranking);
    json["kind"] = "ranking";
  } else {
    json["kind"] = spec.kind == PolicySpec::Kind::kOracle          ? "oracle"
                   : spec.kind == PolicySpec::Kind::kUniformRandom ? "uniform_random"
                                                                   : "fixed";
    json["regret"] = spec.regret == RegretNotion::kEqual ? "equal" : "personalized";
    json["utility"] = spec.regret_utility.name();
    if (spec.kind == PolicySpec::Kind::kFixed) {
      nlohmann::json perms = nlohmann::json::array();
      for (const auto& perm : spec.fixed) perms.push_back(to_json(perm));
      json["permutations"] = perms;
    }
  }
  json["id"] = spec.id;
  return json;
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const ProblemInstance& instance,
                                    const OracleSolution& oracle, std::uint64_t seed) {
  const int n = instance.num_user_types();
  const int m = instance.num_arms();
  const int k_count = instance.num_positions();
  switch (spec.kind) {
    case PolicySpec::Kind::kRanking:
      return std::make_unique<RankingPolicy>(spec.ranking, n, m, k_count, seed);
    case PolicySpec::Kind::kOracle:
      if (spec.regret == RegretNotion::kEqual) {
        if (!oracle.equal_optimum) throw std::invalid_argument("oracle policy needs the equal optimum");
        return std::make_unique<FixedPolicy>(std::vector<Permutation>{*oracle.equal_optimum});
      }
      return std::make_unique<FixedPolicy>(oracle.personalized_optima);
    case PolicySpec::Kind::kUniformRandom:
      return std::make_unique<UniformRandomPolicy>(m, k_count, seed);
    case PolicySpec::Kind::kFixed:
      if (spec.fixed.size() != 1 && spec.fixed.size() != static_cast<std::size_t>(n)) {
        throw std::invalid_argument("fixed policy '" + spec.id + "' needs 1 or N permutations");
      }
      for (const auto& perm : spec.fixed) {
        if (perm.size() != k_count || !perm.is_valid(m)) {
          throw std::invalid_argument("fixed policy '" + spec.id + "' has invalid permutation " +
                                      to_string(perm));
        }
      }
      return std::make_unique<FixedPolicy>(spec.fixed);
  }
  throw std::logic_error("unreachable policy kind");
}

const Checkpoint* RegretTrace::at(std::int64_t t) const {
  const auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), t,
                                   [](const Checkpoint& c, std::int64_t value) { return c.t < value; });
  if (it == checkpoints.end() || it->t != t) return nullptr;
  return &*it;
}

std::vector<std::int64_t> geometric_checkpoints(std::int64_t horizon) {
  std::vector<std::int64_t> points;
  for (std::int64_t t = 1; t < horizon; t *= 2) points.push_back(t);
  if (horizon >= 1) points.push_back(horizon);
  return points;
}

std::vector<std::int64_t> normalize_checkpoints(std::vector<std::int64_t> checkpoints,
                                                std::int64_t horizon) {
  std::erase_if(checkpoints, [horizon](std::int64_t t) { return t < 1 || t > horizon; });
  checkpoints.push_back(horizon);
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  return checkpoints;
}

std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t run_index) {
  return mix_seed(base_seed, run_index);
}

RegretTrace run(const ProblemInstance& instance, const PolicySpec& spec, std::int64_t horizon,
                std::uint64_t seed, const std::vector<std::int64_t>& checkpoints,
                const OracleSolution* oracle) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  require_valid(instance);
  const RegretNotion notion = regret_notion(spec);
  const UtilityFunction utility = regret_utility(spec);

  OracleSolution solved;
  if (oracle == nullptr) {
    solved = notion == RegretNotion::kEqual ? solve_oracle(instance, utility)
                                            : solve_personalized_oracle(instance);
    oracle = &solved;
  }
  if (notion == RegretNotion::kEqual && (!oracle->equal_optimum || !(oracle->utility == utility))) {
    throw std::invalid_argument("oracle does not hold the equal optimum for " + utility.name());
  }

  const auto schedule = normalize_checkpoints(checkpoints, horizon);
  const auto& weights = instance.arrival_rates;
  const auto& rho = instance.position_prefs;
  const auto& mu = instance.arm_means;
  const int m = instance.num_arms();
  const int k_count = instance.num_positions();

  Environment env(instance, seed);
  const auto policy = make_policy(spec, instance, *oracle, seed);
  auto* ranking = dynamic_cast<RankingPolicy*>(policy.get());

  RegretTrace trace;
  trace.policy_id = spec.id;
  trace.seed = seed;
  trace.checkpoints.reserve(schedule.size());

  double regret = 0.0;
  double reward = 0.0;
  std::int64_t optimal = 0;
  auto next = schedule.begin();
  const auto started = std::chrono::steady_clock::now();
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const int user = env.next_user();
    const Permutation perm = policy->decide(user, t);
    if (perm.size() != k_count || !perm.is_valid(m)) {
      throw std::logic_error("policy '" + spec.id + "' emitted invalid permutation " + to_string(perm));
    }
    const Feedback feedback = env.step(user, perm);
    policy->observe(user, perm, feedback);

    double gap = 0.0;
    bool is_optimal = false;
    if (notion == RegretNotion::kPersonalized) {
      const auto i = static_cast<std::size_t>(user);
      is_optimal = perm == oracle->personalized_optima[i];
      if (!is_optimal) gap = oracle->personalized_values[i] - ranked_value(rho.row(user), mu.row(user), perm);
    } else {
      is_optimal = perm == *oracle->equal_optimum;
      if (!is_optimal) gap = oracle->equal_value - collective_value(weights, rho, mu, utility, perm);
    }
    regret += std::max(gap, 0.0);
    reward += feedback.realized_reward;
    optimal += is_optimal ? 1 : 0;

    if (next != schedule.end() && *next == t) {
      Checkpoint point;
      point.t = t;
      point.cumulative_regret = regret;
      point.cumulative_reward = reward;
      point.wall_clock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      point.optimal_actions = optimal;
      point.optimal_action_rate = static_cast<double>(optimal) / static_cast<double>(t);
      trace.checkpoints.push_back(point);
      ++next;
    }
  }
  if (ranking != nullptr && ranking->state().init_done) trace.init_rounds = ranking->state().init_end;
  return trace;
}

SublinearityStats sublinearity_check(std::span<const RegretTrace> traces, std::int64_t t1,
                                     std::int64_t t2) {
  SublinearityStats stats;
  double total = 0.0;
  for (const auto& trace : traces) {
    const Checkpoint* first = trace.at(t1);
    const Checkpoint* second = trace.at(t2);
    if (first == nullptr || second == nullptr) {
      throw std::invalid_argument("trace '" + trace.policy_id + "' seed " + std::to_string(trace.seed) +
                                  " lacks checkpoint " + std::to_string(first == nullptr ? t1 : t2));
    }
    if (first->cumulative_regret == 0.0) {
      ++stats.excluded;
      continue;
    }
    const double ratio = second->cumulative_regret / first->cumulative_regret;
    stats.ratios.push_back(ratio);
    total += ratio;
    ++stats.included;
  }
  stats.mean_ratio = stats.included > 0 ? total / stats.included
                                        : std::numeric_limits<double>::quiet_NaN();
  return stats;
}

namespace {

std::string format_g10(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.10g", value);
  return buffer;
}

}  // namespace

void write_csv(std::ostream& out, std::vector<const RegretTrace*> traces) {
  std::sort(traces.begin(), traces.end(), [](const RegretTrace* a, const RegretTrace* b) {
    if (a->policy_id != b->policy_id) return a->policy_id < b->policy_id;
    return a->seed < b->seed;
  });
  out << "policy_id,seed,t,cumulative_regret,cumulative_reward,optimal_action_rate,wall_clock_s\n";
  for (const RegretTrace* trace : traces) {
    for (const Checkpoint& point : trace->checkpoints) {
      out << trace->policy_id << ',' << trace->seed << ',' << point.t << ','
          << format_g10(point.cumulative_regret) << ',' << format_g10(point.cumulative_reward) << ','
          << format_g10(point.optimal_action_rate) << ',' << format_g10(point.wall_clock_s) << '\n';
    }
  }
}

void write_csv(std::ostream& out, std::span<const RegretTrace> traces) {
  std::vector<const RegretTrace*> pointers;
  pointers.reserve(traces.size());
  for (const auto& trace : traces) pointers.push_back(&trace);
  write_csv(out, std::move(pointers));
}

}  // namespace posbandit
