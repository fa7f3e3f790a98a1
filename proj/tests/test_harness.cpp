#include "posbandit/harness.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace posbandit;

namespace {

PolicySpec simple_spec(std::string id, PolicySpec::Kind kind, RegretNotion regret = RegretNotion::kPersonalized) {
  PolicySpec spec;
  spec.id = std::move(id);
  spec.kind = kind;
  spec.regret = regret;
  return spec;
}

ProblemInstance two_arm_instance() {
  ProblemInstance instance;
  instance.arrival_rates = Eigen::VectorXd::Ones(1);
  instance.position_prefs = Eigen::MatrixXd::Ones(1, 1);
  instance.arm_means = Eigen::RowVector2d(0.5, 0.1);
  return instance;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("oracle on the ads fixture") {
  const auto fixture = ads_fixture();
  const auto oracle = solve_oracle(fixture, UtilityFunction::utilitarian());
  CHECK(oracle.personalized_optima[0] == Permutation{2, 3});
  CHECK(oracle.personalized_values[0] == doctest::Approx(testing::kMaleValue23).epsilon(1e-12));
  CHECK(oracle.personalized_optima[1] == Permutation{3, 2});
  CHECK(oracle.personalized_values[1] == doctest::Approx(testing::kFemaleValue32).epsilon(1e-12));
  REQUIRE(oracle.equal_optimum.has_value());
  CHECK(*oracle.equal_optimum == Permutation{2, 3});
  CHECK(oracle.equal_value == doctest::Approx(testing::kUtilitarian23).epsilon(1e-12));
  REQUIRE(oracle.gap.has_value());
  CHECK(*oracle.gap == doctest::Approx(testing::kUtilitarian23 - testing::kUtilitarian32).epsilon(1e-12));

  const auto nash = solve_oracle(fixture, UtilityFunction::nash());
  CHECK(*nash.equal_optimum == Permutation{2, 3});
  CHECK(nash.equal_value == doctest::Approx(testing::kNash23).epsilon(1e-12));
  CHECK(*nash.gap == doctest::Approx(testing::kNash23 - testing::kNash32).epsilon(1e-12));

  const auto json = to_json(oracle);
  CHECK(json["equal_optimum"]["permutation"] == nlohmann::json({2, 3}));
}

TEST_CASE("oracle on the minimal instance") {
  const auto oracle = solve_oracle(testing::minimal_instance(), UtilityFunction::utilitarian());
  CHECK(*oracle.equal_optimum == Permutation{0});
  CHECK(oracle.equal_value == 0.5);
  CHECK_FALSE(oracle.gap.has_value());
}

TEST_CASE("single type equal optimum equals the personalized optimum") {
  RngStream rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform_index(6));
    const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(m)));
    const auto oracle = solve_oracle(random_instance(1, m, k, rng), UtilityFunction::utilitarian());
    CHECK(*oracle.equal_optimum == oracle.personalized_optima[0]);
    CHECK(oracle.equal_value == doctest::Approx(oracle.personalized_values[0]).epsilon(1e-12));
    if (oracle.gap) CHECK(*oracle.gap >= 0.0);
  }
}

TEST_CASE("oracle cap") {
  RngStream rng(1);
  const auto instance = random_instance(2, 12, 6, rng);
  CHECK_NOTHROW(solve_personalized_oracle(instance, 1000));
  CHECK_THROWS_AS(solve_oracle(instance, UtilityFunction::utilitarian(), 1000), EnumerationCapExceeded);
}

TEST_CASE("oracle policy has zero regret") {
  const auto fixture = ads_fixture();
  for (auto notion : {RegretNotion::kPersonalized, RegretNotion::kEqual}) {
    const auto spec = simple_spec("oracle", PolicySpec::Kind::kOracle, notion);
    const auto trace = run(fixture, spec, 5000, 3, geometric_checkpoints(5000));
    for (const auto& point : trace.checkpoints) {
      CHECK(point.cumulative_regret == 0.0);
      CHECK(point.optimal_action_rate == 1.0);
    }
    CHECK(trace.checkpoints.back().cumulative_reward > 0.0);
  }
}

TEST_CASE("the worst permutation loses 0.4 per round") {
  auto spec = simple_spec("worst", PolicySpec::Kind::kFixed);
  spec.fixed = {Permutation{1}};
  const auto trace = run(two_arm_instance(), spec, 1000, 1, {1, 10, 1000});
  CHECK(trace.at(1)->cumulative_regret == doctest::Approx(0.4));
  CHECK(trace.at(10)->cumulative_regret == doctest::Approx(4.0));
  CHECK(trace.at(1000)->cumulative_regret == doctest::Approx(400.0));
  CHECK(trace.at(1000)->optimal_action_rate == 0.0);
  CHECK(trace.at(5) == nullptr);
}

TEST_CASE("fixed and oracle specs are checked") {
  auto spec = simple_spec("bad", PolicySpec::Kind::kFixed);
  spec.fixed = {Permutation{0, 0}};
  CHECK_THROWS_AS(run(ads_fixture(), spec, 10, 1, {}), std::invalid_argument);
  spec.fixed = {Permutation{0, 1}, Permutation{1, 0}, Permutation{2, 1}};
  CHECK_THROWS_AS(run(ads_fixture(), spec, 10, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(run(ads_fixture(), spec, 0, 1, {}), std::invalid_argument);
}

TEST_CASE("policy spec json") {
  const auto spec = policy_spec_from_json(
      {{"id", "rand"}, {"kind", "uniform_random"}, {"regret", "equal"}, {"utility", "nash"}});
  CHECK(spec.kind == PolicySpec::Kind::kUniformRandom);
  CHECK(regret_notion(spec) == RegretNotion::kEqual);
  CHECK(regret_utility(spec).kind() == UtilityFunction::Kind::kNash);
  const auto back = policy_spec_from_json(to_json(spec));
  CHECK(back.id == "rand");
  CHECK(back.regret == RegretNotion::kEqual);

  const auto ranking = policy_spec_from_json(
      {{"id", "et"}, {"family", "ucb"}, {"confidence_scale", 0.5}, {"treatment", "equal"}, {"utility", "nash"}});
  CHECK(regret_notion(ranking) == RegretNotion::kEqual);
  CHECK(regret_utility(ranking).kind() == UtilityFunction::Kind::kNash);
  CHECK_THROWS_AS(policy_spec_from_json({{"id", "x"}, {"kind", "magic"}}), std::invalid_argument);
  CHECK_THROWS_AS(policy_spec_from_json({{"id", ""}, {"kind", "oracle"}}), std::invalid_argument);
}

TEST_CASE("traces are deterministic per seed") {
  const auto fixture = ads_fixture();
  PolicySpec spec;
  spec.id = "pt-greedy";
  spec.ranking = PolicyConfig::greedy_personalized(0.25);
  const auto checkpoints = geometric_checkpoints(20000);
  const auto a = run(fixture, spec, 20000, 99, checkpoints);
  const auto b = run(fixture, spec, 20000, 99, checkpoints);
  const auto c = run(fixture, spec, 20000, 100, checkpoints);
  REQUIRE(a.checkpoints.size() == b.checkpoints.size());
  bool differs = false;
  for (std::size_t n = 0; n < a.checkpoints.size(); ++n) {
    CHECK(a.checkpoints[n].cumulative_regret == b.checkpoints[n].cumulative_regret);
    CHECK(a.checkpoints[n].cumulative_reward == b.checkpoints[n].cumulative_reward);
    CHECK(a.checkpoints[n].optimal_actions == b.checkpoints[n].optimal_actions);
    differs |= a.checkpoints[n].cumulative_reward != c.checkpoints[n].cumulative_reward;
  }
  CHECK(a.init_rounds == b.init_rounds);
  CHECK(differs);
}

TEST_CASE("trace invariants for every policy family") {
  const auto fixture = ads_fixture();
  const auto utilitarian = solve_oracle(fixture, UtilityFunction::utilitarian());
  const auto nash = solve_oracle(fixture, UtilityFunction::nash());

  double max_personalized_gap = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (const auto& perm : enumerate_permutations(5, 2)) {
      max_personalized_gap = std::max(max_personalized_gap,
                                      utilitarian.personalized_values[static_cast<std::size_t>(i)] -
                                          expected_user_value(fixture, i, perm));
    }
  }
  auto max_equal_gap = [&](const OracleSolution& oracle) {
    double worst = 0.0;
    for (const auto& perm : enumerate_permutations(5, 2)) {
      worst = std::max(worst, oracle.equal_value - cuf_value(fixture, oracle.utility, perm));
    }
    return worst;
  };

  std::vector<PolicySpec> specs(5);
  specs[0].ranking = PolicyConfig::greedy_personalized(0.25);
  specs[1].ranking = PolicyConfig::ucb_personalized(0.25);
  specs[2].ranking = PolicyConfig::greedy_equal(0.5, UtilityFunction::nash());
  specs[3].ranking = PolicyConfig::ucb_equal(0.5, UtilityFunction::utilitarian());
  specs[4] = simple_spec("random", PolicySpec::Kind::kUniformRandom);
  for (std::size_t s = 0; s < specs.size(); ++s) {
    specs[s].id = "p" + std::to_string(s);
    const bool equal = regret_notion(specs[s]) == RegretNotion::kEqual;
    const OracleSolution& oracle = regret_utility(specs[s]).kind() == UtilityFunction::Kind::kNash ? nash : utilitarian;
    const double max_gap = equal ? max_equal_gap(oracle) : max_personalized_gap;
    const auto trace = run(fixture, specs[s], 20000, 5, geometric_checkpoints(20000), &oracle);
    double previous_regret = 0.0;
    std::int64_t previous_t = 0;
    for (const auto& point : trace.checkpoints) {
      CHECK(point.t > previous_t);
      CHECK(point.cumulative_regret >= previous_regret);
      CHECK(point.cumulative_regret <= point.t * max_gap + 1e-9);
      CHECK(point.optimal_action_rate >= 0.0);
      CHECK(point.optimal_action_rate <= 1.0);
      CHECK(point.optimal_action_rate * point.t == doctest::Approx(point.optimal_actions));
      previous_regret = point.cumulative_regret;
      previous_t = point.t;
    }
  }
}

TEST_CASE("an equal oracle for the wrong utility is rejected") {
  const auto fixture = ads_fixture();
  const auto oracle = solve_oracle(fixture, UtilityFunction::utilitarian());
  PolicySpec spec;
  spec.id = "et";
  spec.ranking = PolicyConfig::ucb_equal(0.5, UtilityFunction::nash());
  CHECK_THROWS_AS(run(fixture, spec, 10, 1, {}, &oracle), std::invalid_argument);
}

TEST_CASE("checkpoint schedules") {
  CHECK(geometric_checkpoints(10) == std::vector<std::int64_t>{1, 2, 4, 8, 10});
  CHECK(geometric_checkpoints(8) == std::vector<std::int64_t>{1, 2, 4, 8});
  CHECK(geometric_checkpoints(1) == std::vector<std::int64_t>{1});
  CHECK(normalize_checkpoints({50, 0, 7, 7, 200, 3}, 100) == std::vector<std::int64_t>{3, 7, 50, 100});
  CHECK(run_seed(5, 0) == run_seed(5, 0));
  CHECK(run_seed(5, 0) != run_seed(5, 1));
}

TEST_CASE("uniform random regret is linear") {
  const auto fixture = ads_fixture();
  const auto spec = simple_spec("random", PolicySpec::Kind::kUniformRandom);
  std::vector<RegretTrace> traces;
  for (std::uint64_t seed = 0; seed < 20; ++seed) traces.push_back(run(fixture, spec, 20000, seed, {10000, 20000}));
  const auto stats = sublinearity_check(traces, 10000, 20000);
  CHECK(stats.included == 20);
  CHECK(stats.mean_ratio == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("sublinearity check excludes zero regret runs") {
  RegretTrace zero{"oracle", 1, {{10, 0.0}, {20, 0.0}}, 0};
  RegretTrace some{"p", 2, {{10, 4.0}, {20, 6.0}}, 0};
  const std::vector<RegretTrace> only_zero = {zero};
  const auto none = sublinearity_check(only_zero, 10, 20);
  CHECK(std::isnan(none.mean_ratio));
  CHECK(none.excluded == 1);
  const std::vector<RegretTrace> mixed = {zero, some};
  const auto stats = sublinearity_check(mixed, 10, 20);
  CHECK(stats.mean_ratio == 1.5);
  CHECK(stats.included == 1);
  CHECK(stats.excluded == 1);
  CHECK_THROWS_AS(sublinearity_check(mixed, 10, 40), std::invalid_argument);
}

TEST_CASE("csv rows are sorted and formatted") {
  RegretTrace b{"b", 7, {{1, 0.1, 1.0, 0.5, 1.0, 1}, {2, 1.0 / 3.0, 1.0, 0.75, 0.5, 1}}, 0};
  RegretTrace a2{"a", 9, {{1, 0.0, 0.0, 0.25, 0.0, 0}}, 0};
  RegretTrace a1{"a", 3, {{1, 123456789.123, 2.0, 0.0, 1.0, 1}}, 0};
  const std::vector<RegretTrace> traces = {b, a2, a1};
  std::ostringstream out;
  write_csv(out, traces);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "policy_id,seed,t,cumulative_regret,cumulative_reward,optimal_action_rate,wall_clock_s");
  CHECK(lines[1] == "a,3,1,123456789.1,2,1,0");
  CHECK(lines[2] == "a,9,1,0,0,0,0.25");
  CHECK(lines[3] == "b,7,1,0.1,1,1,0.5");
  CHECK(lines[4] == "b,7,2,0.3333333333,1,0.5,0.75");
}

}  // TEST_SUITE
