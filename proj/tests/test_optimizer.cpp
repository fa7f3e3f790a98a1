#include "posbandit/estimators.hpp"
#include "posbandit/optimizer.hpp"
#include "posbandit/policies.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace posbandit;

namespace {

std::vector<Permutation> collect(int m, int k) {
  std::vector<Permutation> out;
  for (const auto& perm : enumerate_permutations(m, k)) out.push_back(perm);
  return out;
}

auto utilitarian_objective(const ProblemInstance& instance) {
  return [&instance](const Permutation& perm) {
    return cuf_value(instance, UtilityFunction::utilitarian(), perm);
  };
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("permutation counts") {
  CHECK(count_permutations(2, 1) == 2);
  CHECK(count_permutations(3, 2) == 6);
  CHECK(count_permutations(5, 2) == 20);
  CHECK(count_permutations(20, 4) == 116280);
  CHECK(count_permutations(5, 6) == 0);
  CHECK(count_permutations(200, 100) == std::numeric_limits<std::uint64_t>::max());
}

TEST_CASE("enumeration is complete, distinct and lexicographic") {
  const auto two = collect(2, 1);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Permutation{0});
  CHECK(two[1] == Permutation{1});
  CHECK(collect(3, 2).size() == 6);
  for (int m = 1; m <= 6; ++m) {
    for (int k = 1; k <= m; ++k) {
      const auto all = collect(m, k);
      CHECK(all.size() == count_permutations(m, k));
      CHECK(std::is_sorted(all.begin(), all.end()));
      CHECK(std::set<Permutation>(all.begin(), all.end()).size() == all.size());
      for (const auto& perm : all) CHECK(perm.is_valid(m));
    }
  }
}

TEST_CASE("enumeration cap") {
  CHECK_THROWS_AS(enumerate_permutations(20, 8, 1000000), EnumerationCapExceeded);
  CHECK_THROWS_AS(enumerate_permutations(3, 4), std::invalid_argument);
  try {
    enumerate_permutations(20, 8, 1000000);
  } catch (const EnumerationCapExceeded& e) {
    CHECK(std::string(e.what()).find("sampled") != std::string::npos);
  }
}

TEST_CASE("rank and unrank are inverse and follow the enumeration order") {
  for (int m = 1; m <= 6; ++m) {
    for (int k = 1; k <= m; ++k) {
      std::uint64_t rank = 0;
      for (const auto& perm : enumerate_permutations(m, k)) {
        CHECK(unrank_permutation(rank, m, k) == perm);
        CHECK(rank_permutation(perm, m) == rank);
        ++rank;
      }
      CHECK_THROWS_AS(unrank_permutation(rank, m, k), std::out_of_range);
    }
  }
}

TEST_CASE("exact argmax on the ads fixture") {
  const auto fixture = ads_fixture();
  const auto best = argmax_exact(5, 2, utilitarian_objective(fixture));
  CHECK(best.perm == Permutation{2, 3});
  CHECK(best.value == doctest::Approx(testing::kUtilitarian23).epsilon(1e-12));
  CHECK(best.evaluated == 20);
  for (const auto& perm : enumerate_permutations(5, 2)) {
    CHECK(best.value >= cuf_value(fixture, UtilityFunction::utilitarian(), perm));
  }
}

TEST_CASE("constant objective returns the lexicographically smallest permutation") {
  const auto best = argmax_exact(4, 3, [](const Permutation&) { return 1.0; });
  CHECK(best.perm == Permutation{0, 1, 2});
}

TEST_CASE("non-finite objective is reported with the permutation") {
  auto objective = [](const Permutation& perm) { return perm[0] == 2 ? std::nan("") : 0.0; };
  CHECK_THROWS_AS(argmax_exact(3, 2, objective), NonFiniteObjective);
  try {
    argmax_exact(3, 2, objective);
  } catch (const NonFiniteObjective& e) {
    CHECK(std::string(e.what()).find("[2,0]") != std::string::npos);
  }
}

TEST_CASE("single type utilitarian argmax equals sort-match") {
  RngStream rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform_index(6));
    const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(m)));
    const auto instance = random_instance(1, m, k, rng);
    const auto best = argmax_exact(m, k, utilitarian_objective(instance));
    const auto sorted = personalized_rank(instance.position_prefs.row(0), instance.arm_means.row(0), k);
    CHECK(best.value == doctest::Approx(expected_user_value(instance, 0, sorted)).epsilon(1e-12));
  }
}

TEST_CASE("pruned search returns the exact argmax") {
  RngStream rng(31);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    const int m = 2 + static_cast<int>(rng.uniform_index(6));
    const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::min(m, 4))));
    const auto instance = random_instance(n, m, k, rng);
    Estimates estimates = ground_truth_estimates(instance);
    const auto utility = trial % 2 ? UtilityFunction::nash() : UtilityFunction::utilitarian();
    Eigen::VectorXd bonus = Eigen::VectorXd::Zero(m);
    if (trial % 3 == 0) {
      for (int j = 0; j < m; ++j) bonus(j) = 0.05 * rng.uniform();
    }
    const Permutation reference = random_permutation(m, k, rng);
    const CufObjective objective(estimates, utility, bonus, trial % 4 == 1 ? &reference : nullptr);
    const auto exact = argmax_exact(m, k, objective);
    const auto pruned = argmax_exact_pruned(m, k, objective);
    CHECK(pruned.perm == exact.perm);
    CHECK(pruned.value == exact.value);
    CHECK(pruned.evaluated <= exact.evaluated);
    const Permutation hint = random_permutation(m, k, rng);
    const auto hinted = argmax_exact_pruned(m, k, objective, &hint);
    CHECK(hinted.perm == exact.perm);
  }
}

TEST_CASE("assignment value matches brute force") {
  RngStream rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const int cols = 1 + static_cast<int>(rng.uniform_index(6));
    const int rows = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cols)));
    Eigen::MatrixXd weights(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) weights(r, c) = trial % 5 ? rng.uniform() - 0.3 : double(rng.uniform_index(3));
    }
    double best = -1e300;
    for (const auto& perm : enumerate_permutations(cols, rows)) {
      double total = 0.0;
      for (int r = 0; r < rows; ++r) total += weights(r, perm[r]);
      best = std::max(best, total);
    }
    CHECK(max_assignment_value(weights) == doctest::Approx(best).epsilon(1e-12));
  }
  CHECK_THROWS_AS(max_assignment_value(Eigen::MatrixXd::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("objective bounds dominate every completion") {
  RngStream rng(43);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 3 + static_cast<int>(rng.uniform_index(4));
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    auto instance = random_instance(2, m, k, rng);
    if (trial % 3 == 0) instance.arm_means.row(1).setConstant(kMinArmMean);
    const auto estimates = ground_truth_estimates(instance);
    const auto utility = trial % 2 ? UtilityFunction::nash() : UtilityFunction::utilitarian();
    Eigen::VectorXd bonus(m);
    for (int j = 0; j < m; ++j) bonus(j) = 0.1 * rng.uniform();
    const Permutation reference = random_permutation(m, k, rng);
    const CufObjective objective(estimates, utility, bonus, trial % 4 < 2 ? &reference : nullptr);
    for (const auto& perm : enumerate_permutations(m, k)) {
      const double value = objective(perm);
      for (int depth = 0; depth <= k; ++depth) {
        const auto prefix = perm.slots().first(static_cast<std::size_t>(depth));
        CHECK(objective.upper_bound(prefix) >= value - 1e-12);
        CHECK(objective.upper_bound(prefix, value + 0.01) >= value - 1e-12);
      }
    }
    const auto best = argmax_exact(m, k, objective);
    CHECK(objective.relaxed_choice().is_valid(m));
    CHECK(objective.relaxed_choice().size() == k);
    if (utility.kind() == UtilityFunction::Kind::kUtilitarian) {
      CHECK(objective.upper_bound({}) == doctest::Approx(best.value).epsilon(1e-12));
      CHECK(objective(objective.relaxed_choice()) == doctest::Approx(best.value).epsilon(1e-12));
    }
  }
}

TEST_CASE("pruned search resolves ties like the exact search") {
  struct Flat {
    double operator()(const Permutation&) const { return 0.25; }
    double upper_bound(std::span<const int>) const { return 0.25; }
  };
  const Permutation hint{3, 1};
  CHECK(argmax_exact_pruned(4, 2, Flat{}, &hint).perm == Permutation{0, 1});
}

TEST_CASE("pruned search skips most of a large space") {
  RngStream rng(41);
  const auto instance = random_instance(3, 20, 4, rng);
  const auto estimates = ground_truth_estimates(instance);
  const CufObjective objective(estimates, UtilityFunction::utilitarian(), Eigen::VectorXd());
  const auto pruned = argmax_exact_pruned(20, 4, objective);
  const auto exact = argmax_exact(20, 4, objective);
  CHECK(pruned.perm == exact.perm);
  CHECK(pruned.evaluated < exact.evaluated / 10);
}

TEST_CASE("sampling at full fraction equals the exact argmax") {
  const auto fixture = ads_fixture();
  RngStream rng(1);
  const auto sampled = argmax_sampled(5, 2, utilitarian_objective(fixture), 1.0, rng);
  const auto exact = argmax_exact(5, 2, utilitarian_objective(fixture));
  CHECK(sampled.perm == exact.perm);
  CHECK(sampled.value == exact.value);
  CHECK(sampled.sampled == 20);
}

TEST_CASE("sampling half of the fixture space") {
  const auto fixture = ads_fixture();
  RngStream rng(2);
  const auto sampled = argmax_sampled(5, 2, utilitarian_objective(fixture), 0.5, rng);
  CHECK(sampled.sampled == 10);
  CHECK(sampled.value <= testing::kUtilitarian23 + 1e-15);
}

TEST_CASE("a tiny fraction evaluates a single uniform permutation") {
  const auto fixture = ads_fixture();
  std::vector<int> hits(20, 0);
  RngStream rng(3);
  const int draws = 20000;
  for (int n = 0; n < draws; ++n) {
    const auto sampled = argmax_sampled(5, 2, utilitarian_objective(fixture), 1e-9, rng);
    REQUIRE(sampled.sampled == 1);
    ++hits[rank_permutation(sampled.perm, 5)];
  }
  for (int h : hits) CHECK(std::abs(h / double(draws) - 0.05) < testing::three_sigma(0.05, draws) * 1.5);
}

TEST_CASE("sampling is deterministic and dominated by the exact value") {
  RngStream seeds(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto instance = random_instance(2, 6, 3, seeds);
    auto objective = utilitarian_objective(instance);
    const double exact = argmax_exact(6, 3, objective).value;
    RngStream a(static_cast<std::uint64_t>(trial)), b(static_cast<std::uint64_t>(trial));
    const auto first = argmax_sampled(6, 3, objective, 0.3, a);
    const auto second = argmax_sampled(6, 3, objective, 0.3, b);
    CHECK(first.perm == second.perm);
    CHECK(first.value <= exact);
  }
}

TEST_CASE("sampling draws distinct permutations below the cap and repeats above it") {
  std::set<Permutation> seen;
  RngStream rng(5);
  int calls = 0;
  auto recording = [&](const Permutation& perm) {
    ++calls;
    seen.insert(perm);
    return 0.0;
  };
  argmax_sampled(6, 3, recording, 0.9, rng);
  CHECK(calls == 108);
  CHECK(seen.size() == 108);

  seen.clear();
  calls = 0;
  argmax_sampled(4, 2, recording, 0.99, rng, 1, 5);
  CHECK(calls == 12);
  CHECK(seen.size() < 12);
}

TEST_CASE("expected suboptimality decreases in the sampling fraction") {
  const auto fixture = ads_fixture();
  auto objective = utilitarian_objective(fixture);
  const double exact = testing::kUtilitarian23;
  double previous = std::numeric_limits<double>::infinity();
  for (double fraction : {0.05, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    double gap = 0.0;
    for (int seed = 0; seed < 1000; ++seed) {
      RngStream rng(static_cast<std::uint64_t>(seed));
      gap += exact - argmax_sampled(5, 2, objective, fraction, rng).value;
    }
    gap /= 1000;
    CHECK(gap <= previous);
    previous = gap;
  }
  CHECK(previous == doctest::Approx(0.0));
}

TEST_CASE("fraction schedules") {
  CHECK(FractionSchedule::constant(0.3)(1) == 0.3);
  CHECK(FractionSchedule::constant(0.3)(1000000) == 0.3);
  const auto ramp = FractionSchedule::ramp(0.2, 100.0);
  CHECK(ramp(0) == doctest::Approx(0.2));
  CHECK(ramp(300) == doctest::Approx(1.0 - 0.8 / 2.0));
  double previous = 0.0;
  for (std::int64_t t = 1; t < 1000000; t *= 3) {
    CHECK(ramp(t) >= previous);
    CHECK(ramp(t) <= 1.0);
    previous = ramp(t);
  }
  CHECK(ramp(100000000) > 0.99);
}

TEST_CASE("optimizer config validation and json") {
  auto config = OptimizerConfig::sampled(FractionSchedule::ramp(0.25, 1e5), 3);
  const auto back = optimizer_config_from_json(to_json(config));
  CHECK(back.kind == OptimizerConfig::Kind::kSampled);
  CHECK(back.schedule.kind == FractionSchedule::Kind::kRamp);
  CHECK(back.schedule.start == 0.25);
  CHECK(back.min_samples == 3);
  config.schedule.start = 0.0;
  CHECK_THROWS_AS(validate(config), std::invalid_argument);
  config.schedule.start = 0.5;
  config.min_samples = 0;
  CHECK_THROWS_AS(validate(config), std::invalid_argument);
  CHECK_THROWS_AS(optimizer_config_from_json({{"kind", "annealing"}}), std::invalid_argument);
  RngStream rng(1);
  CHECK_THROWS_AS(argmax_sampled(5, 2, [](const Permutation&) { return 0.0; }, 0.0, rng), std::invalid_argument);
}

}  // TEST_SUITE
