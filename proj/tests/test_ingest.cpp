#include "posbandit/ingest.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace posbandit;

namespace {

std::vector<ClickRecord> three_of_ten() {
  std::vector<ClickRecord> records(10, ClickRecord{0, 0, 0, 0});
  for (int r = 0; r < 3; ++r) records[static_cast<std::size_t>(r)].clicked = 1;
  return records;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("three clicks out of ten impressions") {
  const auto fit = fit_instance(three_of_ten(), 1, 1, 1, 5);
  CHECK(fit.instance.arrival_rates(0) == 1.0);
  CHECK(fit.instance.position_prefs(0, 0) == 1.0);
  CHECK(fit.instance.arm_means(0, 0) == doctest::Approx(0.3));
  CHECK(fit.coverage.uncovered.empty());
  CHECK(fit.coverage.impressions(0, 0, 0) == 10);
  CHECK(fit.coverage.clicks(0, 0, 0) == 3);
  CHECK(fit_instance(three_of_ten(), 1, 1, 1).coverage.uncovered.size() == 1);
}

TEST_CASE("empty and out-of-range logs are rejected") {
  const std::vector<ClickRecord> none;
  try {
    fit_instance(none, 1, 1, 1);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()) == "no records");
  }
  const std::vector<ClickRecord> bad = {{0, 0, 1, 0}};
  CHECK_THROWS_AS(fit_instance(bad, 1, 2, 1), std::invalid_argument);
  const std::vector<ClickRecord> unclicked = {{0, 0, 0, 2}};
  CHECK_THROWS_AS(fit_instance(unclicked, 1, 2, 1), std::invalid_argument);
}

TEST_CASE("generated logs") {
  RngStream rng(1);
  CHECK(generate_log(testing::minimal_instance(), 0, rng).empty());
  const auto records = generate_log(testing::minimal_instance(), 10, rng);
  REQUIRE(records.size() == 10);
  for (const auto& record : records) {
    CHECK(record.user_type == 0);
    CHECK(record.arm == 0);
    CHECK(record.position == 0);
  }
}

TEST_CASE("generated click ratios match rho times mu per cell") {
  const auto fixture = ads_fixture();
  RngStream rng(2);
  const auto records = generate_log(fixture, 1000000, rng);
  CHECK(records.size() == 2000000);
  const auto fit = fit_instance(records, 2, 5, 2);
  const auto& shown = fit.coverage.impressions;
  const auto& clicks = fit.coverage.clicks;
  int outside = 0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 5; ++j) {
      for (int k = 0; k < 2; ++k) {
        const double p = fixture.position_prefs(i, k) * fixture.arm_means(i, j);
        const double n = static_cast<double>(shown(i, j, k));
        outside += std::abs(clicks(i, j, k) / n - p) > testing::three_sigma(p, n);
      }
    }
  }
  // 20 cells at 3 sigma: more than one excursion is very unlikely.
  CHECK(outside <= 1);
}

TEST_CASE("fitting a long generated log recovers the fixture") {
  const auto fixture = ads_fixture();
  RngStream rng(3);
  const auto fit = fit_instance(generate_log(fixture, 1000000, rng), 2, 5, 2);
  const auto& instance = fit.instance;
  CHECK(validate(instance).empty());
  CHECK(fit.coverage.uncovered.empty());
  CHECK(fit.coverage.unobserved_arms.empty());
  CHECK((instance.arrival_rates - fixture.arrival_rates).cwiseAbs().maxCoeff() < 0.002);
  CHECK((instance.position_prefs - fixture.position_prefs).cwiseAbs().maxCoeff() < 0.02);
  CHECK((instance.arm_means - fixture.arm_means).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("fit does not depend on record order") {
  const auto fixture = ads_fixture();
  RngStream rng(4);
  auto records = generate_log(fixture, 20000, rng);
  const auto forward = fit_instance(records, 2, 5, 2);
  std::reverse(records.begin(), records.end());
  const auto backward = fit_instance(records, 2, 5, 2);
  CHECK(forward.instance.arrival_rates == backward.instance.arrival_rates);
  CHECK(forward.instance.position_prefs == backward.instance.position_prefs);
  CHECK(forward.instance.arm_means == backward.instance.arm_means);
}

TEST_CASE("fits of sparse logs stay valid and report coverage") {
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto source = random_instance(2, 5, 3, rng);
    const auto rounds = static_cast<std::int64_t>(rng.uniform_index(400)) + 1;
    const auto records = generate_log(source, rounds, rng);
    const auto fit = fit_instance(records, 2, 5, 3, 50);
    CHECK(validate(fit.instance).empty());
    CHECK_FALSE(fit.coverage.uncovered.empty());
  }

  // Type 1 never appears and arm 1 is never shown to type 0.
  const std::vector<ClickRecord> partial = {{0, 0, 0, 1}, {0, 0, 1, 0}, {0, 2, 0, 0}, {0, 2, 1, 1}};
  const auto fit = fit_instance(partial, 2, 3, 2, 1);
  CHECK(validate(fit.instance).empty());
  CHECK(fit.instance.arrival_rates(1) == 0.0);
  CHECK(fit.instance.arm_means(0, 1) == 0.5);
  const auto& unobserved = fit.coverage.unobserved_arms;
  CHECK(std::find(unobserved.begin(), unobserved.end(), std::array<int, 2>{0, 1}) != unobserved.end());
  CHECK(to_json(fit.coverage)["uncovered"].size() == fit.coverage.uncovered.size());
}

TEST_CASE("click log text round-trips") {
  const std::vector<ClickRecord> records = {{0, 1, 0, 1}, {1, 4, 1, 0}, {2, 0, 2, 1}};
  std::ostringstream out;
  write_click_log(out, records);
  CHECK(out.str() == "0\t1\t0\t1\n1\t4\t1\t0\n2\t0\t2\t1\n");
  std::istringstream in(out.str());
  CHECK(read_click_log(in) == records);

  std::istringstream loose("0 1 0 1\r\n\n  \n1\t4\t1\t0");
  CHECK(read_click_log(loose).size() == 2);
}

TEST_CASE("malformed log lines name their line number") {
  for (const std::string& bad : {std::string("0\t1\t0\n"), std::string("0\t1\t0\tyes\n"),
                                 std::string("0\t1\t0\t1\t9\n"), std::string("0\t-1\t0\t1\n"),
                                 std::string("0\t1\t0\t3\n"), std::string("0x\t1\t0\t1\n")}) {
    std::istringstream in("0\t0\t0\t0\n\n" + bad);
    try {
      read_click_log(in);
      FAIL("accepted: " << bad);
    } catch (const LogParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).rfind("line 3:", 0) == 0);
    }
  }
}

}  // TEST_SUITE
