#pragma once

#include "posbandit/estimators.hpp"
#include "posbandit/model.hpp"
#include "posbandit/rng.hpp"

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace posbandit {

// One impression of an offline log: `arm` was shown at `position` to a user
// of type `user_type`.
struct ClickRecord {
  int user_type = 0;
  int arm = 0;
  int position = 0;
  int clicked = 0;

  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

// Simulated offline log. Round t shows init_permutation(t): every (arm,
// position) pair equally often over M rounds. One record per displayed arm.
std::vector<ClickRecord> generate_log(const ProblemInstance& instance, std::int64_t rounds,
                                      RngStream& rng);

inline constexpr std::int64_t kDefaultMinCount = 100;

struct CoverageReport {
  CountTensor impressions;
  CountTensor clicks;
  std::int64_t min_count = kDefaultMinCount;
  // (user_type, arm, position) cells with fewer than min_count impressions.
  std::vector<std::array<int, 3>> uncovered;
  // (user_type, arm) pairs without a single weighted impression; their mean
  // is filled with 0.5.
  std::vector<std::array<int, 2>> unobserved_arms;
};

nlohmann::json to_json(const CoverageReport& report);

struct FitResult {
  ProblemInstance instance;
  CoverageReport coverage;
};

// Builds an instance from a log: arrival rates from record frequencies,
// position preferences by the normalize-and-average rule of the per-cell click
// ratios (arms with an empty cell are left out of the average; uniform when no
// arm qualifies), arm means as clicks over preference-weighted impressions
// clamped to [1e-6, 1]. Throws std::invalid_argument on an empty log or an
// out-of-range record.
FitResult fit_instance(std::span<const ClickRecord> records, int num_user_types, int num_arms,
                       int num_positions, std::int64_t min_count = kDefaultMinCount);

class LogParseError : public std::runtime_error {
 public:
  LogParseError(std::int64_t line, const std::string& what);
  std::int64_t line() const { return line_; }

 private:
  std::int64_t line_;
};

// TSV: user_type, arm, position, clicked per line, no header. Blank lines are
// skipped. Throws LogParseError naming the 1-indexed line.
std::vector<ClickRecord> read_click_log(std::istream& in);
void write_click_log(std::ostream& out, std::span<const ClickRecord> records);

}  // namespace posbandit
