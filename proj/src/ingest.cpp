#include "posbandit/ingest.hpp"

#include "posbandit/environment.hpp"
#include "posbandit/policies.hpp"

#include <algorithm>
#include <charconv>
#include <string>

namespace posbandit {

std::vector<ClickRecord> generate_log(const ProblemInstance& instance, std::int64_t rounds,
                                      RngStream& rng) {
  require_valid(instance);
  const int m = instance.num_arms();
  const int k_count = instance.num_positions();
  std::vector<ClickRecord> records;
  records.reserve(static_cast<std::size_t>(std::max<std::int64_t>(rounds, 0) * k_count));
  for (std::int64_t t = 0; t < rounds; ++t) {
    const int user = sample_arrival(instance, rng);
    const Permutation perm = init_permutation(t, m, k_count);
    const Feedback feedback = step(instance, user, perm, rng);
    for (int k = 0; k < k_count; ++k) {
      const int clicked = feedback.clicked_arm && *feedback.clicked_arm == perm[k] ? 1 : 0;
      records.push_back({user, perm[k], k, clicked});
    }
  }
  return records;
}

nlohmann::json to_json(const CoverageReport& report) {
  nlohmann::json json;
  const auto& impressions = report.impressions;
  nlohmann::json cells = nlohmann::json::array();
  for (int i = 0; i < impressions.num_user_types(); ++i) {
    nlohmann::json per_type = nlohmann::json::array();
    for (int j = 0; j < impressions.num_arms(); ++j) {
      nlohmann::json per_arm = nlohmann::json::array();
      for (int k = 0; k < impressions.num_positions(); ++k) per_arm.push_back(impressions(i, j, k));
      per_type.push_back(per_arm);
    }
    cells.push_back(per_type);
  }
  json["min_count"] = report.min_count;
  json["impressions"] = cells;
  nlohmann::json uncovered = nlohmann::json::array();
  for (const auto& [i, j, k] : report.uncovered) {
    uncovered.push_back({{"user_type", i}, {"arm", j}, {"position", k}, {"impressions", impressions(i, j, k)}});
  }
  json["uncovered"] = uncovered;
  nlohmann::json unobserved = nlohmann::json::array();
  for (const auto& [i, j] : report.unobserved_arms) unobserved.push_back({{"user_type", i}, {"arm", j}});
  json["unobserved_arms"] = unobserved;
  return json;
}

FitResult fit_instance(std::span<const ClickRecord> records, int num_user_types, int num_arms,
                       int num_positions, std::int64_t min_count) {
  if (records.empty()) throw std::invalid_argument("no records");
  if (num_user_types < 1 || num_arms < 1 || num_positions < 1 || num_positions > num_arms) {
    throw std::invalid_argument("fit_instance: need N, M, K positive and K <= M");
  }
  FitResult result;
  CoverageReport& coverage = result.coverage;
  coverage.min_count = min_count;
  coverage.impressions = CountTensor(num_user_types, num_arms, num_positions);
  coverage.clicks = CountTensor(num_user_types, num_arms, num_positions);

  Eigen::VectorXd per_type = Eigen::VectorXd::Zero(num_user_types);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const ClickRecord& record = records[r];
    if (record.user_type < 0 || record.user_type >= num_user_types || record.arm < 0 ||
        record.arm >= num_arms || record.position < 0 || record.position >= num_positions ||
        (record.clicked != 0 && record.clicked != 1)) {
      throw std::invalid_argument("record " + std::to_string(r) + " is out of range");
    }
    ++coverage.impressions(record.user_type, record.arm, record.position);
    coverage.clicks(record.user_type, record.arm, record.position) += record.clicked;
    per_type(record.user_type) += 1.0;
  }

  ProblemInstance& instance = result.instance;
  instance.arrival_rates = per_type / per_type.sum();
  instance.position_prefs.resize(num_user_types, num_positions);
  instance.arm_means.resize(num_user_types, num_arms);
  for (int i = 0; i < num_user_types; ++i) {
    const Eigen::ArrayXXd shown = coverage.impressions.type_block(i).cast<double>();
    const Eigen::ArrayXXd clicked = coverage.clicks.type_block(i).cast<double>();
    const Eigen::RowVectorXd prefs = normalized_position_profile(clicked / shown);
    instance.position_prefs.row(i) = prefs / prefs.sum();

    const Eigen::VectorXd weighted = shown.matrix() * prefs.transpose();
    const Eigen::VectorXd total_clicks = clicked.rowwise().sum().matrix();
    for (int j = 0; j < num_arms; ++j) {
      for (int k = 0; k < num_positions; ++k) {
        if (coverage.impressions(i, j, k) < min_count) coverage.uncovered.push_back({i, j, k});
      }
      if (weighted(j) > 0.0) {
        instance.arm_means(i, j) = std::clamp(total_clicks(j) / weighted(j), kMinArmMean, 1.0);
      } else {
        instance.arm_means(i, j) = 0.5;
        coverage.unobserved_arms.push_back({i, j});
      }
    }
  }
  return result;
}

LogParseError::LogParseError(std::int64_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

bool parse_field(std::string_view& rest, int& value) {
  const auto start = rest.find_first_not_of(" \t");
  if (start == std::string_view::npos) return false;
  rest.remove_prefix(start);
  const auto [end, error] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
  if (error != std::errc()) return false;
  rest.remove_prefix(static_cast<std::size_t>(end - rest.data()));
  return rest.empty() || rest.front() == '\t' || rest.front() == ' ';
}

}  // namespace

std::vector<ClickRecord> read_click_log(std::istream& in) {
  std::vector<ClickRecord> records;
  std::string line;
  std::int64_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::string_view rest(line);
    ClickRecord record;
    if (!parse_field(rest, record.user_type) || !parse_field(rest, record.arm) ||
        !parse_field(rest, record.position) || !parse_field(rest, record.clicked)) {
      throw LogParseError(number, "expected four integer columns: '" + line + "'");
    }
    if (rest.find_first_not_of(" \t") != std::string_view::npos) {
      throw LogParseError(number, "trailing data: '" + line + "'");
    }
    if (record.user_type < 0 || record.arm < 0 || record.position < 0) {
      throw LogParseError(number, "negative index");
    }
    if (record.clicked != 0 && record.clicked != 1) {
      throw LogParseError(number, "clicked must be 0 or 1");
    }
    records.push_back(record);
  }
  return records;
}

void write_click_log(std::ostream& out, std::span<const ClickRecord> records) {
  for (const auto& record : records) {
    out << record.user_type << '\t' << record.arm << '\t' << record.position << '\t'
        << record.clicked << '\n';
  }
}

}  // namespace posbandit
