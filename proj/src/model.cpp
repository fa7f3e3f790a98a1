#include "posbandit/model.hpp"

#include "posbandit/rng.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace posbandit {

std::optional<int> Permutation::position_of(int arm) const {
  for (int k = 0; k < size(); ++k) {
    if (slots_[static_cast<std::size_t>(k)] == arm) return k;
  }
  return std::nullopt;
}

bool Permutation::is_valid(int num_arms) const {
  std::vector<bool> seen(static_cast<std::size_t>(std::max(num_arms, 0)), false);
  for (int arm : slots_) {
    if (arm < 0 || arm >= num_arms) return false;
    if (seen[static_cast<std::size_t>(arm)]) return false;
    seen[static_cast<std::size_t>(arm)] = true;
  }
  return true;
}

std::string to_string(const Permutation& perm) {
  std::ostringstream out;
  out << '[';
  for (int k = 0; k < perm.size(); ++k) out << (k ? "," : "") << perm[k];
  out << ']';
  return out.str();
}

UtilityFunction parse_utility(const std::string& name) {
  if (name == "utilitarian") return UtilityFunction::utilitarian();
  if (name == "nash") return UtilityFunction::nash();
  throw std::invalid_argument("unknown utility '" + name + "' (expected utilitarian or nash)");
}

std::vector<Violation> validate(const ProblemInstance& instance) {
  std::vector<Violation> out;
  auto add = [&out](const auto&... parts) {
    std::ostringstream msg;
    (msg << ... << parts);
    out.push_back({msg.str()});
  };

  const auto n = instance.arrival_rates.size();
  const auto k = instance.position_prefs.cols();
  const auto m = instance.arm_means.cols();
  if (n == 0) add("num_user_types must be positive");
  if (m == 0) add("num_arms must be positive");
  if (k == 0) add("num_positions must be positive");
  if (k > m) add("num_positions ", k, " exceeds num_arms ", m);
  if (instance.position_prefs.rows() != n) {
    add("position_prefs has ", instance.position_prefs.rows(), " rows, expected ", n);
  }
  if (instance.arm_means.rows() != n) {
    add("arm_means has ", instance.arm_means.rows(), " rows, expected ", n);
  }
  if (!out.empty()) return out;

  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = instance.arrival_rates(i);
    if (!(lambda >= 0.0 && lambda <= 1.0)) add("arrival_rates[", i, "] = ", lambda, " outside [0,1]");
  }
  const double lambda_sum = instance.arrival_rates.sum();
  if (!(std::abs(lambda_sum - 1.0) <= kNormalizationTolerance)) {
    add("arrival_rates sum to ", lambda_sum);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index pos = 0; pos < k; ++pos) {
      const double rho = instance.position_prefs(i, pos);
      if (!(rho >= 0.0 && rho <= 1.0)) {
        add("position_prefs[", i, "][", pos, "] = ", rho, " outside [0,1]");
      }
    }
    const double row_sum = instance.position_prefs.row(i).sum();
    if (!(std::abs(row_sum - 1.0) <= kNormalizationTolerance)) {
      add("position_prefs row ", i, " sums to ", row_sum);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const double mu = instance.arm_means(i, j);
      if (!(mu >= kMinArmMean && mu <= 1.0)) {
        add("arm_means[", i, "][", j, "] = ", mu, " outside [", kMinArmMean, ",1]");
      }
    }
  }

  if (instance.reward_model.kind == RewardModel::Kind::kBeta &&
      !(instance.reward_model.concentration > 0.0)) {
    add("beta reward concentration must be positive, got ", instance.reward_model.concentration);
  }
  return out;
}

void require_valid(const ProblemInstance& instance) {
  const auto violations = validate(instance);
  if (violations.empty()) return;
  std::string message = "invalid instance:";
  for (const auto& v : violations) message += "\n  " + v.message;
  throw std::invalid_argument(message);
}

namespace {

void check_perm(const ProblemInstance& instance, const Permutation& perm) {
  if (perm.size() != instance.num_positions()) {
    throw std::out_of_range("permutation has " + std::to_string(perm.size()) +
                            " slots, instance has " +
                            std::to_string(instance.num_positions()) + " positions");
  }
  if (!perm.is_valid(instance.num_arms())) {
    throw std::out_of_range("invalid permutation " + to_string(perm));
  }
}

}  // namespace

double expected_user_value(const ProblemInstance& instance, int user_type, const Permutation& perm) {
  if (user_type < 0 || user_type >= instance.num_user_types()) {
    throw std::out_of_range("user type " + std::to_string(user_type) + " out of range");
  }
  check_perm(instance, perm);
  return ranked_value(instance.position_prefs.row(user_type), instance.arm_means.row(user_type),
                      perm);
}

double cuf_value(const ProblemInstance& instance, const UtilityFunction& utility,
                 const Permutation& perm) {
  check_perm(instance, perm);
  return collective_value(instance.arrival_rates, instance.position_prefs, instance.arm_means,
                          utility, perm);
}

namespace {

Eigen::VectorXd dirichlet(int size, double concentration, RngStream& rng) {
  Eigen::VectorXd draw(size);
  for (int i = 0; i < size; ++i) {
    draw(i) = concentration == 1.0 ? rng.exponential() : rng.gamma(concentration);
  }
  return draw / draw.sum();
}

}  // namespace

ProblemInstance random_instance(int num_user_types, int num_arms, int num_positions,
                                RngStream& rng, double mu_low, double mu_high,
                                RewardModel reward_model, double concentration) {
  if (num_user_types <= 0 || num_arms <= 0 || num_positions <= 0 || num_positions > num_arms) {
    throw std::invalid_argument("random_instance: need N, M, K positive and K <= M");
  }
  if (!(concentration > 0.0)) throw std::invalid_argument("random_instance: concentration must be positive");
  ProblemInstance instance;
  instance.arrival_rates = dirichlet(num_user_types, concentration, rng);
  instance.position_prefs.resize(num_user_types, num_positions);
  for (int i = 0; i < num_user_types; ++i) {
    instance.position_prefs.row(i) = dirichlet(num_positions, concentration, rng).transpose();
  }
  instance.arm_means.resize(num_user_types, num_arms);
  for (int i = 0; i < num_user_types; ++i) {
    for (int j = 0; j < num_arms; ++j) {
      instance.arm_means(i, j) = mu_low + (mu_high - mu_low) * rng.uniform();
    }
  }
  instance.reward_model = reward_model;
  return instance;
}

ProblemInstance ads_fixture() {
  ProblemInstance instance;
  instance.arrival_rates.resize(2);
  instance.arrival_rates << 0.52, 0.48;
  instance.position_prefs.resize(2, 2);
  instance.position_prefs << 0.323, 0.677,
                             0.416, 0.584;
  instance.arm_means.resize(2, 5);
  instance.arm_means << 0.357, 0.471, 0.604, 0.808, 0.564,
                        0.247, 0.327, 0.491, 0.490, 0.303;
  return instance;
}

nlohmann::json to_json(const RewardModel& model) {
  if (model.kind == RewardModel::Kind::kBernoulli) return {{"kind", "bernoulli"}};
  return {{"kind", "beta"}, {"concentration", model.concentration}};
}

RewardModel reward_model_from_json(const nlohmann::json& json) {
  const std::string kind = json.at("kind").get<std::string>();
  if (kind == "bernoulli") return RewardModel::bernoulli();
  if (kind == "beta") return RewardModel::beta(json.at("concentration").get<double>());
  throw std::invalid_argument("unknown reward_model kind '" + kind + "'");
}

nlohmann::json to_json(const Permutation& perm) {
  return nlohmann::json(std::vector<int>(perm.slots().begin(), perm.slots().end()));
}

namespace {

nlohmann::json matrix_rows(const Eigen::MatrixXd& matrix) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) row.push_back(matrix(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Accepts either nested rows or a flat row-major array.
Eigen::MatrixXd matrix_from_json(const nlohmann::json& json, Eigen::Index rows, Eigen::Index cols,
                                 const char* name) {
  Eigen::MatrixXd out(rows, cols);
  if (!json.is_array()) throw std::invalid_argument(std::string(name) + " must be an array");
  const bool nested = !json.empty() && json.front().is_array();
  if (nested) {
    if (static_cast<Eigen::Index>(json.size()) != rows) {
      throw std::invalid_argument(std::string(name) + " has wrong number of rows");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = json.at(static_cast<std::size_t>(r));
      if (static_cast<Eigen::Index>(row.size()) != cols) {
        throw std::invalid_argument(std::string(name) + " row " + std::to_string(r) +
                                    " has wrong length");
      }
      for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  } else {
    if (static_cast<Eigen::Index>(json.size()) != rows * cols) {
      throw std::invalid_argument(std::string(name) + " has wrong number of entries");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        out(r, c) = json.at(static_cast<std::size_t>(r * cols + c)).get<double>();
      }
    }
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const ProblemInstance& instance) {
  nlohmann::json json;
  json["num_user_types"] = instance.num_user_types();
  json["num_arms"] = instance.num_arms();
  json["num_positions"] = instance.num_positions();
  json["arrival_rates"] = std::vector<double>(instance.arrival_rates.data(),
                                              instance.arrival_rates.data() + instance.arrival_rates.size());
  json["position_prefs"] = matrix_rows(instance.position_prefs);
  json["arm_means"] = matrix_rows(instance.arm_means);
  json["reward_model"] = to_json(instance.reward_model);
  return json;
}

ProblemInstance instance_from_json(const nlohmann::json& json) {
  const int n = json.at("num_user_types").get<int>();
  const int m = json.at("num_arms").get<int>();
  const int k = json.at("num_positions").get<int>();
  if (n <= 0 || m <= 0 || k <= 0) throw std::invalid_argument("instance dimensions must be positive");
  ProblemInstance instance;
  const auto rates = json.at("arrival_rates").get<std::vector<double>>();
  if (static_cast<int>(rates.size()) != n) {
    throw std::invalid_argument("arrival_rates length does not match num_user_types");
  }
  instance.arrival_rates = Eigen::Map<const Eigen::VectorXd>(rates.data(), n);
  instance.position_prefs = matrix_from_json(json.at("position_prefs"), n, k, "position_prefs");
  instance.arm_means = matrix_from_json(json.at("arm_means"), n, m, "arm_means");
  if (json.contains("reward_model")) {
    instance.reward_model = reward_model_from_json(json.at("reward_model"));
  }
  return instance;
}

std::string dump_instance(const ProblemInstance& instance) { return to_json(instance).dump(2); }

ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file " + path.string());
  return instance_from_json(nlohmann::json::parse(in));
}

void save_instance(const ProblemInstance& instance, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file " + path.string());
  out << dump_instance(instance) << '\n';
}

}  // namespace posbandit
