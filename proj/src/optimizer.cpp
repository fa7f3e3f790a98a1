#include "posbandit/optimizer.hpp"

namespace posbandit {

std::uint64_t count_permutations(int num_arms, int num_positions) {
  if (num_positions < 0 || num_positions > num_arms) return 0;
  std::uint64_t count = 1;
  for (int f = num_arms - num_positions + 1; f <= num_arms; ++f) {
    const auto factor = static_cast<std::uint64_t>(f);
    if (count > std::numeric_limits<std::uint64_t>::max() / factor) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    count *= factor;
  }
  return count;
}

EnumerationCapExceeded::EnumerationCapExceeded(std::uint64_t count, std::uint64_t cap)
    : std::runtime_error("search space of " + std::to_string(count) +
                         " permutations exceeds the enumeration cap of " + std::to_string(cap) +
                         "; use the sampled optimizer or a smaller K") {}

NonFiniteObjective::NonFiniteObjective(const Permutation& perm)
    : std::domain_error("objective is not finite at permutation " + to_string(perm)) {}

void require_enumerable(int num_arms, int num_positions, std::uint64_t cap) {
  if (num_positions < 1 || num_positions > num_arms) {
    throw std::invalid_argument("need 1 <= K <= M, got K=" + std::to_string(num_positions) +
                                " M=" + std::to_string(num_arms));
  }
  const std::uint64_t count = count_permutations(num_arms, num_positions);
  if (count > cap) throw EnumerationCapExceeded(count, cap);
}

KPermutationEnumerator::KPermutationEnumerator(int num_arms, int num_positions)
    : num_arms_(num_arms), used_(static_cast<std::size_t>(std::max(num_arms, 0)), 0) {
  if (num_positions < 1 || num_positions > num_arms) {
    throw std::invalid_argument("KPermutationEnumerator: need 1 <= K <= M");
  }
  std::vector<int> slots(static_cast<std::size_t>(num_positions));
  for (int k = 0; k < num_positions; ++k) {
    slots[static_cast<std::size_t>(k)] = k;
    used_[static_cast<std::size_t>(k)] = 1;
  }
  current_ = Permutation(std::move(slots));
}

void KPermutationEnumerator::advance() {
  if (done_) return;
  const int k_count = current_.size();
  for (int k = k_count - 1; k >= 0; --k) {
    const int arm = current_[k];
    used_[static_cast<std::size_t>(arm)] = 0;
    int next = arm + 1;
    while (next < num_arms_ && used_[static_cast<std::size_t>(next)]) ++next;
    if (next < num_arms_) {
      current_[k] = next;
      used_[static_cast<std::size_t>(next)] = 1;
      int fill = 0;
      for (int tail = k + 1; tail < k_count; ++tail) {
        while (used_[static_cast<std::size_t>(fill)]) ++fill;
        current_[tail] = fill;
        used_[static_cast<std::size_t>(fill)] = 1;
      }
      return;
    }
  }
  done_ = true;
}

KPermutationRange enumerate_permutations(int num_arms, int num_positions, std::uint64_t cap) {
  require_enumerable(num_arms, num_positions, cap);
  return KPermutationRange(num_arms, num_positions);
}

void unrank_permutation_into(std::uint64_t rank, int num_arms, int num_positions, std::uint64_t space,
                             Permutation& out) {
  if (out.size() != num_positions) out = Permutation(std::vector<int>(static_cast<std::size_t>(num_positions)));
  // Completions below position k: (M-k-1)!/(M-K)!.
  std::uint64_t block = space / static_cast<std::uint64_t>(num_arms);
  for (int k = 0; k < num_positions; ++k) {
    const auto digit = static_cast<int>(rank / block);
    rank %= block;
    // The digit-th arm not used by slots 0..k-1.
    int arm = digit;
    for (int below = -1; below != arm;) {
      below = arm;
      int taken = 0;
      for (int p = 0; p < k; ++p) taken += out[p] <= below;
      arm = digit + taken;
    }
    out[k] = arm;
    if (k + 1 < num_positions) block /= static_cast<std::uint64_t>(num_arms - k - 1);
  }
}

Permutation unrank_permutation(std::uint64_t rank, int num_arms, int num_positions) {
  const std::uint64_t space = count_permutations(num_arms, num_positions);
  if (num_positions < 1 || rank >= space) {
    throw std::out_of_range("unrank_permutation: rank " + std::to_string(rank) + " out of range");
  }
  Permutation out;
  unrank_permutation_into(rank, num_arms, num_positions, space, out);
  return out;
}

std::uint64_t rank_permutation(const Permutation& perm, int num_arms) {
  if (!perm.is_valid(num_arms) || perm.size() < 1) {
    throw std::invalid_argument("rank_permutation: invalid permutation " + to_string(perm));
  }
  const int k_count = perm.size();
  std::uint64_t block = count_permutations(num_arms, k_count) / static_cast<std::uint64_t>(num_arms);
  std::vector<char> used(static_cast<std::size_t>(num_arms), 0);
  std::uint64_t rank = 0;
  for (int k = 0; k < k_count; ++k) {
    std::uint64_t digit = 0;
    for (int arm = 0; arm < perm[k]; ++arm) {
      if (!used[static_cast<std::size_t>(arm)]) ++digit;
    }
    used[static_cast<std::size_t>(perm[k])] = 1;
    rank += digit * block;
    if (k + 1 < k_count) block /= static_cast<std::uint64_t>(num_arms - k - 1);
  }
  return rank;
}

Permutation random_permutation(int num_arms, int num_positions, RngStream& rng) {
  std::vector<int> arms(static_cast<std::size_t>(num_arms));
  for (int j = 0; j < num_arms; ++j) arms[static_cast<std::size_t>(j)] = j;
  for (int k = 0; k < num_positions; ++k) {
    const auto pick = static_cast<std::size_t>(k) +
                      static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(num_arms - k)));
    std::swap(arms[static_cast<std::size_t>(k)], arms[pick]);
  }
  arms.resize(static_cast<std::size_t>(num_positions));
  return Permutation(std::move(arms));
}

double max_assignment_value(const Eigen::Ref<const Eigen::MatrixXd>& weights,
                            std::vector<int>* row_to_col) {
  const auto n = weights.rows();
  const auto m = weights.cols();
  if (row_to_col != nullptr) row_to_col->assign(static_cast<std::size_t>(n), -1);
  if (n == 0) return 0.0;
  if (n > m) throw std::invalid_argument("max_assignment_value: more rows than columns");
  if (n == 1) {
    Eigen::Index col = 0;
    const double best = weights.row(0).maxCoeff(&col);
    if (row_to_col != nullptr) (*row_to_col)[0] = static_cast<int>(col);
    return best;
  }
  // Potentials u (rows), v (columns) and the row matched to each column, all
  // 1-indexed with column 0 as the virtual root. Minimizes -weights.
  const double inf = std::numeric_limits<double>::infinity();
  thread_local std::vector<double> u, v, min_slack;
  thread_local std::vector<Eigen::Index> match, way;
  thread_local std::vector<char> used;
  u.assign(static_cast<std::size_t>(n + 1), 0.0);
  v.assign(static_cast<std::size_t>(m + 1), 0.0);
  match.assign(static_cast<std::size_t>(m + 1), 0);
  way.assign(static_cast<std::size_t>(m + 1), 0);
  min_slack.resize(static_cast<std::size_t>(m + 1));
  used.resize(static_cast<std::size_t>(m + 1));
  for (Eigen::Index row = 1; row <= n; ++row) {
    match[0] = row;
    Eigen::Index col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(col0)] = 1;
      const Eigen::Index row0 = match[static_cast<std::size_t>(col0)];
      double delta = inf;
      Eigen::Index col1 = 0;
      for (Eigen::Index col = 1; col <= m; ++col) {
        const auto c = static_cast<std::size_t>(col);
        if (used[c]) continue;
        const double slack = -weights(row0 - 1, col - 1) - u[static_cast<std::size_t>(row0)] - v[c];
        if (slack < min_slack[c]) {
          min_slack[c] = slack;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = col;
        }
      }
      for (Eigen::Index col = 0; col <= m; ++col) {
        const auto c = static_cast<std::size_t>(col);
        if (used[c]) {
          u[static_cast<std::size_t>(match[c])] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[static_cast<std::size_t>(col0)] != 0);
    do {
      const Eigen::Index col1 = way[static_cast<std::size_t>(col0)];
      match[static_cast<std::size_t>(col0)] = match[static_cast<std::size_t>(col1)];
      col0 = col1;
    } while (col0 != 0);
  }
  double total = 0.0;
  for (Eigen::Index col = 1; col <= m; ++col) {
    const Eigen::Index row = match[static_cast<std::size_t>(col)];
    if (row == 0) continue;
    total += weights(row - 1, col - 1);
    if (row_to_col != nullptr) (*row_to_col)[static_cast<std::size_t>(row - 1)] = static_cast<int>(col - 1);
  }
  return total;
}

std::uint64_t sample_budget(std::uint64_t space_size, double fraction, std::uint64_t min_samples,
                            bool without_replacement) {
  const double wanted = std::ceil(fraction * static_cast<double>(space_size));
  std::uint64_t budget = wanted >= 1.8e19 ? std::numeric_limits<std::uint64_t>::max()
                                          : static_cast<std::uint64_t>(wanted);
  budget = std::max(budget, min_samples);
  if (without_replacement) budget = std::min(budget, space_size);
  return budget;
}

double FractionSchedule::operator()(std::int64_t t) const {
  if (kind == Kind::kConstant) return start;
  const double ramp = 1.0 - (1.0 - start) / std::sqrt(1.0 + static_cast<double>(t) / tau);
  return std::clamp(ramp, start, 1.0);
}

void validate(const OptimizerConfig& config) {
  if (config.cap == 0) throw std::invalid_argument("optimizer cap must be positive");
  if (config.kind == OptimizerConfig::Kind::kBruteForce) return;
  if (config.min_samples < 1) throw std::invalid_argument("min_samples must be >= 1");
  if (!(config.schedule.start > 0.0 && config.schedule.start <= 1.0)) {
    throw std::invalid_argument("sampling fraction must lie in (0, 1]");
  }
  if (config.schedule.kind == FractionSchedule::Kind::kRamp && !(config.schedule.tau > 0.0)) {
    throw std::invalid_argument("ramp tau must be positive");
  }
}

nlohmann::json to_json(const OptimizerConfig& config) {
  nlohmann::json json;
  json["cap"] = config.cap;
  json["prune_above"] = config.prune_above;
  if (config.kind == OptimizerConfig::Kind::kBruteForce) {
    json["kind"] = "brute_force";
    return json;
  }
  json["kind"] = "sampled";
  json["min_samples"] = config.min_samples;
  if (config.schedule.kind == FractionSchedule::Kind::kConstant) {
    json["schedule"] = {{"kind", "constant"}, {"fraction", config.schedule.start}};
  } else {
    json["schedule"] = {{"kind", "ramp"}, {"start", config.schedule.start}, {"tau", config.schedule.tau}};
  }
  return json;
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& json) {
  OptimizerConfig config;
  const std::string kind = json.value("kind", "brute_force");
  if (kind == "sampled") {
    config.kind = OptimizerConfig::Kind::kSampled;
    config.min_samples = json.value("min_samples", std::uint64_t{1});
    const auto& schedule = json.at("schedule");
    const std::string schedule_kind = schedule.at("kind").get<std::string>();
    if (schedule_kind == "constant") {
      config.schedule = FractionSchedule::constant(schedule.at("fraction").get<double>());
    } else if (schedule_kind == "ramp") {
      config.schedule = FractionSchedule::ramp(schedule.at("start").get<double>(),
                                               schedule.at("tau").get<double>());
    } else {
      throw std::invalid_argument("unknown fraction schedule '" + schedule_kind + "'");
    }
  } else if (kind != "brute_force") {
    throw std::invalid_argument("unknown optimizer kind '" + kind + "'");
  }
  config.cap = json.value("cap", kDefaultEnumerationCap);
  config.prune_above = json.value("prune_above", std::uint64_t{5000});
  validate(config);
  return config;
}

}  // namespace posbandit
