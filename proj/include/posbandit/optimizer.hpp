#pragma once

#include "posbandit/model.hpp"
#include "posbandit/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <iterator>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace posbandit {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

// M!/(M-K)!, saturating at UINT64_MAX.
std::uint64_t count_permutations(int num_arms, int num_positions);

class EnumerationCapExceeded : public std::runtime_error {
 public:
  EnumerationCapExceeded(std::uint64_t count, std::uint64_t cap);
};

class NonFiniteObjective : public std::domain_error {
 public:
  explicit NonFiniteObjective(const Permutation& perm);
};

// Throws std::invalid_argument unless 1 <= K <= M, and EnumerationCapExceeded
// when the search space is larger than `cap`.
void require_enumerable(int num_arms, int num_positions, std::uint64_t cap);

// Walks the K-permutations of [0, M) in lexicographic order of their slots.
class KPermutationEnumerator {
 public:
  KPermutationEnumerator(int num_arms, int num_positions);

  const Permutation& current() const { return current_; }
  bool done() const { return done_; }
  // Advances to the lexicographic successor; sets done() after the last one.
  void advance();

 private:
  int num_arms_;
  Permutation current_;
  std::vector<char> used_;
  bool done_ = false;
};

// Input range over all K-permutations, for range-for loops.
class KPermutationRange {
 public:
  class iterator {
   public:
    using value_type = Permutation;
    using difference_type = std::ptrdiff_t;
    using reference = const Permutation&;
    using iterator_category = std::input_iterator_tag;

    iterator() = default;
    explicit iterator(KPermutationEnumerator* source) : source_(source) {}
    reference operator*() const { return source_->current(); }
    iterator& operator++() {
      source_->advance();
      return *this;
    }
    void operator++(int) { ++*this; }
    friend bool operator==(const iterator& it, std::default_sentinel_t) {
      return it.source_ == nullptr || it.source_->done();
    }

   private:
    KPermutationEnumerator* source_ = nullptr;
  };

  KPermutationRange(int num_arms, int num_positions) : enumerator_(num_arms, num_positions) {}
  iterator begin() { return iterator(&enumerator_); }
  std::default_sentinel_t end() { return {}; }

 private:
  KPermutationEnumerator enumerator_;
};

// All K-permutations in lexicographic order. Throws like require_enumerable.
KPermutationRange enumerate_permutations(int num_arms, int num_positions,
                                         std::uint64_t cap = kDefaultEnumerationCap);

// Lexicographic rank <-> permutation, ranks in [0, M!/(M-K)!).
Permutation unrank_permutation(std::uint64_t rank, int num_arms, int num_positions);
// Same, writing into `out` (resized to K); `space` is M!/(M-K)!. No range check.
void unrank_permutation_into(std::uint64_t rank, int num_arms, int num_positions, std::uint64_t space,
                             Permutation& out);
std::uint64_t rank_permutation(const Permutation& perm, int num_arms);

// Uniform K-permutation by a partial Fisher-Yates shuffle of the arms.
Permutation random_permutation(int num_arms, int num_positions, RngStream& rng);

// Largest total weight of a matching that gives every row a distinct column.
// Needs rows <= cols. Hungarian method, O(rows^2 cols). When `row_to_col` is
// given it receives the matched column of every row.
double max_assignment_value(const Eigen::Ref<const Eigen::MatrixXd>& weights,
                            std::vector<int>* row_to_col = nullptr);

struct ArgmaxResult {
  Permutation perm;
  double value = -std::numeric_limits<double>::infinity();
  std::uint64_t evaluated = 0;
};

namespace detail {

// Ties go to the lexicographically smaller permutation, independent of the
// order candidates are visited in.
inline bool improves(double value, const Permutation& perm, const ArgmaxResult& best) {
  return value > best.value || (value == best.value && perm < best.perm);
}

template <typename Objective>
double checked_eval(Objective& objective, const Permutation& perm) {
  const double value = static_cast<double>(objective(perm));
  if (!std::isfinite(value)) throw NonFiniteObjective(perm);
  return value;
}

}  // namespace detail

// Objective-maximal K-permutation by full enumeration. Ties are broken by the
// lexicographic order of the slots.
template <typename Objective>
ArgmaxResult argmax_exact(int num_arms, int num_positions, Objective&& objective,
                          std::uint64_t cap = kDefaultEnumerationCap) {
  require_enumerable(num_arms, num_positions, cap);
  ArgmaxResult best;
  for (KPermutationEnumerator it(num_arms, num_positions); !it.done(); it.advance()) {
    const double value = detail::checked_eval(objective, it.current());
    ++best.evaluated;
    if (value > best.value || best.evaluated == 1) {
      best.value = value;
      best.perm = it.current();
    }
  }
  return best;
}

// An objective that can bound every completion of a prefix of slots.
template <typename Objective>
concept PrefixBoundedObjective =
    requires(const Objective& objective, const Permutation& perm, std::span<const int> prefix) {
      { objective(perm) } -> std::convertible_to<double>;
      { objective.upper_bound(prefix) } -> std::convertible_to<double>;
    };

// Same result as argmax_exact, visiting fewer leaves: a subtree is skipped when
// the objective's upper bound for its prefix is below the incumbent by more
// than a rounding slack. `incumbent`, when given, seeds the search. Objectives
// may also offer upper_bound(prefix, threshold), which is allowed to return any
// value below threshold once it knows the subtree is beaten.
template <PrefixBoundedObjective Objective>
ArgmaxResult argmax_exact_pruned(int num_arms, int num_positions, const Objective& objective,
                                 const Permutation* incumbent = nullptr,
                                 std::uint64_t cap = kDefaultEnumerationCap) {
  require_enumerable(num_arms, num_positions, cap);
  ArgmaxResult best;
  if (incumbent != nullptr && incumbent->size() == num_positions &&
      incumbent->is_valid(num_arms)) {
    best.value = detail::checked_eval(objective, *incumbent);
    best.perm = *incumbent;
    ++best.evaluated;
  }

  Permutation slots(std::vector<int>(static_cast<std::size_t>(num_positions), 0));
  std::vector<char> used(static_cast<std::size_t>(num_arms), 0);
  const int last = num_positions - 1;

  auto search = [&](auto&& self, int depth) -> void {
    for (int arm = 0; arm < num_arms; ++arm) {
      if (used[static_cast<std::size_t>(arm)]) continue;
      slots[depth] = arm;
      if (depth == last) {
        const double value = detail::checked_eval(objective, slots);
        ++best.evaluated;
        if (detail::improves(value, slots, best)) {
          best.value = value;
          best.perm = slots;
        }
        continue;
      }
      const double threshold = best.value - 1e-9 * (1.0 + std::abs(best.value));
      const auto prefix = slots.slots().first(static_cast<std::size_t>(depth) + 1);
      double bound;
      if constexpr (requires { objective.upper_bound(prefix, threshold); }) {
        bound = objective.upper_bound(prefix, threshold);
      } else {
        bound = objective.upper_bound(prefix);
      }
      if (bound < threshold) continue;
      used[static_cast<std::size_t>(arm)] = 1;
      self(self, depth + 1);
      used[static_cast<std::size_t>(arm)] = 0;
    }
  };
  search(search, 0);
  return best;
}

struct SampledArgmaxResult {
  Permutation perm;
  double value = -std::numeric_limits<double>::infinity();
  std::uint64_t sampled = 0;
};

// Number of permutations argmax_sampled evaluates:
// max(min_samples, ceil(fraction * M!/(M-K)!)), capped at the space size when
// sampling without replacement.
std::uint64_t sample_budget(std::uint64_t space_size, double fraction, std::uint64_t min_samples,
                            bool without_replacement);

// Best of a uniform sample of K-permutations. Without replacement (distinct
// lexicographic ranks, unranked on the fly) when the space fits under `cap`,
// with replacement otherwise. A budget covering the whole space reduces to
// argmax_exact. Ties go to the lexicographically smaller permutation.
template <typename Objective>
SampledArgmaxResult argmax_sampled(int num_arms, int num_positions, Objective&& objective,
                                   double fraction, RngStream& rng, std::uint64_t min_samples = 1,
                                   std::uint64_t cap = kDefaultEnumerationCap) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("argmax_sampled: fraction must lie in (0, 1]");
  }
  if (min_samples == 0) throw std::invalid_argument("argmax_sampled: min_samples must be >= 1");
  if (num_positions < 1 || num_positions > num_arms) {
    throw std::invalid_argument("argmax_sampled: need 1 <= K <= M");
  }
  const std::uint64_t space = count_permutations(num_arms, num_positions);
  const bool without_replacement = space <= cap;
  const std::uint64_t budget = sample_budget(space, fraction, min_samples, without_replacement);

  SampledArgmaxResult best;
  if (without_replacement && budget == space) {
    auto exact = argmax_exact(num_arms, num_positions, objective, cap);
    return {std::move(exact.perm), exact.value, exact.evaluated};
  }

  ArgmaxResult incumbent;
  auto consider = [&](const Permutation& perm) {
    const double value = detail::checked_eval(objective, perm);
    if (detail::improves(value, perm, incumbent)) {
      incumbent.value = value;
      incumbent.perm = perm;
    }
  };

  if (without_replacement) {
    // Floyd's algorithm: `budget` distinct ranks in [0, space).
    Permutation perm(std::vector<int>(static_cast<std::size_t>(num_positions), 0));
    auto draw = [&](auto&& seen, auto&& mark) {
      for (std::uint64_t j = space - budget; j < space; ++j) {
        std::uint64_t r = rng.uniform_index(j + 1);
        if (seen(r)) r = j;
        mark(r);
        unrank_permutation_into(r, num_arms, num_positions, space, perm);
        consider(perm);
      }
    };
    if (budget <= 32) {
      std::vector<std::uint64_t> taken;
      taken.reserve(static_cast<std::size_t>(budget));
      draw([&](std::uint64_t r) { return std::find(taken.begin(), taken.end(), r) != taken.end(); },
           [&](std::uint64_t r) { taken.push_back(r); });
    } else if (space <= 4096) {
      std::vector<char> taken(static_cast<std::size_t>(space), 0);
      draw([&](std::uint64_t r) { return taken[r] != 0; }, [&](std::uint64_t r) { taken[r] = 1; });
    } else {
      std::unordered_set<std::uint64_t> taken;
      taken.reserve(static_cast<std::size_t>(budget));
      draw([&](std::uint64_t r) { return taken.contains(r); }, [&](std::uint64_t r) { taken.insert(r); });
    }
  } else {
    for (std::uint64_t s = 0; s < budget; ++s) {
      consider(random_permutation(num_arms, num_positions, rng));
    }
  }
  best.perm = std::move(incumbent.perm);
  best.value = incumbent.value;
  best.sampled = budget;
  return best;
}

// Sampling fraction as a function of the round t >= 1.
struct FractionSchedule {
  enum class Kind {
    kConstant,  // start
    kRamp,      // 1 - (1 - start) / sqrt(1 + t / tau), increasing to 1
  };

  Kind kind = Kind::kConstant;
  double start = 1.0;
  double tau = 1.0;

  static FractionSchedule constant(double fraction) { return {Kind::kConstant, fraction, 1.0}; }
  static FractionSchedule ramp(double start, double tau) { return {Kind::kRamp, start, tau}; }

  double operator()(std::int64_t t) const;
};

struct OptimizerConfig {
  enum class Kind { kBruteForce, kSampled };

  Kind kind = Kind::kBruteForce;
  FractionSchedule schedule;          // sampled only
  std::uint64_t min_samples = 1;      // sampled only
  std::uint64_t cap = kDefaultEnumerationCap;
  // Exact searches over spaces larger than this use argmax_exact_pruned when
  // the objective supports it.
  std::uint64_t prune_above = 5000;

  static OptimizerConfig brute_force() { return {}; }
  static OptimizerConfig sampled(FractionSchedule schedule, std::uint64_t min_samples = 1) {
    OptimizerConfig config;
    config.kind = Kind::kSampled;
    config.schedule = schedule;
    config.min_samples = min_samples;
    return config;
  }
};

// Throws std::invalid_argument on out-of-range schedule values or min_samples.
void validate(const OptimizerConfig& config);

nlohmann::json to_json(const OptimizerConfig& config);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& json);

}  // namespace posbandit
