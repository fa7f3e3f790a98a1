#include "posbandit/experiment.hpp"

#include "posbandit/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace posbandit {

namespace {

ProblemInstance synthetic_instance_from_json(const nlohmann::json& json) {
  RngStream rng(json.value("seed", std::uint64_t{0}), 3);
  RewardModel reward = RewardModel::bernoulli();
  if (json.contains("reward_model")) reward = reward_model_from_json(json.at("reward_model"));
  return random_instance(json.at("num_user_types").get<int>(), json.at("num_arms").get<int>(),
                         json.at("num_positions").get<int>(), rng, json.value("mu_low", 0.05),
                         json.value("mu_high", 0.95), reward, json.value("concentration", 1.0));
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& json,
                                             const std::filesystem::path& base_dir) {
  ExperimentConfig config;
  try {
    if (json.contains("instance")) {
      config.instance = instance_from_json(json.at("instance"));
    } else if (json.contains("instance_file")) {
      std::filesystem::path file = json.at("instance_file").get<std::string>();
      if (file.is_relative()) file = base_dir / file;
      config.instance = load_instance(file);
    } else if (json.contains("synthetic_instance")) {
      config.instance = synthetic_instance_from_json(json.at("synthetic_instance"));
    } else {
      throw std::invalid_argument("config needs instance, instance_file or synthetic_instance");
    }
    require_valid(config.instance);

    for (const auto& policy : json.at("policies")) config.policies.push_back(policy_spec_from_json(policy));
    if (config.policies.empty()) throw std::invalid_argument("config needs at least one policy");
    std::set<std::string> ids;
    for (const auto& policy : config.policies) {
      if (!ids.insert(policy.id).second) throw std::invalid_argument("duplicate policy id '" + policy.id + "'");
    }

    config.horizon = json.at("horizon").get<std::int64_t>();
    if (config.horizon < 1) throw std::invalid_argument("horizon must be >= 1");

    const auto& seeds = json.at("seeds");
    if (seeds.is_array()) {
      config.seeds = seeds.get<std::vector<std::uint64_t>>();
    } else {
      const auto base = seeds.at("base_seed").get<std::uint64_t>();
      const auto count = seeds.at("count").get<std::int64_t>();
      for (std::int64_t r = 0; r < count; ++r) config.seeds.push_back(run_seed(base, static_cast<std::uint64_t>(r)));
    }
    if (config.seeds.empty()) throw std::invalid_argument("config needs at least one seed");

    if (json.contains("checkpoints")) {
      const auto& points = json.at("checkpoints");
      if (points.is_array()) {
        config.checkpoints = points.get<std::vector<std::int64_t>>();
      } else if (points.value("kind", "geometric") != "geometric") {
        throw std::invalid_argument("unknown checkpoint schedule");
      }
    }
    config.output = json.value("output", std::string("results.csv"));
    if (config.output.is_relative() && !base_dir.empty()) config.output = base_dir / config.output;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config " + path.string());
  nlohmann::json json;
  try {
    in >> json;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(json, path.parent_path());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    seeds.push_back(std::stoull(item, &used));
    if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
  const auto started = std::chrono::steady_clock::now();
  std::map<std::string, OracleSolution> equal_oracles;
  OracleSolution personalized;
  bool need_personalized = false;
  for (const auto& policy : config.policies) {
    if (regret_notion(policy) == RegretNotion::kEqual) {
      const UtilityFunction utility = regret_utility(policy);
      if (!equal_oracles.contains(utility.name())) equal_oracles.emplace(utility.name(), solve_oracle(config.instance, utility));
    } else {
      need_personalized = true;
    }
  }
  if (need_personalized) {
    personalized = equal_oracles.empty() ? solve_personalized_oracle(config.instance)
                                         : equal_oracles.begin()->second;
  }

  struct Task {
    const PolicySpec* policy;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  // Seed-major, so slow phases of the machine hit every policy alike.
  for (const auto seed : config.seeds) {
    for (const auto& policy : config.policies) tasks.push_back({&policy, seed});
  }

  std::vector<RegretTrace> traces(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t index = next.fetch_add(1);
      if (index >= tasks.size() || failed.load()) return;
      const Task& task = tasks[index];
      try {
        const OracleSolution* oracle = &personalized;
        if (regret_notion(*task.policy) == RegretNotion::kEqual) {
          oracle = &equal_oracles.at(regret_utility(*task.policy).name());
        }
        traces[index] = run(config.instance, *task.policy, config.horizon, task.seed,
                            config.checkpoints.empty() ? geometric_checkpoints(config.horizon)
                                                       : config.checkpoints,
                            oracle);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }
  if (error) std::rethrow_exception(error);

  std::sort(traces.begin(), traces.end(), [](const RegretTrace& a, const RegretTrace& b) {
    return a.policy_id != b.policy_id ? a.policy_id < b.policy_id : a.seed < b.seed;
  });
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ExperimentResult result;
  result.summary = summarize(config, traces, elapsed);
  result.traces = std::move(traces);
  return result;
}

nlohmann::json summarize(const ExperimentConfig& config, const std::vector<RegretTrace>& traces,
                         double total_wall_clock_s) {
  nlohmann::json summary;
  summary["horizon"] = config.horizon;
  summary["seeds"] = config.seeds.size();
  nlohmann::json policies = nlohmann::json::object();
  for (const auto& spec : config.policies) {
    std::vector<RegretTrace> mine;
    for (const auto& trace : traces) {
      if (trace.policy_id == spec.id) mine.push_back(trace);
    }
    if (mine.empty()) continue;
    double regret = 0.0;
    double rate = 0.0;
    double wall = 0.0;
    double init = 0.0;
    for (const auto& trace : mine) {
      const Checkpoint& last = trace.checkpoints.back();
      regret += last.cumulative_regret;
      rate += last.optimal_action_rate;
      wall += last.wall_clock_s;
      init += static_cast<double>(trace.init_rounds);
    }
    const double runs = static_cast<double>(mine.size());
    nlohmann::json entry;
    entry["runs"] = mine.size();
    entry["regret_notion"] = regret_notion(spec) == RegretNotion::kEqual ? "equal" : "personalized";
    entry["mean_final_regret"] = regret / runs;
    entry["mean_optimal_action_rate"] = rate / runs;
    entry["mean_wall_clock_s"] = wall / runs;
    entry["mean_init_rounds"] = init / runs;

    nlohmann::json ratios = nlohmann::json::array();
    for (const auto& point : mine.front().checkpoints) {
      const std::int64_t t2 = 2 * point.t;
      const bool everywhere = std::all_of(mine.begin(), mine.end(), [&](const RegretTrace& trace) {
        return trace.at(point.t) != nullptr && trace.at(t2) != nullptr;
      });
      if (!everywhere) continue;
      const auto stats = sublinearity_check(mine, point.t, t2);
      ratios.push_back({{"t1", point.t},
                        {"t2", t2},
                        {"mean_ratio", std::isnan(stats.mean_ratio) ? nlohmann::json(nullptr)
                                                                    : nlohmann::json(stats.mean_ratio)},
                        {"included", stats.included},
                        {"excluded", stats.excluded}});
    }
    entry["sublinearity"] = ratios;
    policies[spec.id] = entry;
  }
  summary["policies"] = policies;
  summary["total_wall_clock_s"] = total_wall_clock_s;
  return summary;
}

std::filesystem::path summary_path_for(const std::filesystem::path& csv) {
  std::filesystem::path summary = csv;
  summary.replace_extension(".summary.json");
  return summary;
}

void write_results(const ExperimentResult& result, const std::filesystem::path& csv,
                   const std::filesystem::path& summary) {
  auto temporary = [](const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    return tmp;
  };
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  if (summary.has_parent_path()) std::filesystem::create_directories(summary.parent_path());
  {
    std::ofstream out(temporary(csv));
    write_csv(out, std::span<const RegretTrace>(result.traces));
    if (!out) throw std::runtime_error("cannot write " + csv.string());
  }
  {
    std::ofstream out(temporary(summary));
    out << result.summary.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + summary.string());
  }
  std::filesystem::rename(temporary(csv), csv);
  std::filesystem::rename(temporary(summary), summary);
}

}  // namespace posbandit
