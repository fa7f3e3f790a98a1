#include "posbandit/experiment.hpp"
#include "posbandit/harness.hpp"
#include "posbandit/ingest.hpp"
#include "posbandit/model.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFault = 2;

struct SimulateArgs {
  std::string config;
  std::string out;
  int jobs = 1;
  std::string seeds;
  std::int64_t horizon = 0;
};

struct OracleArgs {
  std::string instance;
  std::string utility = "utilitarian";
};

struct IngestArgs {
  std::string log;
  std::string out;
  int types = 0;
  int arms = 0;
  int positions = 0;
  std::int64_t min_count = posbandit::kDefaultMinCount;
};

int cmd_simulate(const SimulateArgs& args) {
  posbandit::ExperimentConfig config;
  try {
    config = posbandit::load_experiment_config(args.config);
    if (!args.out.empty()) config.output = args.out;
    if (!args.seeds.empty()) config.seeds = posbandit::parse_seed_list(args.seeds);
    if (args.horizon > 0) config.horizon = args.horizon;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto result = posbandit::run_experiment(config, args.jobs);
    const auto summary = posbandit::summary_path_for(config.output);
    posbandit::write_results(result, config.output, summary);
    std::cout << "wrote " << config.output.string() << " and " << summary.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitOk;
}

int cmd_oracle(const OracleArgs& args) {
  posbandit::ProblemInstance instance;
  posbandit::UtilityFunction utility = posbandit::UtilityFunction::utilitarian();
  try {
    instance = posbandit::load_instance(args.instance);
    posbandit::require_valid(instance);
    utility = posbandit::parse_utility(args.utility);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto solution = posbandit::solve_oracle(instance, utility);
    std::cout << posbandit::to_json(solution).dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitOk;
}

int cmd_ingest(const IngestArgs& args) {
  std::vector<posbandit::ClickRecord> records;
  try {
    std::ifstream in(args.log);
    if (!in) throw std::invalid_argument("cannot read log " + args.log);
    records = posbandit::read_click_log(in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto fit = posbandit::fit_instance(records, args.types, args.arms, args.positions, args.min_count);
    const auto report = posbandit::to_json(fit.coverage);
    if (!fit.coverage.uncovered.empty()) {
      std::cerr << "warning: " << fit.coverage.uncovered.size() << " cells have fewer than "
                << args.min_count << " impressions\n";
    }
    if (args.out.empty()) {
      std::cout << nlohmann::json{{"instance", posbandit::to_json(fit.instance)}, {"coverage", report}}.dump(2)
                << '\n';
      return kExitOk;
    }
    posbandit::save_instance(fit.instance, args.out);
    std::filesystem::path coverage_path(args.out);
    coverage_path.replace_extension(".coverage.json");
    std::ofstream cov(coverage_path);
    cov << report.dump(2) << '\n';
    if (!cov) throw std::runtime_error("cannot write " + coverage_path.string());
    std::cout << "wrote " << args.out << " and " << coverage_path.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online learning to rank under the position-based click model"};
  app.require_subcommand(1);

  SimulateArgs simulate;
  auto* sim = app.add_subcommand("simulate", "Run every (policy, seed) pair of an experiment config");
  sim->add_option("--config", simulate.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", simulate.out, "Results CSV (overrides the config)");
  sim->add_option("--jobs", simulate.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--seeds", simulate.seeds, "Comma-separated run seeds (overrides the config)");
  sim->add_option("--horizon", simulate.horizon, "Rounds per run (overrides the config)")
      ->check(CLI::PositiveNumber);

  OracleArgs oracle;
  auto* orc = app.add_subcommand("oracle", "Print the optimal rankings of an instance");
  orc->add_option("--instance", oracle.instance, "Instance JSON")->required()->check(CLI::ExistingFile);
  orc->add_option("--utility", oracle.utility, "Collective utility")
      ->check(CLI::IsMember({"utilitarian", "nash"}));

  IngestArgs ingest;
  auto* ing = app.add_subcommand("ingest", "Fit an instance to a TSV click log");
  ing->add_option("--log", ingest.log, "Click log (user_type, arm, position, clicked)")
      ->required()
      ->check(CLI::ExistingFile);
  ing->add_option("--types", ingest.types, "Number of user types N")->required()->check(CLI::PositiveNumber);
  ing->add_option("--arms", ingest.arms, "Number of arms M")->required()->check(CLI::PositiveNumber);
  ing->add_option("--positions", ingest.positions, "Number of positions K")
      ->required()
      ->check(CLI::PositiveNumber);
  ing->add_option("--min-count", ingest.min_count, "Impressions per cell to count as covered")
      ->check(CLI::NonNegativeNumber);
  ing->add_option("--out", ingest.out, "Instance JSON; the coverage report goes next to it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*sim) return cmd_simulate(simulate);
  if (*orc) return cmd_oracle(oracle);
  return cmd_ingest(ingest);
}
