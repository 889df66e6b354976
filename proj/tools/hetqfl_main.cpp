// Command line front end. Two subcommands:
//   hetqfl run -c config.json [--seed N] [--algo name...] [--out dir] [--quiet]
//   hetqfl compare RUN_DIR RUN_DIR... [--out comparison.csv]
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetqfl/config.hpp"
#include "hetqfl/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"heterogeneous quantum federated learning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_override = 0;
  std::string out_override;
  std::vector<std::string> algo_override;
  bool quiet = false;
  bool save_models = false;
  auto* run_cmd = app.add_subcommand("run", "run experiments from a config");
  run_cmd->add_option("-c,--config", config_path, "JSON experiment config")
      ->required();
  auto* seed_opt = run_cmd->add_option(
      "--seed", seed_override, "replace the config seed list with one seed");
  auto* out_opt =
      run_cmd->add_option("--out", out_override, "override output directory");
  run_cmd->add_option("--algo", algo_override,
                      "override the algorithm list (repeatable)");
  run_cmd->add_flag("--quiet", quiet, "suppress per-round progress");
  run_cmd->add_flag("--save-models", save_models,
                    "write final global model checkpoints");

  std::vector<std::string> run_dirs;
  std::string compare_out = "comparison.csv";
  auto* compare_cmd =
      app.add_subcommand("compare", "compare finished run directories");
  compare_cmd->add_option("dirs", run_dirs, "algorithm output directories")
      ->expected(-2);
  compare_cmd->add_option("--out", compare_out, "comparison CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (run_cmd->parsed()) {
    hetqfl::cli::ExperimentConfig config;
    try {
      config = hetqfl::cli::parse_config(config_path);
      if (seed_opt->count() > 0) config.spec.seeds = {seed_override};
      if (out_opt->count() > 0) config.output_dir = out_override;
      if (!algo_override.empty()) {
        config.algorithms.clear();
        for (const auto& name : algo_override) {
          const auto algo = hetqfl::fed::algorithm_from_name(name);
          for (const auto existing : config.algorithms)
            if (existing == algo)
              throw hetqfl::config_error("--algo repeats '" + name + "'");
          config.algorithms.push_back(algo);
        }
      }
      if (quiet) config.quiet = true;
      if (save_models) config.save_models = true;
    } catch (const hetqfl::config_error& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
    return hetqfl::cli::run(config);
  }
  return hetqfl::cli::compare(run_dirs, compare_out);
}
