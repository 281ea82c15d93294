// irsnoma-lab: command-line front end for the IRS/NOMA experiments.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "irsnoma/harness.hpp"
#include "irsnoma/version.hpp"

namespace h = irsnoma::harness;

int main(int argc, char** argv) {
  CLI::App app{"Simulation and optimization lab for IRS-aided MISO-NOMA downlinks"};
  app.set_version_flag("--version", std::string("irsnoma-lab ") + irsnoma::kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<std::string> algorithm;
  app.add_option("--config", config_path, "Scenario JSON file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed (sweeps: replaces the seed list)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--algorithm", algorithm, "dqn | tabular | random-phase | oracle");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const h::ExperimentConfig&, const std::filesystem::path&);
  };
  const Command commands[] = {
      {"generate", "Write scenario.json and ground-truth trajectories.csv", h::cmd_generate},
      {"pipeline", "Per-slot prediction, clustering and optimization", h::cmd_pipeline},
      {"sweep-power", "Sum rate versus transmit power", h::cmd_sweep_power},
      {"sweep-elements", "Sum rate versus IRS element count", h::cmd_sweep_elements},
      {"compare-oma", "NOMA versus TDMA sum rate", h::cmd_compare_oma},
      {"oracle", "Exhaustive optimum of one scenario", h::cmd_oracle},
      {"cluster", "K-GMM clustering of one channel realization", h::cmd_cluster},
      {"predict", "Train the position forecaster and score it", h::cmd_predict},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    h::ExperimentConfig cfg = config_path.empty() ? h::ExperimentConfig{} : h::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.seeds = {*seed};
    }
    if (algorithm) cfg.algorithm = h::parse_algorithm(*algorithm);
    cfg.validate();
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) {
        const int status = c.run(cfg, out_dir);
        if (status == 2) std::cerr << "irsnoma-lab: no feasible result\n";
        return status;
      }
    }
  } catch (const irsnoma::ValidationError& e) {
    std::cerr << "irsnoma-lab: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "irsnoma-lab: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
