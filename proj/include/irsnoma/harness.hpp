#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "irsnoma/channel.hpp"
#include "irsnoma/clustering.hpp"
#include "irsnoma/mobility.hpp"
#include "irsnoma/noma.hpp"
#include "irsnoma/oracle.hpp"
#include "irsnoma/rl.hpp"
#include "irsnoma/types.hpp"

namespace irsnoma::harness {

enum class Algorithm { Dqn, Tabular, RandomPhase, Oracle };

Algorithm parse_algorithm(std::string_view name);
std::string to_string(Algorithm a);

/// Everything a subcommand needs; mirrors the scenario JSON document.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  channel::ScenarioGeometry geometry;  // user_positions may be empty: sampled
  int user_count = 10;                 // used when no explicit users are given
  channel::RicianConfig rician;
  int resolution_bits = 5;
  double power_dbm = 30.0;
  std::vector<int> cluster_sizes{1, 3, 1, 2, 3};  // empty: cluster by K-GMM
  double alpha_step = 0.05;
  std::vector<double> qos_sinr;  // linear SINR floors, empty = none
  noma::SinrOptions sinr;
  int slots = 16;

  Algorithm algorithm = Algorithm::Dqn;
  std::vector<double> powers_dbm{20, 30, 40, 50, 60, 70, 80, 90};
  std::vector<int> element_counts{1, 2, 3, 4};
  std::vector<std::uint64_t> seeds{1};
  std::string trajectories;  // optional CSV of ground-truth trajectories

  mobility::Algorithm1Config mobility;
  rl::QNetworkConfig network;
  rl::AgentConfig agent;
  rl::EnvConfig env;
  clustering::FitOptions clustering;

  ExperimentConfig();
  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& is);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);
void write_config(std::ostream& os, const ExperimentConfig& cfg);

/// Named sub-seeds derived from one master seed, so each stream (scenario,
/// channel, clustering, agent, ...) can be replayed on its own.
class SeedRegistry {
 public:
  explicit SeedRegistry(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }
  std::uint64_t seed(std::string_view name, std::uint64_t index = 0) const;
  Rng rng(std::string_view name, std::uint64_t index = 0) const { return Rng(seed(name, index)); }

 private:
  std::uint64_t master_;
};

std::uint64_t splitmix64(std::uint64_t x);

// ---------------------------------------------------------------------------
// Trajectory CSV (user, t, x, y)

void write_trajectories(std::ostream& os, const std::vector<mobility::Trajectory>& users);
std::vector<mobility::Trajectory> read_trajectories(std::istream& is);

// ---------------------------------------------------------------------------
// Building blocks shared by the subcommands

/// Starting positions: the configured users, or rejection samples.
std::vector<Eigen::Vector2d> initial_positions(const ExperimentConfig& cfg, const SeedRegistry& seeds);

/// Ground-truth trajectories of `cfg.slots` positions per user.
std::vector<mobility::Trajectory> ground_truth(const ExperimentConfig& cfg, const SeedRegistry& seeds);

channel::ScenarioGeometry geometry_at(const ExperimentConfig& cfg, const std::vector<Eigen::Vector2d>& positions);

/// Consecutive user blocks of the configured cluster sizes.
std::vector<std::vector<int>> fixed_clusters(const std::vector<int>& sizes, int users);

noma::Scenario<double> make_scenario(const ExperimentConfig& cfg, channel::ChannelRealization<double> channels,
                                     std::vector<std::vector<int>> clusters, double power_dbm);

struct Solution {
  bool found = false;  // some configuration passed every constraint
  double sum_rate = 0.0;
  channel::PhaseConfig phase;
  std::vector<RVector<double>> split;
  noma::ClusterPlan<double> plan;
  std::size_t evaluated = 0;
  std::vector<rl::CurvePoint> curve;  // rl algorithms only
};

/// Runs the selected optimizer on one scenario; all randomness from `seed`.
Solution optimize(const noma::Scenario<double>& scenario, const ExperimentConfig& cfg, Algorithm algorithm,
                  std::uint64_t seed);

/// Per-user best phases for the TDMA baseline: exhaustive when within the
/// evaluation guard, coordinate ascent over elements otherwise.
oracle::OmaResult<double> optimize_oma(const noma::Scenario<double>& scenario);

// ---------------------------------------------------------------------------
// Subcommands. Each returns 0, or 2 when no feasible result was produced.

int cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_sweep_power(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_sweep_elements(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_compare_oma(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_oracle(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_cluster(const ExperimentConfig& cfg, const std::filesystem::path& out);
int cmd_predict(const ExperimentConfig& cfg, const std::filesystem::path& out);

}  // namespace irsnoma::harness
