#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "irsnoma/harness.hpp"
#include "irsnoma/version.hpp"

namespace irsnoma::harness {

namespace fs = std::filesystem;

namespace {

/// Writes through a temporary file and renames, so readers never see a
/// partial file.
void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::ostringstream csv(const std::string& columns) {
  std::ostringstream os;
  os << std::setprecision(17) << kCsvHeader << '\n' << columns << '\n';
  return os;
}

std::string join(const std::vector<int>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::vector<int>> cluster_by_csi(const ExperimentConfig& cfg, const channel::ChannelRealization<double>& ch,
                                             Rng rng) {
  const auto csi = clustering::normalize_channels(ch.user_channels);
  const int m = ch.antennas();
  const auto fit = clustering::fit(csi, m, cfg.clustering, rng);
  return clustering::members_from_assignment(fit.assignment, m);
}

std::vector<std::vector<int>> clusters_for(const ExperimentConfig& cfg, const channel::ChannelRealization<double>& ch,
                                           const SeedRegistry& seeds) {
  if (!cfg.cluster_sizes.empty()) return fixed_clusters(cfg.cluster_sizes, ch.user_count());
  return cluster_by_csi(cfg, ch, seeds.rng("clustering"));
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double gain_percent(double noma, double oma) {
  if (oma > 0.0) return 100.0 * (noma - oma) / oma;
  return noma > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace

std::vector<Eigen::Vector2d> initial_positions(const ExperimentConfig& cfg, const SeedRegistry& seeds) {
  if (!cfg.geometry.user_positions.empty()) {
    std::vector<Eigen::Vector2d> out;
    for (const auto& u : cfg.geometry.user_positions) out.push_back(u.head<2>());
    return out;
  }
  Rng rng = seeds.rng("scenario");
  return mobility::rejection_sample_positions(cfg.geometry.region, cfg.mobility.density,
                                              static_cast<std::size_t>(cfg.user_count), rng);
}

std::vector<mobility::Trajectory> ground_truth(const ExperimentConfig& cfg, const SeedRegistry& seeds) {
  if (!cfg.trajectories.empty()) {
    std::ifstream in(cfg.trajectories);
    if (!in) throw IoError("cannot open trajectories " + cfg.trajectories);
    auto users = read_trajectories(in);
    for (auto& tr : users) {
      if (tr.length() < cfg.slots) throw ValidationError(cfg.trajectories + ": fewer positions than slots");
      tr.positions.resize(static_cast<std::size_t>(cfg.slots));
      for (const auto& p : tr.positions) {
        if (!cfg.geometry.region.contains(p)) throw ValidationError(cfg.trajectories + ": position outside region");
      }
    }
    return users;
  }
  const auto starts = initial_positions(cfg, seeds);
  std::vector<mobility::Trajectory> out;
  for (std::size_t u = 0; u < starts.size(); ++u) {
    Rng rng = seeds.rng("motion", u);
    out.push_back(mobility::simulate_motion(starts[u], cfg.slots, cfg.mobility.motion, cfg.geometry.region, rng));
  }
  return out;
}

channel::ScenarioGeometry geometry_at(const ExperimentConfig& cfg, const std::vector<Eigen::Vector2d>& positions) {
  channel::ScenarioGeometry g = cfg.geometry;
  g.user_positions.clear();
  for (std::size_t u = 0; u < positions.size(); ++u) {
    const double z = u < cfg.geometry.user_positions.size() ? cfg.geometry.user_positions[u].z() : 0.0;
    g.user_positions.emplace_back(positions[u].x(), positions[u].y(), z);
  }
  return g;
}

std::vector<std::vector<int>> fixed_clusters(const std::vector<int>& sizes, int users) {
  std::vector<std::vector<int>> out;
  int next = 0;
  for (int s : sizes) {
    std::vector<int> c;
    for (int i = 0; i < s; ++i) c.push_back(next++);
    out.push_back(std::move(c));
  }
  if (next != users) throw ValidationError("cluster sizes must add up to the user count");
  return out;
}

noma::Scenario<double> make_scenario(const ExperimentConfig& cfg, channel::ChannelRealization<double> channels,
                                     std::vector<std::vector<int>> clusters, double power_dbm) {
  noma::Scenario<double> s;
  s.channels = std::move(channels);
  s.resolution_bits = cfg.resolution_bits;
  s.total_power = channel::dbm_to_watts(power_dbm);
  s.clusters = std::move(clusters);
  s.qos_floor = cfg.qos_sinr;
  s.options = cfg.sinr;
  s.validate();
  return s;
}

Solution optimize(const noma::Scenario<double>& scenario, const ExperimentConfig& cfg, Algorithm algorithm,
                  std::uint64_t seed) {
  Solution sol;
  switch (algorithm) {
    case Algorithm::Oracle: {
      const auto r = oracle::brute_force_optimum(scenario, oracle::SearchSpace::for_scenario(scenario, cfg.alpha_step));
      sol.found = r.found();
      sol.sum_rate = r.sum_rate;
      sol.phase = r.phase;
      sol.split = r.split;
      sol.evaluated = r.evaluated;
      break;
    }
    case Algorithm::RandomPhase: {
      Rng rng(seed);
      sol.phase = channel::PhaseConfig::zeros(scenario.elements(), scenario.resolution_bits);
      std::uniform_int_distribution<int> level(0, sol.phase.levels() - 1);
      for (auto& n : sol.phase.indices) n = level(rng);
      sol.split = noma::ClusterPlan<double>::uniform(scenario.user_count(), scenario.clusters).power_split();
      const auto ev = noma::evaluate(scenario, sol.phase, sol.split);
      sol.found = ev.feasible();
      sol.sum_rate = ev.sum_rate();
      sol.evaluated = 1;
      break;
    }
    case Algorithm::Dqn:
    case Algorithm::Tabular: {
      rl::Environment env(scenario, cfg.env);
      Rng rng(seed);
      rl::TrainResult r;
      if (algorithm == Algorithm::Dqn) {
        auto approx = rl::QApproximator::random(rl::network_config_for(env, cfg.network), rng);
        r = rl::train_agent(env, approx, cfg.agent, rng());
      } else {
        rl::TabularQ table(env.action_count());
        r = rl::train_tabular_agent(env, table, cfg.network, cfg.agent, rng());
      }
      sol.found = r.found;
      sol.sum_rate = r.best_sum_rate;
      sol.phase = r.best_phase;
      sol.split = r.best_split;
      sol.evaluated = r.visited;
      sol.curve = std::move(r.curve);
      break;
    }
  }
  if (sol.found) sol.plan = noma::evaluate(scenario, sol.phase, sol.split).plan;
  return sol;
}

oracle::OmaResult<double> optimize_oma(const noma::Scenario<double>& scenario) {
  const oracle::SearchSpace space{scenario.elements(), scenario.resolution_bits, {}, 1.0};
  if (space.phase_count() <= oracle::kMaxEvaluations) return oracle::brute_force_oma(scenario);

  const int users = scenario.user_count();
  oracle::OmaResult<double> r;
  for (int u = 0; u < users; ++u) {
    auto phase = channel::PhaseConfig::zeros(scenario.elements(), scenario.resolution_bits);
    const auto& h = scenario.channels.user_channels[u];
    auto gain = [&](const channel::PhaseConfig& p) {
      return channel::effective_channel(h, p, scenario.channels.g_matrix).norm();
    };
    double best = gain(phase);
    for (int sweep = 0; sweep < 100; ++sweep) {
      bool improved = false;
      for (int k = 0; k < phase.elements(); ++k) {
        const int keep = phase.indices[k];
        int best_level = keep;
        for (int n = 0; n < phase.levels(); ++n) {
          phase.indices[k] = n;
          const double g = gain(phase);
          if (g > best) {
            best = g;
            best_level = n;
            improved = true;
          }
        }
        phase.indices[k] = best_level;
      }
      if (!improved) break;
    }
    r.phases.push_back(phase);
    r.gains.push_back(best);
  }
  r.sum_rate = noma::oma_tdma_sum_rate(r.gains, scenario.total_power, scenario.channels.noise_variance);
  return r;
}

int cmd_generate(const ExperimentConfig& cfg, const fs::path& out) {
  const SeedRegistry seeds(cfg.seed);
  const auto truth = ground_truth(cfg, seeds);
  ExperimentConfig scenario = cfg;
  std::vector<Eigen::Vector2d> starts;
  for (const auto& tr : truth) starts.push_back(tr.positions.front());
  scenario.geometry = geometry_at(cfg, starts);
  scenario.trajectories.clear();

  std::ostringstream js;
  write_config(js, scenario);
  write_file(out / "scenario.json", js.str());
  std::ostringstream tr;
  write_trajectories(tr, truth);
  write_file(out / "trajectories.csv", tr.str());
  return 0;
}

int cmd_pipeline(const ExperimentConfig& cfg, const fs::path& out) {
  const SeedRegistry seeds(cfg.seed);
  const auto truth = ground_truth(cfg, seeds);
  const int n0 = std::min(cfg.mobility.n0, cfg.slots);
  std::vector<mobility::Trajectory> observed;
  for (const auto& tr : truth) {
    observed.push_back({{tr.positions.begin(), tr.positions.begin() + n0}, tr.timestep});
  }
  auto a1 = cfg.mobility;
  a1.n0 = n0;
  a1.n_max = cfg.slots;
  const auto predicted = mobility::run_algorithm1(observed, cfg.geometry.region, a1, seeds.seed("mobility"));

  auto os = csv("slot,algorithm,source,sum_rate,feasible,occupancy,decoding_orders,position_error");
  const int m = cfg.geometry.bs_antennas;
  bool any = false;
  for (int t = 0; t < cfg.slots; ++t) {
    try {
      std::vector<Eigen::Vector2d> pos;
      double err = 0.0;
      for (std::size_t u = 0; u < truth.size(); ++u) {
        pos.push_back(predicted.positions[u].positions[t]);
        err += (pos.back() - truth[u].positions[t]).norm();
      }
      err /= static_cast<double>(truth.size());
      const auto geo = geometry_at(cfg, pos);
      Rng ch_rng = seeds.rng("channel", t);
      auto ch = channel::sample_channels<double>(geo, cfg.rician, ch_rng);
      auto clusters = cluster_by_csi(cfg, ch, seeds.rng("clustering", t));
      const auto scenario = make_scenario(cfg, std::move(ch), clusters, cfg.power_dbm);
      const auto sol = optimize(scenario, cfg, cfg.algorithm, seeds.seed("agent", t));
      any = any || sol.found;

      std::vector<int> occupancy;
      for (const auto& c : clusters) occupancy.push_back(static_cast<int>(c.size()));
      std::string orders;
      const auto order = sol.found
                             ? sol.plan.decoding_order()
                             : noma::prepare_beamforming(scenario, channel::PhaseConfig::zeros(
                                                                       scenario.elements(), scenario.resolution_bits))
                                   .decoding_order;
      for (int c = 0; c < m; ++c) {
        if (c) orders += '|';
        orders += join(order[c], ' ');
      }
      os << t << ',' << to_string(cfg.algorithm) << ',' << (t < n0 ? "observed" : "predicted") << ','
         << sol.sum_rate << ',' << (sol.found ? 1 : 0) << ',' << join(occupancy, ';') << ',' << orders << ',' << err
         << '\n';
    } catch (const ValidationError& e) {
      throw ValidationError("slot " + std::to_string(t) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("slot " + std::to_string(t) + ": " + e.what());
    }
  }
  write_file(out / "pipeline.csv", os.str());
  return any ? 0 : 2;
}

int cmd_sweep_power(const ExperimentConfig& cfg, const fs::path& out) {
  auto rows = csv("power_dbm,algorithm,seed,sum_rate,feasible");
  std::map<double, std::vector<double>> by_power;
  bool any = false;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedRegistry seeds(seed);
    const auto geo = geometry_at(cfg, initial_positions(cfg, seeds));
    Rng ch_rng = seeds.rng("channel");
    const auto ch = channel::sample_channels<double>(geo, cfg.rician, ch_rng);
    const auto clusters = clusters_for(cfg, ch, seeds);
    for (std::size_t i = 0; i < cfg.powers_dbm.size(); ++i) {
      const double p = cfg.powers_dbm[i];
      const auto sol = optimize(make_scenario(cfg, ch, clusters, p), cfg, cfg.algorithm, seeds.seed("agent", i));
      any = any || sol.found;
      rows << p << ',' << to_string(cfg.algorithm) << ',' << seed << ',' << sol.sum_rate << ','
           << (sol.found ? 1 : 0) << '\n';
      by_power[p].push_back(sol.sum_rate);
    }
  }
  auto summary = csv("power_dbm,algorithm,mean_sum_rate");
  for (double p : cfg.powers_dbm) summary << p << ',' << to_string(cfg.algorithm) << ',' << mean(by_power[p]) << '\n';
  write_file(out / "sweep_power.csv", rows.str());
  write_file(out / "sweep_power_summary.csv", summary.str());
  return any ? 0 : 2;
}

int cmd_sweep_elements(const ExperimentConfig& cfg, const fs::path& out) {
  auto rows = csv("K,power_dbm,algorithm,seed,sum_rate,feasible");
  std::map<int, std::vector<double>> by_k;
  const int k_max = *std::max_element(cfg.element_counts.begin(), cfg.element_counts.end());
  bool any = false;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedRegistry seeds(seed);
    auto geo = geometry_at(cfg, initial_positions(cfg, seeds));
    geo.irs_elements = k_max;
    Rng ch_rng = seeds.rng("channel");
    // one realization at the largest K; smaller surfaces use its leading elements
    const auto full = channel::sample_channels<double>(geo, cfg.rician, ch_rng);
    const auto clusters = clusters_for(cfg, full, seeds);
    for (std::size_t i = 0; i < cfg.element_counts.size(); ++i) {
      const int k = cfg.element_counts[i];
      const auto sol = optimize(make_scenario(cfg, full.truncated(k), clusters, cfg.power_dbm), cfg, cfg.algorithm,
                                seeds.seed("agent", i));
      any = any || sol.found;
      rows << k << ',' << cfg.power_dbm << ',' << to_string(cfg.algorithm) << ',' << seed << ',' << sol.sum_rate
           << ',' << (sol.found ? 1 : 0) << '\n';
      by_k[k].push_back(sol.sum_rate);
    }
  }
  auto summary = csv("K,power_dbm,mean_sum_rate");
  for (int k : cfg.element_counts) summary << k << ',' << cfg.power_dbm << ',' << mean(by_k[k]) << '\n';
  write_file(out / "sweep_elements.csv", rows.str());
  write_file(out / "sweep_elements_summary.csv", summary.str());
  return any ? 0 : 2;
}

int cmd_compare_oma(const ExperimentConfig& cfg, const fs::path& out) {
  auto rows = csv("power_dbm,noma_rate,oma_rate,gain_percent");
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_power;
  bool any = false;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedRegistry seeds(seed);
    const auto geo = geometry_at(cfg, initial_positions(cfg, seeds));
    Rng ch_rng = seeds.rng("channel");
    const auto ch = channel::sample_channels<double>(geo, cfg.rician, ch_rng);
    const auto clusters = clusters_for(cfg, ch, seeds);
    for (std::size_t i = 0; i < cfg.powers_dbm.size(); ++i) {
      const double p = cfg.powers_dbm[i];
      const auto scenario = make_scenario(cfg, ch, clusters, p);
      const auto noma = optimize(scenario, cfg, cfg.algorithm, seeds.seed("agent", i));
      const double oma = optimize_oma(scenario).sum_rate;
      any = any || noma.found;
      rows << p << ',' << noma.sum_rate << ',' << oma << ',' << gain_percent(noma.sum_rate, oma) << '\n';
      by_power[p].first.push_back(noma.sum_rate);
      by_power[p].second.push_back(oma);
    }
  }
  auto summary = csv("power_dbm,noma_rate,oma_rate,gain_percent");
  for (double p : cfg.powers_dbm) {
    const double n = mean(by_power[p].first);
    const double o = mean(by_power[p].second);
    summary << p << ',' << n << ',' << o << ',' << gain_percent(n, o) << '\n';
  }
  write_file(out / "compare_oma.csv", rows.str());
  write_file(out / "compare_oma_summary.csv", summary.str());
  return any ? 0 : 2;
}

int cmd_oracle(const ExperimentConfig& cfg, const fs::path& out) {
  const SeedRegistry seeds(cfg.seed);
  const auto geo = geometry_at(cfg, initial_positions(cfg, seeds));
  Rng ch_rng = seeds.rng("channel");
  const auto ch = channel::sample_channels<double>(geo, cfg.rician, ch_rng);
  const auto scenario = make_scenario(cfg, ch, clusters_for(cfg, ch, seeds), cfg.power_dbm);
  const auto space = oracle::SearchSpace::for_scenario(scenario, cfg.alpha_step);
  const auto r = oracle::brute_force_optimum(scenario, space);

  nlohmann::json j;
  j["version"] = kVersion;
  j["found"] = r.found();
  j["phase_indices"] = r.phase.indices;
  j["resolution_bits"] = scenario.resolution_bits;
  j["clusters"] = scenario.clusters;
  j["splits"] = nlohmann::json::array();
  for (const auto& s : r.split) j["splits"].push_back(std::vector<double>(s.data(), s.data() + s.size()));
  j["sum_rate"] = r.sum_rate;
  j["feasible_count"] = r.feasible_count;
  j["evaluated"] = r.evaluated;
  j["wall_seconds"] = r.wall_seconds;
  write_file(out / "oracle.json", j.dump(2) + "\n");
  if (!r.found()) return 2;

  const auto ev = noma::evaluate(scenario, r.phase, r.split);
  std::ostringstream rates;
  rates << kCsvHeader << '\n';
  noma::write_rate_csv(rates, ev.plan, ev.report);
  write_file(out / "oracle_rates.csv", rates.str());
  return 0;
}

int cmd_cluster(const ExperimentConfig& cfg, const fs::path& out) {
  const SeedRegistry seeds(cfg.seed);
  const auto geo = geometry_at(cfg, initial_positions(cfg, seeds));
  Rng ch_rng = seeds.rng("channel");
  const auto ch = channel::sample_channels<double>(geo, cfg.rician, ch_rng);
  const auto csi = clustering::normalize_channels(ch.user_channels);
  Rng rng = seeds.rng("clustering");
  const auto fit = clustering::fit(csi, ch.antennas(), cfg.clustering, rng);

  auto os = csv("user,cluster,responsibility,channel_norm");
  for (int u = 0; u < ch.user_count(); ++u) {
    os << u << ',' << fit.assignment[u] << ',' << fit.responsibilities.chi(u, fit.assignment[u]) << ','
       << csi.raw_norms[u] << '\n';
  }
  write_file(out / "clusters.csv", os.str());
  auto trace = csv("iteration,log_likelihood");
  for (std::size_t i = 0; i < fit.log_likelihood_trace.size(); ++i) trace << i << ',' << fit.log_likelihood_trace[i] << '\n';
  write_file(out / "em_trace.csv", trace.str());
  std::cout << "clusters: " << join(fit.occupancy(), ' ') << "  iterations: " << fit.iterations
            << (fit.converged ? " (converged)" : " (iteration cap)") << '\n';
  return 0;
}

int cmd_predict(const ExperimentConfig& cfg, const fs::path& out) {
  const SeedRegistry seeds(cfg.seed);
  const auto truth = ground_truth(cfg, seeds);
  const int n0 = std::min(cfg.mobility.n0, cfg.slots);
  std::vector<mobility::Trajectory> observed;
  for (const auto& tr : truth) observed.push_back({{tr.positions.begin(), tr.positions.begin() + n0}, tr.timestep});
  auto a1 = cfg.mobility;
  a1.n0 = n0;
  a1.n_max = cfg.slots;
  const auto result = mobility::run_algorithm1(observed, cfg.geometry.region, a1, seeds.seed("mobility"));

  auto os = csv("user,t,x,y,true_x,true_y,predicted");
  for (std::size_t u = 0; u < truth.size(); ++u) {
    for (int t = 0; t < cfg.slots; ++t) {
      const auto& p = result.positions[u].positions[t];
      const auto& q = truth[u].positions[t];
      os << u << ',' << t << ',' << p.x() << ',' << p.y() << ',' << q.x() << ',' << q.y() << ',' << (t >= n0 ? 1 : 0)
         << '\n';
    }
  }
  write_file(out / "predictions.csv", os.str());

  const int from = std::max(n0, cfg.mobility.forecaster.window_len);
  if (result.rounds > 0 && from < cfg.slots) {
    const double model = mobility::one_step_mse(result.forecaster, truth, from);
    const double persistence = mobility::persistence_mse(truth, from);
    auto summary = csv("rounds,horizon_start,model_mse,persistence_mse");
    summary << result.rounds << ',' << from << ',' << model << ',' << persistence << '\n';
    write_file(out / "predict_summary.csv", summary.str());
    std::cout << "one-step MSE " << model << " (persistence " << persistence << ")\n";
  }
  return 0;
}

}  // namespace irsnoma::harness
