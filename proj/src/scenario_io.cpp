#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "irsnoma/harness.hpp"
#include "irsnoma/version.hpp"

namespace irsnoma::harness {

using nlohmann::json;

Algorithm parse_algorithm(std::string_view name) {
  if (name == "dqn") return Algorithm::Dqn;
  if (name == "tabular") return Algorithm::Tabular;
  if (name == "random-phase") return Algorithm::RandomPhase;
  if (name == "oracle") return Algorithm::Oracle;
  throw ValidationError("unknown algorithm '" + std::string(name) + "' (dqn, tabular, random-phase, oracle)");
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Dqn: return "dqn";
    case Algorithm::Tabular: return "tabular";
    case Algorithm::RandomPhase: return "random-phase";
    case Algorithm::Oracle: return "oracle";
  }
  return "?";
}

ExperimentConfig::ExperimentConfig() {
  mobility.n0 = mobility.forecaster.window_len + 1;
  agent.episodes = 300;
  agent.steps_per_episode = 20;
}

void ExperimentConfig::validate() const {
  geometry.region.validate();
  rician.validate();
  if (geometry.irs_elements < 1 || geometry.bs_antennas < 1) {
    throw ValidationError("config: elements and antennas must be positive");
  }
  if (geometry.user_positions.empty() && user_count < 1) throw ValidationError("config: at least one user required");
  for (const auto& u : geometry.user_positions) {
    if (!geometry.region.contains(u.head<2>())) throw ValidationError("config: user outside the admissible region");
  }
  if (resolution_bits < 1 || resolution_bits > 16) throw ValidationError("config: resolution_bits must be in [1, 16]");
  auto check_power = [](double p) {
    if (!(p >= 0.0 && p <= 120.0)) throw ValidationError("config: power values must lie in [0, 120] dBm");
  };
  check_power(power_dbm);
  for (double p : powers_dbm) check_power(p);
  if (powers_dbm.empty()) throw ValidationError("config: empty power list");
  if (element_counts.empty()) throw ValidationError("config: empty element-count list");
  for (int k : element_counts) {
    if (k < 1) throw ValidationError("config: element counts must be >= 1");
  }
  if (seeds.empty()) throw ValidationError("config: at least one seed required");
  if (slots < 1) throw ValidationError("config: slot count must be positive");
  oracle::alpha_units(alpha_step);
  for (double q : qos_sinr) {
    if (!(q >= 0.0) || !std::isfinite(q)) throw ValidationError("config: QoS floors must be finite and >= 0");
  }
  const int users = geometry.user_positions.empty() ? user_count : geometry.user_count();
  if (!qos_sinr.empty() && static_cast<int>(qos_sinr.size()) != users) {
    throw ValidationError("config: qos_sinr needs one floor per user");
  }
  if (!cluster_sizes.empty()) {
    if (static_cast<int>(cluster_sizes.size()) != geometry.bs_antennas) {
      throw ValidationError("config: cluster count must equal the antenna count");
    }
    int total = 0;
    for (int s : cluster_sizes) {
      if (s < 1) throw ValidationError("config: cluster sizes must be positive");
      total += s;
    }
    if (total != users) throw ValidationError("config: cluster sizes must add up to the user count");
  } else if (users < geometry.bs_antennas) {
    throw ValidationError("config: clustering needs at least as many users as antennas");
  }
  if (mobility.n0 < 1) throw ValidationError("config: mobility n0 must be positive");
  network.validate();  // sizes are filled in per environment, defaults here are valid
  if (agent.episodes < 0 || agent.steps_per_episode < 1) throw ValidationError("config: invalid agent budget");
  if (!(clustering.epsilon > 0.0)) throw ValidationError("config: clustering epsilon must be positive");
}

namespace {

Eigen::Vector2d vec2(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw ValidationError("config: expected a 2-vector");
  return {v[0], v[1]};
}

Eigen::Vector3d vec3(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() == 2) return {v[0], v[1], 0.0};
  if (v.size() != 3) throw ValidationError("config: expected a 2- or 3-vector");
  return {v[0], v[1], v[2]};
}

json to_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ValidationError("config: unknown key '" + k + "' in " + where);
  }
}

}  // namespace

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c;
  json j;
  try {
    is >> j;
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    reject_unknown(j,
                   {"version", "seed", "bs_position", "irs_position", "users", "user_count", "region", "elements",
                    "antennas", "resolution_bits", "k_factor_db", "path_loss_exponent_g", "path_loss_exponent_h",
                    "reference_loss_db", "noise_dbm", "power_dbm", "cluster_sizes", "alpha_step", "qos_sinr",
                    "interference_model", "alpha_domain", "slots", "algorithm", "powers_dbm", "element_counts",
                    "seeds", "trajectories", "mobility", "agent", "clustering"},
                   "scenario");
    read(j, "seed", c.seed);
    if (j.contains("bs_position")) c.geometry.bs_position = vec3(j["bs_position"]);
    if (j.contains("irs_position")) c.geometry.irs_position = vec3(j["irs_position"]);
    if (j.contains("users")) {
      for (const auto& u : j["users"]) c.geometry.user_positions.push_back(vec3(u));
    }
    read(j, "user_count", c.user_count);
    if (j.contains("region")) {
      const auto& r = j["region"];
      reject_unknown(r, {"lower", "upper", "obstacle"}, "region");
      Region region;
      if (r.contains("lower")) region.lower = vec2(r["lower"]);
      if (r.contains("upper")) region.upper = vec2(r["upper"]);
      if (r.contains("obstacle")) {
        for (const auto& p : r["obstacle"]) region.obstacle.push_back(vec2(p));
      }
      c.geometry.region = region;
    }
    read(j, "elements", c.geometry.irs_elements);
    read(j, "antennas", c.geometry.bs_antennas);
    read(j, "resolution_bits", c.resolution_bits);
    if (j.contains("k_factor_db")) c.rician.k_factor = channel::db_to_linear(j["k_factor_db"].get<double>());
    read(j, "path_loss_exponent_g", c.rician.path_loss_exponent_g);
    read(j, "path_loss_exponent_h", c.rician.path_loss_exponent_h);
    read(j, "reference_loss_db", c.rician.reference_loss_db);
    read(j, "noise_dbm", c.rician.noise_power_dbm);
    read(j, "power_dbm", c.power_dbm);
    read(j, "cluster_sizes", c.cluster_sizes);
    read(j, "alpha_step", c.alpha_step);
    read(j, "qos_sinr", c.qos_sinr);
    if (j.contains("interference_model")) {
      const auto m = j["interference_model"].get<std::string>();
      if (m == "incoherent") c.sinr.interference = noma::InterferenceModel::Incoherent;
      else if (m == "coherent") c.sinr.interference = noma::InterferenceModel::Coherent;
      else throw ValidationError("config: interference_model must be incoherent or coherent");
    }
    if (j.contains("alpha_domain")) {
      const auto d = j["alpha_domain"].get<std::string>();
      if (d == "amplitude") c.sinr.alpha_domain = noma::AlphaDomain::Amplitude;
      else if (d == "power") c.sinr.alpha_domain = noma::AlphaDomain::Power;
      else throw ValidationError("config: alpha_domain must be amplitude or power");
    }
    read(j, "slots", c.slots);
    if (j.contains("algorithm")) c.algorithm = parse_algorithm(j["algorithm"].get<std::string>());
    read(j, "powers_dbm", c.powers_dbm);
    read(j, "element_counts", c.element_counts);
    read(j, "seeds", c.seeds);
    read(j, "trajectories", c.trajectories);
    if (j.contains("mobility")) {
      const auto& m = j["mobility"];
      reject_unknown(m,
                     {"n0", "hidden_dim", "window_len", "learning_rate", "train_steps", "clip_norm", "init_scale",
                      "speed_min", "speed_max", "heading_sigma"},
                     "mobility");
      read(m, "n0", c.mobility.n0);
      read(m, "hidden_dim", c.mobility.forecaster.hidden_dim);
      read(m, "window_len", c.mobility.forecaster.window_len);
      read(m, "learning_rate", c.mobility.forecaster.learning_rate);
      read(m, "train_steps", c.mobility.forecaster.train_steps);
      read(m, "clip_norm", c.mobility.forecaster.clip_norm);
      read(m, "init_scale", c.mobility.forecaster.init_scale);
      read(m, "speed_min", c.mobility.motion.speed_min);
      read(m, "speed_max", c.mobility.motion.speed_max);
      read(m, "heading_sigma", c.mobility.motion.heading_sigma);
    }
    if (j.contains("agent")) {
      const auto& a = j["agent"];
      reject_unknown(a,
                     {"episodes", "steps_per_episode", "replay_capacity", "batch_size", "hidden", "learning_rate",
                      "discount", "epsilon0", "epsilon_decay", "epsilon_min", "sync_period", "clip_norm", "penalty"},
                     "agent");
      read(a, "episodes", c.agent.episodes);
      read(a, "steps_per_episode", c.agent.steps_per_episode);
      read(a, "replay_capacity", c.agent.replay_capacity);
      read(a, "batch_size", c.agent.batch_size);
      read(a, "hidden", c.network.hidden);
      read(a, "learning_rate", c.network.learning_rate);
      read(a, "discount", c.network.discount);
      read(a, "epsilon0", c.network.epsilon0);
      read(a, "epsilon_decay", c.network.epsilon_decay);
      read(a, "epsilon_min", c.network.epsilon_min);
      read(a, "sync_period", c.network.sync_period);
      read(a, "clip_norm", c.network.clip_norm);
      read(a, "penalty", c.env.penalty);
    }
    if (j.contains("clustering")) {
      const auto& k = j["clustering"];
      reject_unknown(k, {"epsilon", "max_iter", "rho1", "rho2"}, "clustering");
      read(k, "epsilon", c.clustering.epsilon);
      read(k, "max_iter", c.clustering.max_iter);
      read(k, "rho1", c.clustering.partition.rho1);
      read(k, "rho2", c.clustering.partition.rho2);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.env.alpha_step = c.alpha_step;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return parse_config(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_config(std::ostream& os, const ExperimentConfig& c) {
  json j;
  j["version"] = kVersion;
  j["seed"] = c.seed;
  j["bs_position"] = to_json(c.geometry.bs_position);
  j["irs_position"] = to_json(c.geometry.irs_position);
  if (!c.geometry.user_positions.empty()) {
    j["users"] = json::array();
    for (const auto& u : c.geometry.user_positions) j["users"].push_back(to_json(u));
  } else {
    j["user_count"] = c.user_count;
  }
  json region;
  region["lower"] = to_json(c.geometry.region.lower);
  region["upper"] = to_json(c.geometry.region.upper);
  region["obstacle"] = json::array();
  for (const auto& p : c.geometry.region.obstacle) region["obstacle"].push_back(to_json(p));
  j["region"] = region;
  j["elements"] = c.geometry.irs_elements;
  j["antennas"] = c.geometry.bs_antennas;
  j["resolution_bits"] = c.resolution_bits;
  j["k_factor_db"] = std::round(1e12 * 10.0 * std::log10(c.rician.k_factor)) / 1e12;  // stable round trip
  j["path_loss_exponent_g"] = c.rician.path_loss_exponent_g;
  j["path_loss_exponent_h"] = c.rician.path_loss_exponent_h;
  j["reference_loss_db"] = c.rician.reference_loss_db;
  j["noise_dbm"] = c.rician.noise_power_dbm;
  j["power_dbm"] = c.power_dbm;
  j["cluster_sizes"] = c.cluster_sizes;
  j["alpha_step"] = c.alpha_step;
  j["qos_sinr"] = c.qos_sinr;
  j["interference_model"] =
      c.sinr.interference == noma::InterferenceModel::Incoherent ? "incoherent" : "coherent";
  j["alpha_domain"] = c.sinr.alpha_domain == noma::AlphaDomain::Amplitude ? "amplitude" : "power";
  j["slots"] = c.slots;
  j["algorithm"] = to_string(c.algorithm);
  j["powers_dbm"] = c.powers_dbm;
  j["element_counts"] = c.element_counts;
  j["seeds"] = c.seeds;
  if (!c.trajectories.empty()) j["trajectories"] = c.trajectories;
  const auto& f = c.mobility.forecaster;
  j["mobility"] = {{"n0", c.mobility.n0},
                   {"hidden_dim", f.hidden_dim},
                   {"window_len", f.window_len},
                   {"learning_rate", f.learning_rate},
                   {"train_steps", f.train_steps},
                   {"clip_norm", f.clip_norm},
                   {"init_scale", f.init_scale},
                   {"speed_min", c.mobility.motion.speed_min},
                   {"speed_max", c.mobility.motion.speed_max},
                   {"heading_sigma", c.mobility.motion.heading_sigma}};
  j["agent"] = {{"episodes", c.agent.episodes},
                {"steps_per_episode", c.agent.steps_per_episode},
                {"replay_capacity", c.agent.replay_capacity},
                {"batch_size", c.agent.batch_size},
                {"hidden", c.network.hidden},
                {"learning_rate", c.network.learning_rate},
                {"discount", c.network.discount},
                {"epsilon0", c.network.epsilon0},
                {"epsilon_decay", c.network.epsilon_decay},
                {"epsilon_min", c.network.epsilon_min},
                {"sync_period", c.network.sync_period},
                {"clip_norm", c.network.clip_norm},
                {"penalty", c.env.penalty}};
  j["clustering"] = {{"epsilon", c.clustering.epsilon},
                     {"max_iter", c.clustering.max_iter},
                     {"rho1", c.clustering.partition.rho1},
                     {"rho2", c.clustering.partition.rho2}};
  os << j.dump(2) << '\n';
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_config(out, cfg);
  if (!out) throw IoError("failed writing " + path.string());
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t SeedRegistry::seed(std::string_view name, std::uint64_t index) const {
  // FNV-1a over the stream name
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(splitmix64(master_) ^ h) ^ index);
}

void write_trajectories(std::ostream& os, const std::vector<mobility::Trajectory>& users) {
  os << kCsvHeader << '\n' << "user,t,x,y\n";
  const auto old = os.precision(17);
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (std::size_t t = 0; t < users[u].positions.size(); ++t) {
      const auto& p = users[u].positions[t];
      os << u << ',' << t << ',' << p.x() << ',' << p.y() << '\n';
    }
  }
  os.precision(old);
}

std::vector<mobility::Trajectory> read_trajectories(std::istream& is) {
  std::vector<mobility::Trajectory> out;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "user,t,x,y") throw ValidationError("trajectories: expected header user,t,x,y");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell[4];
    for (auto& c : cell) {
      if (!std::getline(row, c, ',')) throw ValidationError("trajectories: short row at line " + std::to_string(lineno));
    }
    try {
      const auto u = std::stoul(cell[0]);
      const auto t = std::stoul(cell[1]);
      if (u >= out.size()) out.resize(u + 1);
      if (t != out[u].positions.size()) {
        throw ValidationError("trajectories: rows must be ordered by t at line " + std::to_string(lineno));
      }
      out[u].positions.emplace_back(std::stod(cell[2]), std::stod(cell[3]));
    } catch (const std::logic_error&) {
      throw ValidationError("trajectories: bad number at line " + std::to_string(lineno));
    }
  }
  for (const auto& tr : out) {
    if (tr.positions.empty()) throw ValidationError("trajectories: user ids must be contiguous");
  }
  return out;
}

}  // namespace irsnoma::harness
