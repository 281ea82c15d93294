#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>

#include "irsnoma/oracle.hpp"
#include "irsnoma/rl.hpp"
#include "irsnoma/version.hpp"

namespace irsnoma::rl {

TabularQ::Key EnvState::key() const {
  TabularQ::Key k(phase.indices.begin(), phase.indices.end());
  for (const auto& c : alpha_units) k.insert(k.end(), c.begin(), c.end());
  return k;
}

Environment::Environment(noma::Scenario<double> scenario, EnvConfig config)
    : scenario_(std::move(scenario)), config_(config), units_(oracle::alpha_units(config.alpha_step)) {
  scenario_.validate();
  if (!std::isfinite(config_.penalty) || config_.penalty < 0.0) {
    throw ValidationError("environment: penalty must be finite and >= 0");
  }
  const int k = scenario_.elements();
  for (int e = 0; e < k; ++e) actions_.push_back({ActionKind::PhaseIncrement, e, -1, -1, -1});
  for (int e = 0; e < k; ++e) actions_.push_back({ActionKind::PhaseDecrement, e, -1, -1, -1});
  for (std::size_t m = 0; m < scenario_.clusters.size(); ++m) {
    auto sorted = scenario_.clusters[m];
    std::sort(sorted.begin(), sorted.end());
    const int cm = static_cast<int>(m);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      for (std::size_t j = i + 1; j < sorted.size(); ++j) {
        actions_.push_back({ActionKind::AlphaShift, -1, cm, static_cast<int>(i), static_cast<int>(j)});
        actions_.push_back({ActionKind::AlphaShift, -1, cm, static_cast<int>(j), static_cast<int>(i)});
      }
    }
    members_.push_back(std::move(sorted));
  }
  actions_.push_back({});
}

int Environment::feature_dim() const { return 2 * scenario_.elements() + 2 * scenario_.user_count(); }

const EnvAction& Environment::action(int id) const {
  if (id < 0 || id >= action_count()) throw ValidationError("environment: action id out of range");
  return actions_[static_cast<std::size_t>(id)];
}

std::vector<RVector<double>> Environment::split(const EnvState& s) const {
  std::vector<RVector<double>> out;
  for (const auto& c : s.alpha_units) {
    RVector<double> a(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) a(static_cast<Eigen::Index>(i)) = double(c[i]) / units_;
    out.push_back(std::move(a));
  }
  return out;
}

noma::Evaluation<double> Environment::evaluate(const EnvState& s) const {
  return noma::evaluate(scenario_, s.phase, split(s));
}

double Environment::reward(const EnvState& s) const {
  return s.feasible ? s.sum_rate : s.sum_rate - config_.penalty;
}

EnvState Environment::make_state(channel::PhaseConfig phase, std::vector<std::vector<int>> alpha_units,
                                 int slot_index) const {
  phase.validate();
  if (alpha_units.size() != members_.size()) throw ValidationError("environment: one alpha vector per cluster");
  for (std::size_t m = 0; m < members_.size(); ++m) {
    if (alpha_units[m].size() != members_[m].size()) throw ValidationError("environment: alpha size mismatch");
    int total = 0;
    for (int u : alpha_units[m]) {
      if (u < 0) throw ValidationError("environment: negative alpha units");
      total += u;
    }
    if (total != units_) throw ValidationError("environment: alpha units must sum to the grid size");
  }
  EnvState s;
  s.phase = std::move(phase);
  s.alpha_units = std::move(alpha_units);
  s.slot_index = slot_index;

  const auto bf = noma::prepare_beamforming(scenario_, s.phase);
  const auto ev = noma::evaluate_split(scenario_, bf, split(s));
  s.sum_rate = ev.sum_rate();
  s.feasible = ev.feasible();

  const int k = scenario_.elements();
  const int users = scenario_.user_count();
  s.features.resize(feature_dim());
  for (int e = 0; e < k; ++e) {
    const double th = 2.0 * std::numbers::pi * s.phase.indices[e] / s.phase.levels();
    s.features(2 * e) = std::cos(th);
    s.features(2 * e + 1) = std::sin(th);
  }
  for (int u = 0; u < users; ++u) s.features(2 * k + u) = ev.plan.alpha(u);
  double gmax = 0.0;
  for (const auto& h : bf.effective) gmax = std::max(gmax, h.norm());
  for (int u = 0; u < users; ++u) s.features(2 * k + users + u) = gmax > 0.0 ? bf.effective[u].norm() / gmax : 0.0;
  return s;
}

EnvState Environment::initial_state() const {
  std::vector<std::vector<int>> alpha;
  for (const auto& c : members_) {
    const int p = static_cast<int>(c.size());
    std::vector<int> a(c.size(), units_ / p);
    for (int i = 0; i < units_ % p; ++i) ++a[i];
    alpha.push_back(std::move(a));
  }
  return make_state(channel::PhaseConfig::zeros(scenario_.elements(), scenario_.resolution_bits), std::move(alpha));
}

EnvState Environment::random_state(Rng& rng) const {
  auto phase = channel::PhaseConfig::zeros(scenario_.elements(), scenario_.resolution_bits);
  std::uniform_int_distribution<int> level(0, phase.levels() - 1);
  for (auto& n : phase.indices) n = level(rng);
  std::vector<std::vector<int>> alpha;
  for (const auto& c : members_) {
    // uniform over compositions: shuffle units_ stars and p - 1 bars
    const int p = static_cast<int>(c.size());
    std::vector<int> symbols(units_, 0);
    symbols.insert(symbols.end(), p - 1, 1);
    for (std::size_t i = symbols.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(symbols[i - 1], symbols[pick(rng)]);
    }
    std::vector<int> a(c.size(), 0);
    std::size_t part = 0;
    for (int sym : symbols) {
      if (sym == 1) ++part;
      else ++a[part];
    }
    alpha.push_back(std::move(a));
  }
  return make_state(std::move(phase), std::move(alpha));
}

StepResult env_step(const Environment& env, const EnvState& state, int action) {
  const auto& act = env.action(action);
  auto phase = state.phase;
  auto alpha = state.alpha_units;
  const int levels = phase.levels();
  switch (act.kind) {
    case ActionKind::PhaseIncrement:
      phase.indices[act.element] = (phase.indices[act.element] + 1) % levels;
      break;
    case ActionKind::PhaseDecrement:
      phase.indices[act.element] = (phase.indices[act.element] + levels - 1) % levels;
      break;
    case ActionKind::AlphaShift: {
      auto& c = alpha[act.cluster];
      if (c[act.donor] > 0) {
        --c[act.donor];
        ++c[act.receiver];
      }
      break;
    }
    case ActionKind::NoOp:
      break;
  }
  StepResult r;
  r.next = env.make_state(std::move(phase), std::move(alpha), state.slot_index + 1);
  r.reward = env.reward(r.next);
  return r;
}

QNetworkConfig network_config_for(const Environment& env, QNetworkConfig base) {
  base.input_dim = env.feature_dim();
  base.output_dim = env.action_count();
  base.validate();
  return base;
}

namespace {

void validate_agent(const AgentConfig& c) {
  if (c.episodes < 0 || c.steps_per_episode < 1) throw ValidationError("agent: episodes >= 0 and steps >= 1 required");
  if (c.replay_capacity == 0 || c.batch_size == 0) throw ValidationError("agent: replay capacity and batch must be positive");
}

class BestTracker {
 public:
  explicit BestTracker(const Environment& env) : env_(env) {}

  void visit(const EnvState& s, double reward) {
    ++result.visited;
    if (!any_reward_ || reward > best_reward_) {
      best_reward_ = reward;
      any_reward_ = true;
    }
    if (s.feasible && (!result.found || s.sum_rate > result.best_sum_rate)) {
      result.found = true;
      result.best_sum_rate = s.sum_rate;
      best_state_ = s;
    }
  }

  double best_reward() const { return best_reward_; }

  TrainResult finish() {
    if (result.found) {
      result.best_phase = best_state_.phase;
      result.best_split = env_.split(best_state_);
      result.best_plan = env_.evaluate(best_state_).plan;
    }
    return std::move(result);
  }

  TrainResult result;

 private:
  const Environment& env_;
  EnvState best_state_;
  double best_reward_ = 0.0;
  bool any_reward_ = false;
};

template <typename Greedy, typename Learn>
TrainResult rollout(const Environment& env, const QNetworkConfig& schedule, const AgentConfig& config, Rng& rng,
                    Greedy&& greedy, Learn&& learn) {
  validate_agent(config);
  BestTracker best(env);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, env.action_count() - 1);
  for (int ep = 0; ep < config.episodes; ++ep) {
    const double eps = schedule.epsilon(ep);
    EnvState s = config.random_starts ? env.random_state(rng) : env.initial_state();
    best.visit(s, env.reward(s));
    double loss_sum = 0.0;
    int loss_count = 0;
    for (int t = 0; t < config.steps_per_episode; ++t) {
      const int a = u01(rng) < eps ? any_action(rng) : greedy(s);
      auto step = env_step(env, s, a);
      best.visit(step.next, step.reward);
      // episodes are cut by a step budget, not a terminal state, so every
      // transition bootstraps
      Transition tr{s.features, a, step.reward, step.next.features, false};
      if (auto loss = learn(s, std::move(tr), step.next)) {
        loss_sum += *loss;
        ++loss_count;
      }
      s = std::move(step.next);
    }
    best.result.curve.push_back({ep, best.best_reward(), eps, loss_count > 0 ? loss_sum / loss_count : 0.0});
  }
  return best.finish();
}

std::optional<double> none() { return std::nullopt; }

}  // namespace

TrainResult train_agent(const Environment& env, QApproximator& approx, const AgentConfig& config,
                        std::uint64_t seed) {
  if (approx.input_dim() != env.feature_dim() || approx.action_count() != env.action_count()) {
    throw ValidationError("agent: network shape does not match the environment");
  }
  Rng rng(seed);
  ReplayMemory memory(config.replay_capacity);
  long long updates = 0;
  auto greedy = [&](const EnvState& s) {
    Eigen::Index a = 0;
    q_forward(approx, s.features).maxCoeff(&a);
    return static_cast<int>(a);
  };
  auto learn = [&](const EnvState&, Transition tr, const EnvState&) -> std::optional<double> {
    memory.push(std::move(tr));
    if (memory.size() < config.batch_size) return none();
    const auto step = dqn_train_step(approx, memory.sample(config.batch_size, rng));
    if (++updates % approx.config().sync_period == 0) approx.sync_target();
    return step.loss;
  };
  return rollout(env, approx.config(), config, rng, greedy, learn);
}

TrainResult train_tabular_agent(const Environment& env, TabularQ& table, const QNetworkConfig& schedule,
                                const AgentConfig& config, std::uint64_t seed) {
  if (table.action_count() != env.action_count()) throw ValidationError("agent: table width does not match");
  Rng rng(seed);
  auto greedy = [&](const EnvState& s) { return table.greedy_action(s.key()); };
  auto learn = [&](const EnvState& s, Transition tr, const EnvState& next) -> std::optional<double> {
    const auto key = s.key();
    const double residual = tr.reward + schedule.discount * table.max_value(next.key()) - table.value(key, tr.action);
    tabular_q_update(table, key, tr.action, tr.reward, next.key(), schedule.learning_rate, schedule.discount);
    return residual * residual;
  };
  return rollout(env, schedule, config, rng, greedy, learn);
}

void write_learning_curve(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << kCsvHeader << '\n' << "episode,best_reward,epsilon,loss\n";
  const auto old = os.precision(17);
  for (const auto& p : curve) os << p.episode << ',' << p.best_reward << ',' << p.epsilon << ',' << p.loss << '\n';
  os.precision(old);
}

}  // namespace irsnoma::rl
