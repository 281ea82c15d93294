#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/channel.hpp"
#include "irsnoma/noma.hpp"
#include "irsnoma/types.hpp"

namespace irsnoma::rl {

// ---------------------------------------------------------------------------
// Tabular Q-learning

/// Q table over integer-vector keys. Unseen entries read as 0.
class TabularQ {
 public:
  using Key = std::vector<int>;

  explicit TabularQ(int action_count);

  int action_count() const { return action_count_; }
  std::size_t size() const { return table_.size(); }

  double value(const Key& s, int a) const;
  double max_value(const Key& s) const;
  int greedy_action(const Key& s) const;  // lowest id among ties
  void set(const Key& s, int a, double v);

 private:
  int action_count_;
  std::map<Key, Eigen::VectorXd> table_;
};

/// Q[s,a] += psi * (r + beta * max_a' Q[s',a'] - Q[s,a]).
void tabular_q_update(TabularQ& q, const TabularQ::Key& s, int a, double r, const TabularQ::Key& s_next,
                      double psi, double beta);

// ---------------------------------------------------------------------------
// Q-network

struct QNetworkConfig {
  int input_dim = 1;
  std::vector<int> hidden{64, 64};
  int output_dim = 1;
  double learning_rate = 1e-3;  // psi
  double discount = 0.9;        // beta
  double epsilon0 = 1.0;
  double epsilon_decay = 0.995;  // per episode
  double epsilon_min = 0.05;
  int sync_period = 100;  // steps between hard target copies
  double clip_norm = 10.0;

  void validate() const;
  double epsilon(int episode) const;
};

/// Two-hidden-layer ReLU MLP with a linear output, plus a target copy.
/// Parameters are flat: for each layer, W (out x in, column-major) then b.
class QApproximator {
 public:
  explicit QApproximator(QNetworkConfig config);

  /// He-uniform weights, zero biases; the target starts as a copy.
  static QApproximator random(QNetworkConfig config, Rng& rng);

  const QNetworkConfig& config() const { return config_; }
  std::vector<int> layer_sizes() const;
  int input_dim() const { return config_.input_dim; }
  int action_count() const { return config_.output_dim; }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  Eigen::VectorXd& target_parameters() { return target_; }
  const Eigen::VectorXd& target_parameters() const { return target_; }
  Eigen::Index parameter_count() const { return theta_.size(); }

  void sync_target() { target_ = theta_; }

  /// Offset of layer l's weight block and bias block in the flat vector.
  Eigen::Index weight_offset(int layer) const { return offsets_[2 * layer]; }
  Eigen::Index bias_offset(int layer) const { return offsets_[2 * layer + 1]; }

 private:
  QNetworkConfig config_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd target_;
};

/// Online-network action values.
Eigen::VectorXd q_forward(const QApproximator& approx, const Eigen::VectorXd& features);
/// Target-network action values.
Eigen::VectorXd q_forward_target(const QApproximator& approx, const Eigen::VectorXd& features);

struct Transition {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

/// r + beta * max_a Q_target(s', a), or r for terminal transitions.
double td_target(double reward, const Eigen::VectorXd& next_state, bool terminal, const QApproximator& approx);
double td_target(const Transition& t, const QApproximator& approx);

/// Mean squared TD residual over the batch, targets from the target network.
double dqn_loss(const QApproximator& approx, const std::vector<Transition>& batch);

struct DqnGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // w.r.t. the online parameters only
};

DqnGradient dqn_loss_gradient(const QApproximator& approx, const std::vector<Transition>& batch);

struct DqnStep {
  double loss = 0.0;  // before the update
  double gradient_norm = 0.0;
  bool clipped = false;
};

/// One gradient-descent step on the online parameters.
DqnStep dqn_train_step(QApproximator& approx, const std::vector<Transition>& batch);

/// Uniform-sampling ring buffer.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  void push(Transition t);
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

void save_weights(std::ostream& os, const QApproximator& approx);
QApproximator load_weights(std::istream& is);

// ---------------------------------------------------------------------------
// Environment

enum class ActionKind { PhaseIncrement, PhaseDecrement, AlphaShift, NoOp };

struct EnvAction {
  ActionKind kind = ActionKind::NoOp;
  int element = -1;   // phase actions
  int cluster = -1;   // alpha shifts
  int donor = -1;     // user losing one alpha unit
  int receiver = -1;  // user gaining it
};

struct EnvState {
  channel::PhaseConfig phase;
  std::vector<std::vector<int>> alpha_units;  // per cluster, aligned with sorted members
  int slot_index = 0;
  Eigen::VectorXd features;
  double sum_rate = 0.0;
  bool feasible = false;

  /// Phase indices followed by every alpha unit; the tabular key.
  TabularQ::Key key() const;
};

struct EnvConfig {
  double alpha_step = 0.05;
  double penalty = 5.0;  // subtracted from the sum rate when SIC/QoS fail
};

/// Local-move environment over one scenario: step each IRS element up or down
/// one phase level, or move one alpha unit between two users of a cluster.
class Environment {
 public:
  Environment(noma::Scenario<double> scenario, EnvConfig config);

  const noma::Scenario<double>& scenario() const { return scenario_; }
  const EnvConfig& config() const { return config_; }
  int units() const { return units_; }
  int action_count() const { return static_cast<int>(actions_.size()); }
  int feature_dim() const;
  const EnvAction& action(int id) const;

  /// Sorted members of each cluster (alpha units follow this order).
  const std::vector<std::vector<int>>& members() const { return members_; }

  EnvState make_state(channel::PhaseConfig phase, std::vector<std::vector<int>> alpha_units,
                      int slot_index = 0) const;
  /// All-zero phases and the most even on-grid split.
  EnvState initial_state() const;
  EnvState random_state(Rng& rng) const;

  std::vector<RVector<double>> split(const EnvState& s) const;
  noma::Evaluation<double> evaluate(const EnvState& s) const;
  double reward(const EnvState& s) const;

 private:
  noma::Scenario<double> scenario_;
  EnvConfig config_;
  int units_;
  std::vector<std::vector<int>> members_;
  std::vector<EnvAction> actions_;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
};

StepResult env_step(const Environment& env, const EnvState& state, int action);

// ---------------------------------------------------------------------------
// Training

struct AgentConfig {
  int episodes = 2000;
  int steps_per_episode = 20;
  std::size_t replay_capacity = 10'000;
  std::size_t batch_size = 32;
  bool random_starts = true;  // each episode starts from a random state
};

struct CurvePoint {
  int episode = 0;
  double best_reward = 0.0;  // running max of rewards seen so far
  double epsilon = 0.0;
  double loss = 0.0;  // mean training loss in the episode (0 if none)
};

struct TrainResult {
  bool found = false;  // a constraint-feasible configuration was visited
  channel::PhaseConfig best_phase;
  std::vector<RVector<double>> best_split;
  noma::ClusterPlan<double> best_plan;
  double best_sum_rate = 0.0;
  std::size_t visited = 0;
  std::vector<CurvePoint> curve;
};

TrainResult train_agent(const Environment& env, QApproximator& approx, const AgentConfig& config,
                        std::uint64_t seed);

/// Same rollout loop with a Q table in place of the network; the table serves
/// as its own bootstrap target.
TrainResult train_tabular_agent(const Environment& env, TabularQ& table, const QNetworkConfig& schedule,
                                const AgentConfig& config, std::uint64_t seed);

/// Network sized for the environment with the given hidden layers.
QNetworkConfig network_config_for(const Environment& env, QNetworkConfig base = {});

void write_learning_curve(std::ostream& os, const std::vector<CurvePoint>& curve);

}  // namespace irsnoma::rl
