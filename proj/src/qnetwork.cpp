#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "irsnoma/rl.hpp"
#include "irsnoma/version.hpp"

namespace irsnoma::rl {

TabularQ::TabularQ(int action_count) : action_count_(action_count) {
  if (action_count < 1) throw ValidationError("Q table: action count must be positive");
}

double TabularQ::value(const Key& s, int a) const {
  if (a < 0 || a >= action_count_) throw ValidationError("Q table: action out of range");
  auto it = table_.find(s);
  return it == table_.end() ? 0.0 : it->second(a);
}

double TabularQ::max_value(const Key& s) const {
  auto it = table_.find(s);
  return it == table_.end() ? 0.0 : it->second.maxCoeff();
}

int TabularQ::greedy_action(const Key& s) const {
  auto it = table_.find(s);
  if (it == table_.end()) return 0;
  Eigen::Index best = 0;
  it->second.maxCoeff(&best);
  return static_cast<int>(best);
}

void TabularQ::set(const Key& s, int a, double v) {
  if (a < 0 || a >= action_count_) throw ValidationError("Q table: action out of range");
  auto [it, inserted] = table_.try_emplace(s, Eigen::VectorXd::Zero(action_count_));
  it->second(a) = v;
}

void tabular_q_update(TabularQ& q, const TabularQ::Key& s, int a, double r, const TabularQ::Key& s_next,
                      double psi, double beta) {
  // the bootstrap is read before the write, so s == s_next is handled
  const double target = r + beta * q.max_value(s_next);
  const double old = q.value(s, a);
  q.set(s, a, old + psi * (target - old));
}

void QNetworkConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ValidationError("Q network: layer sizes must be positive");
  if (hidden.size() != 2 || hidden[0] < 1 || hidden[1] < 1) {
    throw ValidationError("Q network: exactly two positive hidden layers required");
  }
  if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("Q network: discount must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw ValidationError("Q network: learning rate must be positive");
  if (!(epsilon_min >= 0.0 && epsilon0 <= 1.0 && epsilon_min <= epsilon0)) {
    throw ValidationError("Q network: epsilon schedule must satisfy 0 <= min <= eps0 <= 1");
  }
  if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw ValidationError("Q network: decay must be in (0, 1]");
  if (sync_period < 1) throw ValidationError("Q network: sync period must be positive");
  if (!(clip_norm > 0.0)) throw ValidationError("Q network: clip norm must be positive");
}

double QNetworkConfig::epsilon(int episode) const {
  return std::max(epsilon_min, epsilon0 * std::pow(epsilon_decay, episode));
}

QApproximator::QApproximator(QNetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto sizes = layer_sizes();
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    offsets_.push_back(off);
    off += Eigen::Index(sizes[l + 1]) * sizes[l];
    offsets_.push_back(off);
    off += sizes[l + 1];
  }
  theta_ = Eigen::VectorXd::Zero(off);
  target_ = theta_;
}

QApproximator QApproximator::random(QNetworkConfig config, Rng& rng) {
  QApproximator q(std::move(config));
  const auto sizes = q.layer_sizes();
  for (int l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / sizes[l]);
    std::uniform_real_distribution<double> u(-bound, bound);
    const Eigen::Index n = Eigen::Index(sizes[l + 1]) * sizes[l];
    for (Eigen::Index i = 0; i < n; ++i) q.theta_(q.weight_offset(l) + i) = u(rng);
  }
  q.sync_target();
  return q;
}

std::vector<int> QApproximator::layer_sizes() const {
  return {config_.input_dim, config_.hidden[0], config_.hidden[1], config_.output_dim};
}

namespace {

using ConstMat = Eigen::Map<const Eigen::MatrixXd>;

struct Activations {
  std::vector<Eigen::VectorXd> a;  // a[0] = input, a[l] = output of layer l
};

Activations run(const QApproximator& q, const Eigen::VectorXd& theta, const Eigen::VectorXd& x) {
  if (x.size() != q.input_dim()) throw ValidationError("Q network: feature length mismatch");
  if (!x.allFinite()) throw ValidationError("Q network: non-finite features");
  const auto sizes = q.layer_sizes();
  Activations act;
  act.a.push_back(x);
  for (int l = 0; l < 3; ++l) {
    ConstMat w(theta.data() + q.weight_offset(l), sizes[l + 1], sizes[l]);
    ConstMat b(theta.data() + q.bias_offset(l), sizes[l + 1], 1);
    Eigen::VectorXd z = w * act.a.back() + b;
    if (l < 2) z = z.cwiseMax(0.0);
    act.a.push_back(std::move(z));
  }
  return act;
}

}  // namespace

Eigen::VectorXd q_forward(const QApproximator& approx, const Eigen::VectorXd& features) {
  return run(approx, approx.parameters(), features).a.back();
}

Eigen::VectorXd q_forward_target(const QApproximator& approx, const Eigen::VectorXd& features) {
  return run(approx, approx.target_parameters(), features).a.back();
}

double td_target(double reward, const Eigen::VectorXd& next_state, bool terminal, const QApproximator& approx) {
  if (terminal) return reward;
  return reward + approx.config().discount * q_forward_target(approx, next_state).maxCoeff();
}

double td_target(const Transition& t, const QApproximator& approx) {
  return td_target(t.reward, t.next_state, t.terminal, approx);
}

double dqn_loss(const QApproximator& approx, const std::vector<Transition>& batch) {
  if (batch.empty()) throw ValidationError("dqn: empty minibatch");
  double loss = 0.0;
  for (const auto& t : batch) {
    const double r = td_target(t, approx) - q_forward(approx, t.state)(t.action);
    loss += r * r;
  }
  return loss / static_cast<double>(batch.size());
}

DqnGradient dqn_loss_gradient(const QApproximator& approx, const std::vector<Transition>& batch) {
  if (batch.empty()) throw ValidationError("dqn: empty minibatch");
  const auto sizes = approx.layer_sizes();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const auto& theta = approx.parameters();
  DqnGradient out;
  out.gradient = Eigen::VectorXd::Zero(approx.parameter_count());

  for (const auto& t : batch) {
    if (t.action < 0 || t.action >= approx.action_count()) throw ValidationError("dqn: action out of range");
    const double y = td_target(t, approx);
    const auto act = run(approx, theta, t.state);
    const double residual = y - act.a.back()(t.action);
    out.loss += residual * residual * inv_n;

    Eigen::VectorXd delta = Eigen::VectorXd::Zero(sizes[3]);
    delta(t.action) = -2.0 * residual * inv_n;
    for (int l = 2; l >= 0; --l) {
      Eigen::Map<Eigen::MatrixXd> gw(out.gradient.data() + approx.weight_offset(l), sizes[l + 1], sizes[l]);
      Eigen::Map<Eigen::VectorXd> gb(out.gradient.data() + approx.bias_offset(l), sizes[l + 1]);
      gw += delta * act.a[l].transpose();
      gb += delta;
      if (l == 0) break;
      ConstMat w(theta.data() + approx.weight_offset(l), sizes[l + 1], sizes[l]);
      Eigen::VectorXd back = w.transpose() * delta;
      // ReLU derivative taken as 0 at the kink
      delta = (act.a[l].array() > 0.0).select(back.array(), 0.0).matrix();
    }
  }
  return out;
}

DqnStep dqn_train_step(QApproximator& approx, const std::vector<Transition>& batch) {
  auto g = dqn_loss_gradient(approx, batch);
  DqnStep step;
  step.loss = g.loss;
  step.gradient_norm = g.gradient.norm();
  if (step.gradient_norm > approx.config().clip_norm) {
    g.gradient *= approx.config().clip_norm / step.gradient_norm;
    step.clipped = true;
  }
  approx.parameters() -= approx.config().learning_rate * g.gradient;
  if (!approx.parameters().allFinite()) throw Error("dqn: parameters became non-finite");
  return step;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("replay memory: capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayMemory::push(Transition t) {
  if (!std::isfinite(t.reward)) throw ValidationError("replay memory: non-finite reward");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<Transition> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
  if (items_.empty()) throw ValidationError("replay memory: empty");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Transition> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_weights(std::ostream& os, const QApproximator& approx) {
  const auto& c = approx.config();
  nlohmann::json j;
  j["format"] = "irsnoma-qnetwork";
  j["version"] = 1;
  j["generator"] = std::string("irsnoma-lab v") + kVersion;
  j["layers"] = approx.layer_sizes();
  j["learning_rate"] = c.learning_rate;
  j["discount"] = c.discount;
  j["epsilon"] = {{"initial", c.epsilon0}, {"decay", c.epsilon_decay}, {"min", c.epsilon_min}};
  j["sync_period"] = c.sync_period;
  j["clip_norm"] = c.clip_norm;
  j["parameters"] = to_std(approx.parameters());
  j["target_parameters"] = to_std(approx.target_parameters());
  os << std::setprecision(17) << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing Q-network weights");
}

QApproximator load_weights(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
    if (j.at("format") != "irsnoma-qnetwork") throw ValidationError("weights: unexpected format tag");
    if (j.at("version").get<int>() != 1) throw ValidationError("weights: unsupported version");
    const auto layers = j.at("layers").get<std::vector<int>>();
    if (layers.size() != 4) throw ValidationError("weights: expected four layer sizes");
    QNetworkConfig c;
    c.input_dim = layers[0];
    c.hidden = {layers[1], layers[2]};
    c.output_dim = layers[3];
    c.learning_rate = j.at("learning_rate");
    c.discount = j.at("discount");
    c.epsilon0 = j.at("epsilon").at("initial");
    c.epsilon_decay = j.at("epsilon").at("decay");
    c.epsilon_min = j.at("epsilon").at("min");
    c.sync_period = j.at("sync_period");
    c.clip_norm = j.at("clip_norm");
    QApproximator q(c);
    const auto p = j.at("parameters").get<std::vector<double>>();
    const auto t = j.at("target_parameters").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(p.size()) != q.parameter_count() ||
        static_cast<Eigen::Index>(t.size()) != q.parameter_count()) {
      throw ValidationError("weights: parameter count does not match the layer sizes");
    }
    q.parameters() = from_std(p);
    q.target_parameters() = from_std(t);
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("weights: ") + e.what());
  }
}

}  // namespace irsnoma::rl
