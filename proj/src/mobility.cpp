#include "irsnoma/mobility.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace irsnoma::mobility {

std::vector<Eigen::Vector2d> rejection_sample_positions(const Region& region, const TargetDensity& density,
                                                        std::size_t n, Rng& rng) {
  region.validate();
  if (!density.value || !(density.upper_bound > 0.0)) {
    throw ValidationError("rejection sampling: density needs a positive envelope bound");
  }
  std::uniform_real_distribution<double> ux(region.lower.x(), region.upper.x());
  std::uniform_real_distribution<double> uy(region.lower.y(), region.upper.y());
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<Eigen::Vector2d> out;
  out.reserve(n);
  std::size_t attempts = 0;
  while (out.size() < n) {
    ++attempts;
    Eigen::Vector2d p(ux(rng), uy(rng));
    const double f = region.contains(p) ? density.value(p) : 0.0;
    if (f > density.upper_bound * (1.0 + 1e-12)) {
      throw ValidationError("rejection sampling: density exceeds its declared envelope");
    }
    if (u01(rng) * density.upper_bound < f) out.push_back(p);
    if (attempts >= kRejectionBudget &&
        static_cast<double>(out.size()) / static_cast<double>(attempts) < kMinAcceptanceRate) {
      throw EnvelopeTooLooseError("rejection sampling: acceptance rate below 1e-4 after " +
                                  std::to_string(attempts) + " proposals");
    }
  }
  return out;
}

Trajectory simulate_motion(const Eigen::Vector2d& start, int length, const MotionModel& motion,
                           const Region& region, Rng& rng) {
  if (length < 1) throw ValidationError("simulate_motion: length must be positive");
  if (!region.contains(start)) throw ValidationError("simulate_motion: start outside region");
  std::uniform_real_distribution<double> speed_dist(motion.speed_min, motion.speed_max);
  std::uniform_real_distribution<double> heading_dist(-std::numbers::pi, std::numbers::pi);
  std::normal_distribution<double> turn(0.0, 1.0);

  Trajectory tr;
  tr.positions.push_back(start);
  const double speed = speed_dist(rng);
  double heading = heading_dist(rng);
  while (tr.length() < length) {
    const Eigen::Vector2d& p = tr.positions.back();
    heading += motion.heading_sigma * turn(rng);
    Eigen::Vector2d next = p + speed * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    int tries = 0;
    while (!region.contains(next) && tries++ < 100) {
      heading = heading_dist(rng);
      next = p + speed * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    }
    tr.positions.push_back(region.contains(next) ? next : p);
  }
  return tr;
}

RecurrentPredictor::RecurrentPredictor(int input_dim, int hidden_dim, int window_len, double learning_rate)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), window_len_(window_len), learning_rate_(learning_rate) {
  if (input_dim < 1 || hidden_dim < 1 || window_len < 1) {
    throw ValidationError("predictor: dimensions must be positive");
  }
  if (!(learning_rate >= 0.0)) throw ValidationError("predictor: learning rate must be >= 0");
  theta_ = Eigen::VectorXd::Zero(off_by() + output_dim());
}

RecurrentPredictor RecurrentPredictor::random(int input_dim, int hidden_dim, int window_len,
                                              double learning_rate, Rng& rng, double scale) {
  RecurrentPredictor net(input_dim, hidden_dim, window_len, learning_rate);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Eigen::Index i = 0; i < net.theta_.size(); ++i) net.theta_(i) = u(rng);
  net.bias().setZero();
  net.bias().middleRows(hidden_dim, hidden_dim).setOnes();
  net.bias_y().setZero();
  return net;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct StepCache {
  Eigen::VectorXd i, f, o, g, c, h, tanh_c;
};

std::vector<StepCache> run_cell(const RecurrentPredictor& net, const Eigen::MatrixXd& window) {
  const int hd = net.hidden_dim();
  if (window.rows() != net.input_dim() || window.cols() != net.window_len()) {
    throw ValidationError("lstm: window must be input_dim x window_len");
  }
  if (!window.allFinite()) throw ValidationError("lstm: non-finite input");
  std::vector<StepCache> steps(static_cast<std::size_t>(window.cols()));
  Eigen::VectorXd h = Eigen::VectorXd::Zero(hd);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(hd);
  const auto wx = net.w_x();
  const auto wh = net.w_h();
  const auto b = net.bias();
  for (Eigen::Index t = 0; t < window.cols(); ++t) {
    Eigen::VectorXd z = wx * window.col(t) + wh * h + b;
    auto& s = steps[t];
    s.i = z.segment(0, hd).unaryExpr(&sigmoid);
    s.f = z.segment(hd, hd).unaryExpr(&sigmoid);
    s.o = z.segment(2 * hd, hd).unaryExpr(&sigmoid);
    s.g = z.segment(3 * hd, hd).array().tanh();
    c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.c = c;
    s.tanh_c = c.array().tanh();
    h = s.o.cwiseProduct(s.tanh_c);
    s.h = h;
  }
  return steps;
}

}  // namespace

Eigen::VectorXd lstm_forward(const RecurrentPredictor& net, const Eigen::MatrixXd& window) {
  const auto steps = run_cell(net, window);
  return net.w_y() * steps.back().h + net.bias_y();
}

double lstm_loss(const RecurrentPredictor& net, const std::vector<SequenceSample>& batch) {
  if (batch.empty()) throw ValidationError("lstm: empty batch");
  double loss = 0.0;
  for (const auto& s : batch) loss += (lstm_forward(net, s.window) - s.target).squaredNorm();
  return loss / static_cast<double>(batch.size());
}

LossGradient lstm_loss_gradient(const RecurrentPredictor& net, const std::vector<SequenceSample>& batch) {
  if (batch.empty()) throw ValidationError("lstm: empty batch");
  const int hd = net.hidden_dim();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  LossGradient out;
  out.gradient = Eigen::VectorXd::Zero(net.parameter_count());
  RecurrentPredictor::Map g_wx(out.gradient.data(), 4 * hd, net.input_dim());
  RecurrentPredictor::Map g_wh(out.gradient.data() + net.off_wh(), 4 * hd, hd);
  RecurrentPredictor::Map g_b(out.gradient.data() + net.off_b(), 4 * hd, 1);
  RecurrentPredictor::Map g_wy(out.gradient.data() + net.off_wy(), net.output_dim(), hd);
  RecurrentPredictor::Map g_by(out.gradient.data() + net.off_by(), net.output_dim(), 1);
  const auto wh = net.w_h();

  for (const auto& sample : batch) {
    const auto steps = run_cell(net, sample.window);
    const Eigen::VectorXd y = net.w_y() * steps.back().h + net.bias_y();
    const Eigen::VectorXd err = y - sample.target;
    out.loss += err.squaredNorm() * inv_n;

    const Eigen::VectorXd dy = 2.0 * inv_n * err;
    g_wy += dy * steps.back().h.transpose();
    g_by += dy;
    Eigen::VectorXd dh = net.w_y().transpose() * dy;
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(hd);
    Eigen::VectorXd dz(4 * hd);
    for (Eigen::Index t = sample.window.cols() - 1; t >= 0; --t) {
      const auto& s = steps[t];
      const Eigen::VectorXd c_prev = t > 0 ? steps[t - 1].c : Eigen::VectorXd::Zero(hd);
      const Eigen::VectorXd h_prev = t > 0 ? steps[t - 1].h : Eigen::VectorXd::Zero(hd);
      const Eigen::ArrayXd d_o = dh.array() * s.tanh_c.array();
      dc.array() += dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square());
      const Eigen::ArrayXd d_i = dc.array() * s.g.array();
      const Eigen::ArrayXd d_g = dc.array() * s.i.array();
      const Eigen::ArrayXd d_f = dc.array() * c_prev.array();
      dz.segment(0, hd) = d_i * s.i.array() * (1.0 - s.i.array());
      dz.segment(hd, hd) = d_f * s.f.array() * (1.0 - s.f.array());
      dz.segment(2 * hd, hd) = d_o * s.o.array() * (1.0 - s.o.array());
      dz.segment(3 * hd, hd) = d_g * (1.0 - s.g.array().square());
      g_wx += dz * sample.window.col(t).transpose();
      g_wh += dz * h_prev.transpose();
      g_b += dz;
      dh = wh.transpose() * dz;
      dc = dc.cwiseProduct(s.f);
    }
  }
  return out;
}

TrainStep lstm_train_step(RecurrentPredictor& net, const std::vector<SequenceSample>& batch, double clip_norm) {
  auto lg = lstm_loss_gradient(net, batch);
  TrainStep step;
  step.loss = lg.loss;
  step.gradient_norm = lg.gradient.norm();
  if (step.gradient_norm > clip_norm) {
    lg.gradient *= clip_norm / step.gradient_norm;
    step.clipped = true;
  }
  net.parameters() -= net.learning_rate() * lg.gradient;
  if (!net.parameters().allFinite()) throw Error("lstm: parameters became non-finite");
  return step;
}

PositionForecaster::PositionForecaster(const ForecasterConfig& config, Rng& rng)
    : config_(config),
      net_(RecurrentPredictor::random(2, config.hidden_dim, config.window_len, config.learning_rate, rng,
                                      config.init_scale)) {}

Eigen::MatrixXd PositionForecaster::encode(const std::vector<Eigen::Vector2d>& history, std::size_t end) const {
  // positions [end - L, end) relative to the newest one
  const auto len = static_cast<std::size_t>(config_.window_len);
  Eigen::MatrixXd w(2, config_.window_len);
  const Eigen::Vector2d& anchor = history[end - 1];
  for (std::size_t t = 0; t < len; ++t) w.col(static_cast<Eigen::Index>(t)) = (history[end - len + t] - anchor) / scale_;
  return w;
}

std::vector<SequenceSample> PositionForecaster::make_samples(const std::vector<Trajectory>& trajectories) const {
  const auto len = static_cast<std::size_t>(config_.window_len);
  std::vector<SequenceSample> out;
  for (const auto& tr : trajectories) {
    for (std::size_t end = len; end < tr.positions.size(); ++end) {
      out.push_back({encode(tr.positions, end), (tr.positions[end] - tr.positions[end - 1]) / scale_});
    }
  }
  return out;
}

double PositionForecaster::train(const std::vector<Trajectory>& trajectories) {
  if (scale_ == 0.0) {
    double ss = 0.0;
    std::size_t count = 0;
    for (const auto& tr : trajectories) {
      for (std::size_t t = 1; t < tr.positions.size(); ++t) {
        ss += (tr.positions[t] - tr.positions[t - 1]).squaredNorm();
        ++count;
      }
    }
    const double rms = count > 0 ? std::sqrt(ss / static_cast<double>(count)) : 0.0;
    scale_ = rms > 1e-9 ? rms : 1.0;
  }
  const auto batch = make_samples(trajectories);
  if (batch.empty()) throw ValidationError("forecaster: trajectories shorter than window_len + 1");
  for (int s = 0; s < config_.train_steps; ++s) lstm_train_step(net_, batch, config_.clip_norm);
  return lstm_loss(net_, batch);
}

Eigen::Vector2d PositionForecaster::predict_next(const std::vector<Eigen::Vector2d>& history) const {
  if (history.size() < static_cast<std::size_t>(config_.window_len)) {
    throw ValidationError("forecaster: history shorter than window_len");
  }
  if (scale_ == 0.0) throw ValidationError("forecaster: not trained");
  const Eigen::VectorXd d = lstm_forward(net_, encode(history, history.size()));
  return history.back() + scale_ * Eigen::Vector2d(d(0), d(1));
}

int algorithm1_rounds(int n0, int n_max) {
  int rounds = 0;
  for (int n = n0; n < n_max; n += std::min(n, n_max - n)) ++rounds;
  return rounds;
}

Algorithm1Result run_algorithm1(std::vector<Trajectory> observed, const Region& region,
                                const Algorithm1Config& config, std::uint64_t seed) {
  if (observed.empty()) throw ValidationError("algorithm1: no users");
  const int n0 = observed.front().length();
  for (const auto& tr : observed) {
    if (tr.length() != n0) throw ValidationError("algorithm1: users must share the sample count");
    for (const auto& p : tr.positions) {
      if (!region.contains(p)) throw ValidationError("algorithm1: observed position outside region");
    }
  }
  if (config.n_max < n0) throw ValidationError("algorithm1: n_max must be >= n0");
  if (config.n_max > n0 && n0 < config.forecaster.window_len + 1) {
    throw ValidationError("algorithm1: n0 must be at least window_len + 1");
  }

  Rng rng(seed);
  Algorithm1Result result{std::move(observed), 0, {}, PositionForecaster(config.forecaster, rng)};
  int n = n0;
  while (n < config.n_max) {
    result.round_losses.push_back(result.forecaster.train(result.positions));
    const int predict = std::min(n, config.n_max - n);
    for (auto& tr : result.positions) {
      for (int k = 0; k < predict; ++k) {
        const Eigen::Vector2d next = result.forecaster.predict_next(tr.positions);
        tr.positions.push_back(region.project(next, tr.positions.back()));
      }
    }
    n += predict;
    ++result.rounds;
  }
  return result;
}

Algorithm1Result run_algorithm1(const Region& region, const Algorithm1Config& config, std::uint64_t seed) {
  if (config.users < 1) throw ValidationError("algorithm1: at least one user required");
  if (config.n0 < 1) throw ValidationError("algorithm1: n0 must be positive");
  Rng rng(seed);
  const auto starts = rejection_sample_positions(region, config.density, static_cast<std::size_t>(config.users), rng);
  std::vector<Trajectory> observed;
  for (const auto& s : starts) observed.push_back(simulate_motion(s, config.n0, config.motion, region, rng));
  return run_algorithm1(std::move(observed), region, config, rng());
}

double one_step_mse(const PositionForecaster& forecaster, const std::vector<Trajectory>& truth, int from) {
  const int first = std::max(from, forecaster.config().window_len);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& tr : truth) {
    for (int t = first; t < tr.length(); ++t) {
      const std::vector<Eigen::Vector2d> history(tr.positions.begin(), tr.positions.begin() + t);
      total += (forecaster.predict_next(history) - tr.positions[t]).squaredNorm();
      ++count;
    }
  }
  if (count == 0) throw ValidationError("one_step_mse: empty horizon");
  return total / static_cast<double>(count);
}

double persistence_mse(const std::vector<Trajectory>& truth, int from) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& tr : truth) {
    for (int t = std::max(from, 1); t < tr.length(); ++t) {
      total += (tr.positions[t - 1] - tr.positions[t]).squaredNorm();
      ++count;
    }
  }
  if (count == 0) throw ValidationError("persistence_mse: empty horizon");
  return total / static_cast<double>(count);
}

}  // namespace irsnoma::mobility
