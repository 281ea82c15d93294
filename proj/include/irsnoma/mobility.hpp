#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/geometry.hpp"
#include "irsnoma/types.hpp"

namespace irsnoma::mobility {

struct Trajectory {
  std::vector<Eigen::Vector2d> positions;
  double timestep = 1.0;  // seconds per slot

  int length() const { return static_cast<int>(positions.size()); }
};

/// Unnormalized target density over the plane, bounded above by
/// `upper_bound` on the region. Points outside the region have density 0.
struct TargetDensity {
  std::function<double(const Eigen::Vector2d&)> value;
  double upper_bound = 1.0;

  static TargetDensity uniform() {
    return {[](const Eigen::Vector2d&) { return 1.0; }, 1.0};
  }
};

/// Acceptance rates below this over the sampling budget abort sampling.
inline constexpr double kMinAcceptanceRate = 1e-4;
inline constexpr std::size_t kRejectionBudget = 1'000'000;

/// Rejection sampling with a uniform proposal over the region's bounding box.
std::vector<Eigen::Vector2d> rejection_sample_positions(const Region& region, const TargetDensity& density,
                                                        std::size_t n, Rng& rng);

/// Ground-truth motion: constant speed with a Gaussian heading perturbation
/// per slot. Steps leaving the region are rejected and re-drawn with a fresh
/// heading.
struct MotionModel {
  double speed_min = 0.5;  // m per slot
  double speed_max = 1.5;
  double heading_sigma = 0.1;  // rad per slot
};

Trajectory simulate_motion(const Eigen::Vector2d& start, int length, const MotionModel& motion,
                           const Region& region, Rng& rng);

/// Single LSTM cell followed by a linear head. Parameters live in one flat
/// vector: [W_x (4H x I) | W_h (4H x H) | b (4H) | W_y (O x H) | b_y (O)],
/// column-major, gate order (input, forget, output, candidate).
class RecurrentPredictor {
 public:
  RecurrentPredictor(int input_dim, int hidden_dim, int window_len, double learning_rate);

  /// Uniform(-scale, scale) weights, zero biases except a forget-gate bias of 1.
  static RecurrentPredictor random(int input_dim, int hidden_dim, int window_len, double learning_rate,
                                   Rng& rng, double scale = 0.3);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int output_dim() const { return input_dim_; }
  int window_len() const { return window_len_; }
  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr) { learning_rate_ = lr; }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  Eigen::Index parameter_count() const { return theta_.size(); }

  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using Map = Eigen::Map<Eigen::MatrixXd>;
  ConstMap w_x() const { return block(0, 4 * hidden_dim_, input_dim_); }
  ConstMap w_h() const { return block(off_wh(), 4 * hidden_dim_, hidden_dim_); }
  ConstMap bias() const { return block(off_b(), 4 * hidden_dim_, 1); }
  ConstMap w_y() const { return block(off_wy(), output_dim(), hidden_dim_); }
  ConstMap bias_y() const { return block(off_by(), output_dim(), 1); }

  Map w_x() { return block(0, 4 * hidden_dim_, input_dim_); }
  Map w_h() { return block(off_wh(), 4 * hidden_dim_, hidden_dim_); }
  Map bias() { return block(off_b(), 4 * hidden_dim_, 1); }
  Map w_y() { return block(off_wy(), output_dim(), hidden_dim_); }
  Map bias_y() { return block(off_by(), output_dim(), 1); }

  Eigen::Index off_wh() const { return 4 * hidden_dim_ * input_dim_; }
  Eigen::Index off_b() const { return off_wh() + 4 * hidden_dim_ * hidden_dim_; }
  Eigen::Index off_wy() const { return off_b() + 4 * hidden_dim_; }
  Eigen::Index off_by() const { return off_wy() + output_dim() * hidden_dim_; }

 private:
  ConstMap block(Eigen::Index off, Eigen::Index r, Eigen::Index c) const { return ConstMap(theta_.data() + off, r, c); }
  Map block(Eigen::Index off, Eigen::Index r, Eigen::Index c) { return Map(theta_.data() + off, r, c); }

  int input_dim_;
  int hidden_dim_;
  int window_len_;
  double learning_rate_;
  Eigen::VectorXd theta_;
};

/// Input window (input_dim x window_len, one column per step) and target.
struct SequenceSample {
  Eigen::MatrixXd window;
  Eigen::VectorXd target;
};

Eigen::VectorXd lstm_forward(const RecurrentPredictor& net, const Eigen::MatrixXd& window);

/// Mean over the batch of the squared prediction error.
double lstm_loss(const RecurrentPredictor& net, const std::vector<SequenceSample>& batch);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Loss and its gradient by backpropagation through time over the window.
LossGradient lstm_loss_gradient(const RecurrentPredictor& net, const std::vector<SequenceSample>& batch);

struct TrainStep {
  double loss = 0.0;  // before the update
  double gradient_norm = 0.0;
  bool clipped = false;
};

/// One plain gradient-descent step; gradients above `clip_norm` are rescaled
/// to it and the step is flagged.
TrainStep lstm_train_step(RecurrentPredictor& net, const std::vector<SequenceSample>& batch,
                          double clip_norm = 10.0);

struct ForecasterConfig {
  int hidden_dim = 16;
  int window_len = 8;
  double learning_rate = 0.05;
  int train_steps = 300;  // per training round
  double clip_norm = 10.0;
  double init_scale = 0.3;
};

/// Wraps the predictor for position data: a window of the last `window_len`
/// positions, expressed relative to the newest one and divided by a
/// displacement scale, predicts the next displacement.
class PositionForecaster {
 public:
  PositionForecaster(const ForecasterConfig& config, Rng& rng);

  const ForecasterConfig& config() const { return config_; }
  const RecurrentPredictor& predictor() const { return net_; }
  double scale() const { return scale_; }

  std::vector<SequenceSample> make_samples(const std::vector<Trajectory>& trajectories) const;

  /// Fixes the displacement scale (first call only) and runs
  /// `config().train_steps` gradient steps; returns the final loss.
  double train(const std::vector<Trajectory>& trajectories);

  Eigen::Vector2d predict_next(const std::vector<Eigen::Vector2d>& history) const;

 private:
  Eigen::MatrixXd encode(const std::vector<Eigen::Vector2d>& history, std::size_t end) const;

  ForecasterConfig config_;
  RecurrentPredictor net_;
  double scale_ = 0.0;
};

struct Algorithm1Config {
  int users = 10;
  int n0 = 16;
  int n_max = 32;
  ForecasterConfig forecaster;
  MotionModel motion;
  TargetDensity density = TargetDensity::uniform();
};

struct Algorithm1Result {
  std::vector<Trajectory> positions;  // n_max positions per user
  int rounds = 0;
  std::vector<double> round_losses;
  PositionForecaster forecaster;
};

/// Alternates training on the accumulated samples with predicting as many
/// new positions as there are samples, so the set doubles each round until
/// it reaches n_max (the final round is truncated to land on n_max).
Algorithm1Result run_algorithm1(std::vector<Trajectory> observed, const Region& region,
                                const Algorithm1Config& config, std::uint64_t seed);

/// Same loop starting from n0 positions per user: starting points drawn by
/// rejection sampling, then evolved by the motion model.
Algorithm1Result run_algorithm1(const Region& region, const Algorithm1Config& config, std::uint64_t seed);

/// Number of doubling rounds needed to grow n0 samples to n_max.
int algorithm1_rounds(int n0, int n_max);

/// Mean squared one-step error of the forecaster over positions t >= from,
/// each predicted from the true history before it.
double one_step_mse(const PositionForecaster& forecaster, const std::vector<Trajectory>& truth, int from);

/// Same error for the persistence forecast (repeat the last position).
double persistence_mse(const std::vector<Trajectory>& truth, int from);

}  // namespace irsnoma::mobility
