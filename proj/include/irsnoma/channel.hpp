#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/geometry.hpp"
#include "irsnoma/types.hpp"

namespace irsnoma::channel {

inline double dbm_to_watts(double p_dbm) { return std::pow(10.0, (p_dbm - 30.0) / 10.0); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct ScenarioGeometry {
  Eigen::Vector3d bs_position{-30.0, 50.0, 10.0};
  Eigen::Vector3d irs_position = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> user_positions;
  Region region = Region::default_region();
  int irs_elements = 25;  // K
  int bs_antennas = 5;    // M

  int user_count() const { return static_cast<int>(user_positions.size()); }

  void validate() const {
    region.validate();
    if (user_positions.empty()) throw ValidationError("geometry: at least one user required");
    if (irs_elements < 1 || bs_antennas < 1) {
      throw ValidationError("geometry: element and antenna counts must be positive");
    }
    for (std::size_t u = 0; u < user_positions.size(); ++u) {
      if (!region.contains(user_positions[u].head<2>())) {
        throw ValidationError("geometry: user " + std::to_string(u) +
                              " lies outside the admissible region");
      }
    }
  }
};

struct RicianConfig {
  double k_factor = db_to_linear(3.0);  // linear
  double path_loss_exponent_g = 2.2;    // BS -> IRS
  double path_loss_exponent_h = 2.8;    // IRS -> user
  double reference_loss_db = 30.0;      // at 1 m
  double noise_power_dbm = -80.0;

  double noise_variance() const { return dbm_to_watts(noise_power_dbm); }

  void validate() const {
    if (!std::isfinite(k_factor) || k_factor < 0.0) {
      throw ValidationError("rician: k_factor must be finite and non-negative");
    }
    if (!(path_loss_exponent_g > 0.0) || !(path_loss_exponent_h > 0.0)) {
      throw ValidationError("rician: path-loss exponents must be positive");
    }
    if (!(noise_variance() > 0.0) || !std::isfinite(noise_variance())) {
      throw ValidationError("rician: noise power must map to a positive variance");
    }
  }
};

/// One block-static realization: G is K x M, each user channel is a K-vector
/// whose conjugate transpose is the IRS -> user row channel.
template <typename Scalar>
struct ChannelRealization {
  CMatrix<Scalar> g_matrix;
  std::vector<CVector<Scalar>> user_channels;
  Scalar noise_variance{1};

  int elements() const { return static_cast<int>(g_matrix.rows()); }
  int antennas() const { return static_cast<int>(g_matrix.cols()); }
  int user_count() const { return static_cast<int>(user_channels.size()); }

  /// The first `k` IRS elements of this realization.
  ChannelRealization truncated(int k) const {
    if (k < 1 || k > elements()) throw ValidationError("truncated: element count out of range");
    ChannelRealization out;
    out.g_matrix = g_matrix.topRows(k);
    out.noise_variance = noise_variance;
    out.user_channels.reserve(user_channels.size());
    for (const auto& h : user_channels) out.user_channels.push_back(h.head(k));
    return out;
  }

  void validate() const {
    if (g_matrix.rows() < 1 || g_matrix.cols() < 1 || user_channels.empty()) {
      throw ValidationError("channel: empty realization");
    }
    for (const auto& h : user_channels) {
      if (h.size() != g_matrix.rows()) throw ValidationError("channel: user channel length != K");
    }
    if (!(noise_variance > Scalar(0))) throw ValidationError("channel: noise variance must be > 0");
  }
};

struct PhaseConfig {
  std::vector<int> indices;
  int resolution_bits = 1;

  int levels() const { return 1 << resolution_bits; }
  int elements() const { return static_cast<int>(indices.size()); }

  static PhaseConfig zeros(int k, int bits) { return PhaseConfig{std::vector<int>(k, 0), bits}; }

  void validate() const {
    if (resolution_bits < 1 || resolution_bits > 16) {
      throw ValidationError("phase: resolution bits must be in [1, 16]");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] < 0 || indices[k] >= levels()) {
        throw ValidationError("phase: index " + std::to_string(indices[k]) + " at element " +
                              std::to_string(k) + " outside [0, 2^B)");
      }
    }
  }

  friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

/// Unit-modulus reflection coefficients exp(j 2 pi n_k / 2^B).
template <typename Scalar = double>
CVector<Scalar> reflection_coefficients(const PhaseConfig& phase) {
  phase.validate();
  CVector<Scalar> v(phase.elements());
  const Scalar step = Scalar(2) * std::numbers::pi_v<Scalar> / Scalar(phase.levels());
  for (int k = 0; k < phase.elements(); ++k) {
    v(k) = std::polar(Scalar(1), step * Scalar(phase.indices[k]));
  }
  return v;
}

/// The passive beamformer v with v^H = [e^{j theta_1}, ..., e^{j theta_K}].
template <typename Scalar = double>
CVector<Scalar> passive_beamformer(const PhaseConfig& phase) {
  return reflection_coefficients<Scalar>(phase).conjugate();
}

/// Phi = diag(h^H) G, so that h^H Theta G = v^H Phi.
template <typename DerivedH, typename DerivedG>
auto cascaded_channel(const Eigen::MatrixBase<DerivedH>& h, const Eigen::MatrixBase<DerivedG>& g) {
  using Mat = Eigen::Matrix<typename DerivedG::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (h.size() != g.rows()) throw ValidationError("cascaded_channel: dimension mismatch");
  Mat phi = h.conjugate().asDiagonal() * g;
  return phi;
}

/// h^H Theta G for Theta = diag(reflection coefficients); the result is 1 x M.
template <typename DerivedH, typename DerivedC, typename DerivedG>
auto effective_channel_from_coefficients(const Eigen::MatrixBase<DerivedH>& h,
                                         const Eigen::MatrixBase<DerivedC>& coefficients,
                                         const Eigen::MatrixBase<DerivedG>& g) {
  using Row = Eigen::Matrix<typename DerivedG::Scalar, 1, Eigen::Dynamic>;
  if (h.size() != g.rows() || coefficients.size() != g.rows()) {
    throw ValidationError("effective_channel: dimension mismatch");
  }
  Row out = h.cwiseProduct(coefficients.conjugate()).adjoint() * g;
  return out;
}

template <typename DerivedH, typename DerivedG>
auto effective_channel(const Eigen::MatrixBase<DerivedH>& h, const PhaseConfig& phase,
                       const Eigen::MatrixBase<DerivedG>& g) {
  using Scalar = typename DerivedG::Scalar::value_type;
  if (phase.elements() != g.rows()) throw ValidationError("effective_channel: dimension mismatch");
  return effective_channel_from_coefficients(h, reflection_coefficients<Scalar>(phase), g);
}

/// Effective (post-IRS) channels of every user for one phase configuration.
template <typename Scalar>
std::vector<CRowVector<Scalar>> effective_channels(const ChannelRealization<Scalar>& ch,
                                                   const CVector<Scalar>& coefficients) {
  std::vector<CRowVector<Scalar>> out;
  out.reserve(ch.user_channels.size());
  for (const auto& h : ch.user_channels) {
    out.push_back(effective_channel_from_coefficients(h, coefficients, ch.g_matrix));
  }
  return out;
}

namespace detail {

/// Half-wavelength ULA response toward unit direction `u` along `axis`.
template <typename Scalar>
CVector<Scalar> ula_response(int n, const Eigen::Vector3d& axis, const Eigen::Vector3d& u) {
  CVector<Scalar> a(n);
  const double spatial = std::numbers::pi * axis.dot(u);
  for (int i = 0; i < n; ++i) a(i) = std::polar(Scalar(1), static_cast<Scalar>(spatial * i));
  return a;
}

inline double path_gain(double distance, double exponent, double reference_loss_db) {
  return std::pow(10.0, -reference_loss_db / 10.0) * std::pow(distance, -exponent);
}

}  // namespace detail

/// Array axes: the BS ULA lies along z (mast-mounted), the IRS elements along y.
inline const Eigen::Vector3d kBsArrayAxis{0.0, 0.0, 1.0};
inline const Eigen::Vector3d kIrsArrayAxis{0.0, 1.0, 0.0};

/// Deterministic line-of-sight components (unit-modulus entries) for G and
/// every user channel.
template <typename Scalar = double>
ChannelRealization<Scalar> line_of_sight(const ScenarioGeometry& geometry) {
  ChannelRealization<Scalar> los;
  const Eigen::Vector3d bs_to_irs = geometry.irs_position - geometry.bs_position;
  const Eigen::Vector3d u_bi = bs_to_irs.normalized();
  CVector<Scalar> a_irs_in = detail::ula_response<Scalar>(geometry.irs_elements, kIrsArrayAxis, -u_bi);
  CVector<Scalar> a_bs = detail::ula_response<Scalar>(geometry.bs_antennas, kBsArrayAxis, u_bi);
  los.g_matrix = a_irs_in * a_bs.adjoint();
  for (const auto& user : geometry.user_positions) {
    const Eigen::Vector3d u_iu = (user - geometry.irs_position).normalized();
    los.user_channels.push_back(detail::ula_response<Scalar>(geometry.irs_elements, kIrsArrayAxis, u_iu));
  }
  return los;
}

/// Rician-faded, path-loss-scaled channels. The direct BS -> user link is
/// blocked and therefore not modelled.
template <typename Scalar = double>
ChannelRealization<Scalar> sample_channels(const ScenarioGeometry& geometry, const RicianConfig& cfg,
                                           Rng& rng) {
  geometry.validate();
  cfg.validate();
  constexpr double kMinDistance = 1e-9;
  const double d_g = (geometry.irs_position - geometry.bs_position).norm();
  if (d_g < kMinDistance) throw DegenerateGeometryError("sample_channels: BS and IRS coincide");
  std::vector<double> d_h;
  for (std::size_t u = 0; u < geometry.user_positions.size(); ++u) {
    double d = (geometry.user_positions[u] - geometry.irs_position).norm();
    if (d < kMinDistance) {
      throw DegenerateGeometryError("sample_channels: user " + std::to_string(u) +
                                    " coincides with the IRS");
    }
    d_h.push_back(d);
  }

  ChannelRealization<Scalar> ch = line_of_sight<Scalar>(geometry);
  ch.noise_variance = static_cast<Scalar>(cfg.noise_variance());
  const Scalar los_w = static_cast<Scalar>(std::sqrt(cfg.k_factor / (cfg.k_factor + 1.0)));
  const Scalar nlos_w = static_cast<Scalar>(std::sqrt(1.0 / (cfg.k_factor + 1.0)));
  // CN(0, 1): real and imaginary parts each with variance 1/2
  std::normal_distribution<Scalar> normal(Scalar(0), static_cast<Scalar>(std::sqrt(0.5)));
  auto scatter = [&]() {
    Scalar re = normal(rng);
    Scalar im = normal(rng);
    return Complex<Scalar>(re, im);
  };

  const Scalar amp_g = static_cast<Scalar>(
      std::sqrt(detail::path_gain(d_g, cfg.path_loss_exponent_g, cfg.reference_loss_db)));
  for (Eigen::Index m = 0; m < ch.g_matrix.cols(); ++m) {
    for (Eigen::Index k = 0; k < ch.g_matrix.rows(); ++k) {
      ch.g_matrix(k, m) = amp_g * (los_w * ch.g_matrix(k, m) + nlos_w * scatter());
    }
  }
  for (std::size_t u = 0; u < ch.user_channels.size(); ++u) {
    const Scalar amp_h = static_cast<Scalar>(
        std::sqrt(detail::path_gain(d_h[u], cfg.path_loss_exponent_h, cfg.reference_loss_db)));
    auto& h = ch.user_channels[u];
    for (Eigen::Index k = 0; k < h.size(); ++k) h(k) = amp_h * (los_w * h(k) + nlos_w * scatter());
  }
  return ch;
}

template <typename Scalar = double>
ChannelRealization<Scalar> sample_channels(const ScenarioGeometry& geometry, const RicianConfig& cfg,
                                           std::uint64_t seed) {
  Rng rng(seed);
  return sample_channels<Scalar>(geometry, cfg, rng);
}

}  // namespace irsnoma::channel
