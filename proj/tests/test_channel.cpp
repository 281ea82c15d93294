#include <doctest.h>

#include <cmath>
#include <complex>

#include "irsnoma/channel.hpp"

using namespace irsnoma;
using namespace irsnoma::channel;

namespace {

ScenarioGeometry small_geometry() {
  ScenarioGeometry g;
  g.irs_elements = 4;
  g.bs_antennas = 2;
  g.user_positions = {{20.0, 20.0, 0.0}, {60.0, 80.0, 0.0}};
  return g;
}

CMatrix<double> random_complex(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {n(rng), n(rng)};
  return m;
}

}  // namespace

TEST_CASE("dBm conversion") {
  CHECK(dbm_to_watts(30.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(dbm_to_watts(0.0) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(dbm_to_watts(20.0) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("reflection coefficients") {
  SUBCASE("zero phase") {
    auto v = reflection_coefficients(PhaseConfig::zeros(5, 3));
    for (Eigen::Index k = 0; k < v.size(); ++k) CHECK(std::abs(v(k) - std::complex<double>(1, 0)) == 0.0);
  }
  SUBCASE("B = 1, n = 1 is -1") {
    auto v = reflection_coefficients(PhaseConfig{{1}, 1});
    CHECK(std::abs(v(0) - std::complex<double>(-1, 0)) < 1e-15);
  }
  SUBCASE("B = 5, n = 8 is j") {
    auto v = reflection_coefficients(PhaseConfig{{8}, 5});
    CHECK(std::abs(v(0) - std::complex<double>(0, 1)) < 1e-15);
  }
  SUBCASE("passive beamformer conjugates") {
    PhaseConfig p{{1, 3}, 2};
    CHECK((passive_beamformer(p) - reflection_coefficients(p).conjugate()).norm() == 0.0);
  }
  SUBCASE("out-of-range index") {
    CHECK_THROWS_AS(reflection_coefficients(PhaseConfig{{4}, 2}), ValidationError);
    CHECK_THROWS_AS(reflection_coefficients(PhaseConfig{{-1}, 2}), ValidationError);
    CHECK_THROWS_AS(reflection_coefficients(PhaseConfig{{0}, 0}), ValidationError);
  }
}

TEST_CASE("effective channel") {
  SUBCASE("identity case") {
    CVector<double> h(1);
    h << 1.0;
    CMatrix<double> g(1, 1);
    g << 1.0;
    auto e = effective_channel(h, PhaseConfig::zeros(1, 1), g);
    CHECK(std::abs(e(0) - std::complex<double>(1, 0)) < 1e-15);
  }

  Rng rng(11);
  const CVector<double> h = random_complex(4, 1, rng).col(0);
  const CMatrix<double> g = random_complex(4, 2, rng);

  SUBCASE("matches a dense triple product") {
    PhaseConfig p{{0, 1, 2, 3}, 2};
    const double pi = std::numbers::pi;
    CMatrix<double> theta = CMatrix<double>::Zero(4, 4);
    for (int k = 0; k < 4; ++k) theta(k, k) = std::exp(std::complex<double>(0, 2 * pi * p.indices[k] / 4.0));
    CMatrix<double> expected(1, 2);
    for (int m = 0; m < 2; ++m) {
      std::complex<double> acc = 0;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) acc += std::conj(h(i)) * theta(i, j) * g(j, m);
      }
      expected(0, m) = acc;
    }
    CHECK((effective_channel(h, p, g) - expected).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("cascaded form v^H Phi") {
    PhaseConfig p{{3, 0, 2, 1}, 2};
    auto phi = cascaded_channel(h, g);
    CRowVector<double> via_phi = passive_beamformer(p).adjoint() * phi;
    CHECK((via_phi - effective_channel(h, p, g)).norm() < 1e-12);
  }

  SUBCASE("common phase rotation keeps magnitudes") {
    for (int shift = 1; shift < 8; ++shift) {
      PhaseConfig p{{0, 5, 2, 7}, 3};
      PhaseConfig q = p;
      for (auto& n : q.indices) n = (n + shift) % 8;
      auto a = effective_channel(h, p, g);
      auto b = effective_channel(h, q, g);
      CHECK((a.cwiseAbs() - b.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  SUBCASE("dimension mismatch") { CHECK_THROWS_AS(effective_channel(h, PhaseConfig::zeros(3, 2), g), ValidationError); }
}

TEST_CASE("channel sampling") {
  const auto geo = small_geometry();

  SUBCASE("same seed gives identical realizations") {
    const auto a = sample_channels<double>(geo, RicianConfig{}, 77);
    const auto b = sample_channels<double>(geo, RicianConfig{}, 77);
    CHECK(a.g_matrix == b.g_matrix);
    for (int u = 0; u < 2; ++u) CHECK(a.user_channels[u] == b.user_channels[u]);
    CHECK(a.noise_variance == b.noise_variance);
    const auto c = sample_channels<double>(geo, RicianConfig{}, 78);
    CHECK(a.g_matrix != c.g_matrix);
  }

  SUBCASE("shapes and noise") {
    const auto ch = sample_channels<double>(geo, RicianConfig{}, 3);
    CHECK(ch.elements() == 4);
    CHECK(ch.antennas() == 2);
    CHECK(ch.user_count() == 2);
    CHECK(ch.noise_variance == doctest::Approx(1e-11).epsilon(1e-12));
    const auto t = ch.truncated(2);
    CHECK(t.elements() == 2);
    CHECK(t.g_matrix == ch.g_matrix.topRows(2));
    CHECK_THROWS_AS(ch.truncated(5), ValidationError);
  }

  SUBCASE("infinite K-factor limit is pure line of sight") {
    RicianConfig cfg;
    cfg.k_factor = 1e300;
    const auto ch = sample_channels<double>(geo, cfg, 5);
    const auto los = line_of_sight<double>(geo);
    const double d_g = (geo.irs_position - geo.bs_position).norm();
    const double amp_g = std::sqrt(std::pow(10.0, -3.0) * std::pow(d_g, -2.2));
    CHECK((ch.g_matrix - amp_g * los.g_matrix).cwiseAbs().maxCoeff() < 1e-14 * amp_g);
    for (int u = 0; u < 2; ++u) {
      const double d = geo.user_positions[u].norm();
      const double amp = std::sqrt(std::pow(10.0, -3.0) * std::pow(d, -2.8));
      CHECK((ch.user_channels[u] - amp * los.user_channels[u]).cwiseAbs().maxCoeff() < 1e-14 * amp);
    }
  }

  SUBCASE("Rayleigh second moment matches the path gain") {
    RicianConfig cfg;
    cfg.k_factor = 0.0;
    ScenarioGeometry g1 = geo;
    g1.irs_elements = 1;
    g1.bs_antennas = 1;
    g1.user_positions.resize(1);
    Rng rng(2024);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::norm(sample_channels<double>(g1, cfg, rng).g_matrix(0, 0));
    const double d_g = (g1.irs_position - g1.bs_position).norm();
    const double expected = std::pow(10.0, -3.0) * std::pow(d_g, -2.2);
    // |CN(0, s)|^2 is exponential: standard deviation equals the mean
    CHECK(std::abs(sum / n - expected) < 3.0 * expected / std::sqrt(double(n)));
  }

  SUBCASE("line-of-sight entries have unit modulus") {
    const auto los = line_of_sight<double>(geo);
    CHECK((los.g_matrix.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-14);
    CHECK((los.user_channels[1].cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-14);
  }

  SUBCASE("degenerate geometry") {
    auto g = geo;
    g.user_positions[0] = g.irs_position;
    CHECK_THROWS_AS(sample_channels<double>(g, RicianConfig{}, 1), DegenerateGeometryError);
    g = geo;
    g.bs_position = g.irs_position;
    CHECK_THROWS_AS(sample_channels<double>(g, RicianConfig{}, 1), DegenerateGeometryError);
  }

  SUBCASE("invalid inputs") {
    auto g = geo;
    g.user_positions[0] = {5.0, 50.0, 0.0};  // inside the default obstacle
    CHECK_THROWS_AS(sample_channels<double>(g, RicianConfig{}, 1), ValidationError);
    RicianConfig bad;
    bad.k_factor = -1.0;
    CHECK_THROWS_AS(sample_channels<double>(geo, bad, 1), ValidationError);
  }
}

TEST_CASE("region") {
  const Region r = Region::default_region();
  CHECK(r.contains({50.0, 50.0}));
  CHECK_FALSE(r.contains({5.0, 50.0}));
  CHECK_FALSE(r.contains({150.0, 50.0}));
  CHECK(r.project({150.0, 20.0}, {1.0, 1.0}) == Eigen::Vector2d(100.0, 20.0));
  CHECK(r.project({-3.0, 50.0}, {1.0, 1.0}) == Eigen::Vector2d(1.0, 1.0));
}
