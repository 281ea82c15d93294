#include <doctest.h>

#include <cmath>

#include "irsnoma/precoding.hpp"

using namespace irsnoma;
using namespace irsnoma::precoding;

namespace {

CMatrix<double> random_complex(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {n(rng), n(rng)};
  return m;
}

CRowVector<double> row(std::initializer_list<double> v) {
  CRowVector<double> r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

}  // namespace

TEST_CASE("cluster representatives") {
  SUBCASE("one user per cluster") {
    std::vector<CRowVector<double>> eff = {row({1, 0}), row({0, 2})};
    CHECK(select_cluster_representatives<double>({{0}, {1}}, eff) == std::vector<int>{0, 1});
  }
  SUBCASE("strongest member") {
    std::vector<CRowVector<double>> eff = {row({0.1}), row({0.9}), row({0.5})};
    CHECK(select_cluster_representatives<double>({{0, 1, 2}}, eff) == std::vector<int>{1});
  }
  SUBCASE("ties go to the lowest index") {
    std::vector<CRowVector<double>> eff = {row({0.3}), row({0.7}), row({0.7})};
    CHECK(select_cluster_representatives<double>({{2, 1, 0}}, eff) == std::vector<int>{1});
  }
  SUBCASE("empty cluster") {
    std::vector<CRowVector<double>> eff = {row({1})};
    CHECK_THROWS_AS(select_cluster_representatives<double>({{0}, {}}, eff), ValidationError);
  }
}

TEST_CASE("zero-forcing precoder") {
  SUBCASE("identity channel") {
    for (int m = 1; m <= 4; ++m) {
      ClusterChannelMatrix<double> h(CMatrix<double>::Identity(m, m));
      const double p = 2.5;
      auto pre = zf_precoder(h, p);
      const double s = std::sqrt(p / m);
      CHECK((pre.columns - s * CMatrix<double>::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-15);
      CHECK(pre.total_power == doctest::Approx(p).epsilon(1e-15));
      CHECK(h.condition_number() == doctest::Approx(1.0));
    }
  }
  SUBCASE("scalar inverse") {
    CMatrix<double> m(1, 1);
    m << 2.0;
    ClusterChannelMatrix<double> h(m);
    auto w = zf_directions(h);
    CHECK(std::abs(w(0, 0) - std::complex<double>(0.5, 0)) < 1e-15);
    CHECK(std::abs((m * w)(0, 0) - std::complex<double>(1, 0)) < 1e-15);
  }
  SUBCASE("random M = 3: residual against an independent solve") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      CMatrix<double> m = random_complex(3, 3, rng);
      ClusterChannelMatrix<double> h(m);
      auto w = zf_directions(h);
      CHECK((m * w - CMatrix<double>::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
      CMatrix<double> ref = m.householderQr().solve(CMatrix<double>::Identity(3, 3));
      CHECK((w - ref).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("power met with equality") {
    Rng rng(4);
    for (int m = 2; m <= 4; ++m) {
      ClusterChannelMatrix<double> h(random_complex(m, m, rng));
      for (double p : {1e-3, 1.0, 1e6}) {
        auto pre = zf_precoder(h, p);
        CHECK(std::abs(pre.columns.squaredNorm() - p) < 1e-9 * std::max(1.0, p));
        CHECK(pre.columns.allFinite());
      }
    }
  }
  SUBCASE("ill-conditioned matrix is refused with its condition number") {
    CMatrix<double> m(2, 2);
    m << 1.0, 1.0, 1.0, 1.0 + 1e-12;
    ClusterChannelMatrix<double> h(m);
    CHECK(h.condition_number() > 1e8);
    try {
      zf_directions(h);
      FAIL("expected IllConditionedError");
    } catch (const IllConditionedError& e) {
      CHECK(e.condition_number() == doctest::Approx(h.condition_number()));
    }
    CHECK_THROWS_AS(zf_precoder(ClusterChannelMatrix<double>(CMatrix<double>::Zero(2, 2)), 1.0),
                    IllConditionedError);
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(ClusterChannelMatrix<double>(CMatrix<double>::Zero(2, 3)), ValidationError);
    ClusterChannelMatrix<double> h(CMatrix<double>::Identity(2, 2));
    CHECK_THROWS_AS(zf_precoder(h, 0.0), ValidationError);
    CHECK_THROWS_AS(zf_precoder(h, std::nan("")), ValidationError);
  }
  SUBCASE("common rotation leaves |H W| unchanged") {
    Rng rng(9);
    std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
    for (int i = 0; i < 20; ++i) {
      CMatrix<double> m = random_complex(3, 3, rng);
      const std::complex<double> c = std::polar(1.0, phase(rng));
      auto a = zf_precoder(ClusterChannelMatrix<double>(m), 1.0);
      auto b = zf_precoder(ClusterChannelMatrix<double>(c * m), 1.0);
      CHECK((b.columns - std::conj(c) * a.columns).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(((m * a.columns).cwiseAbs() - ((c * m) * b.columns).cwiseAbs()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}
