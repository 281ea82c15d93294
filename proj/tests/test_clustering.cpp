#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "irsnoma/clustering.hpp"

using namespace irsnoma;
using namespace irsnoma::clustering;

namespace {

CVector<double> cvec(std::initializer_list<std::complex<double>> v) {
  CVector<double> r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (auto x : v) r(i++) = x;
  return r;
}

RMatrix<double> blobs(const std::vector<double>& centers, int per, double sd, Rng& rng) {
  std::normal_distribution<double> z(0.0, sd);
  RMatrix<double> x(static_cast<Eigen::Index>(centers.size()) * per, 1);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (int i = 0; i < per; ++i) x(static_cast<Eigen::Index>(c) * per + i, 0) = centers[c] + z(rng);
  }
  return x;
}

RMatrix<double> random_points(int n, int d, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  RMatrix<double> x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
  return x;
}

// Expected complete-data log-likelihood under fixed responsibilities.
double q_function(const GmmParams<double>& p, const Responsibilities<double>& r, const RMatrix<double>& x) {
  double q = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int m = 0; m < p.components(); ++m) q += r.chi(i, m) * (std::log(p.weights(m)) + log_density(p, m, x.row(i)));
  }
  return q;
}

}  // namespace

TEST_CASE("CSI normalization") {
  SUBCASE("real example") {
    auto set = normalize_channels<double>({cvec({3.0, 4.0})});
    CHECK(std::abs(set.normalized[0](0) - 0.6) < 1e-15);
    CHECK(std::abs(set.normalized[0](1) - 0.8) < 1e-15);
    CHECK(set.raw_norms[0] == doctest::Approx(5.0));
    CHECK(set.features.cols() == 4);
    CHECK(set.features(0, 0) == doctest::Approx(0.6));
    CHECK(set.features(0, 2) == 0.0);
  }
  SUBCASE("unit vector unchanged") {
    auto v = cvec({{0.6, 0.0}, {0.0, 0.8}});
    auto set = normalize_channels<double>({v});
    CHECK((set.normalized[0] - v).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("random vectors become unit") {
    Rng rng(1);
    std::normal_distribution<double> z(0.0, 3.0);
    std::vector<CVector<double>> raw;
    for (int i = 0; i < 50; ++i) {
      CVector<double> v(6);
      for (Eigen::Index k = 0; k < 6; ++k) v(k) = {z(rng), z(rng)};
      raw.push_back(v);
    }
    auto set = normalize_channels(raw);
    for (const auto& h : set.normalized) CHECK(std::abs(h.norm() - 1.0) < 1e-12);
    for (Eigen::Index i = 0; i < set.features.rows(); ++i) CHECK(std::abs(set.features.row(i).norm() - 1.0) < 1e-12);
  }
  SUBCASE("zero channel") {
    CHECK_THROWS_AS(normalize_channels<double>({cvec({1.0, 0.0}), cvec({0.0, 0.0})}), DegenerateCsiError);
    CHECK_THROWS_AS(normalize_channels<double>({}), DegenerateCsiError);
  }
}

TEST_CASE("rough partition") {
  SUBCASE("orthogonal groups never merge") {
    Rng rng(2);
    std::normal_distribution<double> z(0.0, 0.02);
    std::vector<CVector<double>> raw;
    for (int i = 0; i < 10; ++i) {
      const bool a = i % 2 == 0;
      CVector<double> v = CVector<double>::Zero(4);
      v(a ? 0 : 2) = 1.0 + z(rng);
      v(a ? 1 : 3) = z(rng);
      raw.push_back(v);
    }
    auto csi = normalize_channels(raw);
    CHECK(correlation(csi, 0, 1) < 0.9);
    for (int trial = 0; trial < 20; ++trial) {
      PartitionOptions opt;
      opt.rho2 = 0.9;
      auto part = rough_partition(csi, 2, opt, rng);
      for (int i = 2; i < 10; ++i) CHECK(part.assignment[i] == part.assignment[i % 2]);
      CHECK(part.assignment[0] != part.assignment[1]);
    }
  }
  SUBCASE("as many users as clusters") {
    Rng rng(3);
    auto csi = normalize_channels<double>({cvec({1.0, 0.0}), cvec({0.0, 1.0}), cvec({1.0, 1.0})});
    auto part = rough_partition(csi, 3, PartitionOptions{}, rng);
    std::set<int> labels(part.assignment.begin(), part.assignment.end());
    CHECK(labels.size() == 3);
  }
  SUBCASE("errors") {
    Rng rng(4);
    auto csi = normalize_channels<double>({cvec({1.0, 0.0})});
    CHECK_THROWS_AS(rough_partition(csi, 2, PartitionOptions{}, rng), ValidationError);
    PartitionOptions bad;
    bad.rho1 = -1.0;
    CHECK_THROWS_AS(rough_partition(csi, 1, bad, rng), ValidationError);
  }
  SUBCASE("gain difference and correlation") {
    auto csi = normalize_channels<double>({cvec({2.0, 0.0}), cvec({0.0, 1.0}), cvec({1.0, 0.0})});
    CHECK(gain_difference(csi, 0, 1) == doctest::Approx(0.5));
    CHECK(correlation(csi, 0, 1) == doctest::Approx(0.0));
    CHECK(correlation(csi, 0, 2) == doctest::Approx(1.0));
  }
}

TEST_CASE("GMM initialization") {
  SUBCASE("one point per cluster hits the variance floor") {
    RMatrix<double> x(2, 1);
    x << 0.0, 5.0;
    auto p = init_gmm({0, 1}, x, 2);
    CHECK(p.variances(0) == kVarianceFloor);
    CHECK(p.variances(1) == kVarianceFloor);
  }
  SUBCASE("hand arithmetic") {
    RMatrix<double> x(3, 1);
    x << 0.0, 7.0, 2.0;
    auto p = init_gmm({0, 1, 0}, x, 2);
    CHECK(p.means(0, 0) == doctest::Approx(1.0));
    CHECK(p.variances(0) == doctest::Approx(1.0));
    CHECK(p.weights(0) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("weights on the simplex") {
    Rng rng(5);
    auto x = random_points(30, 3, rng);
    std::vector<int> a(30);
    for (int i = 0; i < 30; ++i) a[i] = i % 4;
    auto p = init_gmm(a, x, 4);
    CHECK(std::abs(p.weights.sum() - 1.0) < 1e-12);
    CHECK_NOTHROW(p.validate());
  }
  SUBCASE("empty cluster") {
    RMatrix<double> x(2, 1);
    x << 0.0, 1.0;
    CHECK_THROWS_AS(init_gmm({0, 0}, x, 2), ValidationError);
  }
}

TEST_CASE("E-step") {
  Rng rng(6);
  SUBCASE("single component") {
    auto x = random_points(10, 2, rng);
    auto p = init_gmm(std::vector<int>(10, 0), x, 1);
    CHECK((em_e_step(p, x).chi.array() == 1.0).all());
  }
  SUBCASE("equidistant point") {
    GmmParams<double> p;
    p.weights = RVector<double>::Constant(2, 0.5);
    p.means.resize(2, 1);
    p.means << -1.0, 1.0;
    p.variances = RVector<double>::Constant(2, 0.7);
    RMatrix<double> x(1, 1);
    x << 0.0;
    auto r = em_e_step(p, x);
    CHECK(std::abs(r.chi(0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(r.chi(0, 1) - 0.5) < 1e-12);
  }
  SUBCASE("rows normalized, far points do not underflow") {
    auto x = random_points(40, 3, rng);
    x.row(0).setConstant(1e4);
    auto p = init_gmm([] {
      std::vector<int> a(40);
      for (int i = 0; i < 40; ++i) a[i] = i % 3;
      return a;
    }(), x, 3);
    auto r = em_e_step(p, x);
    for (Eigen::Index i = 0; i < r.chi.rows(); ++i) {
      CHECK(std::abs(r.chi.row(i).sum() - 1.0) < 1e-12);
      CHECK((r.chi.row(i).array() >= 0.0).all());
      CHECK((r.chi.row(i).array() <= 1.0).all());
    }
  }
}

TEST_CASE("M-step") {
  Rng rng(7);
  auto x = random_points(20, 2, rng);
  SUBCASE("hard responsibilities give cluster means") {
    Responsibilities<double> r;
    r.chi = RMatrix<double>::Zero(20, 2);
    for (int i = 0; i < 20; ++i) r.chi(i, i < 8 ? 0 : 1) = 1.0;
    auto p = em_m_step(r, x);
    CHECK((p.means.row(0) - x.topRows(8).colwise().mean()).norm() < 1e-12);
    CHECK((p.means.row(1) - x.bottomRows(12).colwise().mean()).norm() < 1e-12);
    CHECK(p.weights(0) == doctest::Approx(0.4));
  }
  SUBCASE("uniform responsibilities give the global mean") {
    Responsibilities<double> r;
    r.chi = RMatrix<double>::Constant(20, 3, 1.0 / 3.0);
    auto p = em_m_step(r, x);
    for (int m = 0; m < 3; ++m) CHECK((p.means.row(m) - x.colwise().mean()).norm() < 1e-12);
    CHECK(std::abs(p.weights.sum() - 1.0) < 1e-12);
  }
  SUBCASE("dead component is re-seeded") {
    Responsibilities<double> r;
    r.chi = RMatrix<double>::Zero(20, 2);
    r.chi.col(0).setOnes();
    auto p = em_m_step(r, x);
    CHECK(p.weights(1) > 0.0);
    CHECK(std::abs(p.weights.sum() - 1.0) < 1e-12);
    CHECK_NOTHROW(p.validate());
  }
  SUBCASE("likelihood never drops") {
    for (int d = 0; d < 20; ++d) {
      auto y = random_points(30, 1 + d % 3, rng);
      std::vector<int> a(30);
      for (int i = 0; i < 30; ++i) a[i] = (i * 7 + d) % 3;
      auto p = init_gmm(a, y, 3);
      for (int it = 0; it < 30; ++it) {
        const double before = log_likelihood(p, y);
        p = em_m_step(em_e_step(p, y), y);
        CHECK(log_likelihood(p, y) >= before - 1e-9);
        CHECK(std::abs(p.weights.sum() - 1.0) < 1e-12);
      }
    }
  }
  SUBCASE("closed form maximizes the Q-function") {
    auto y = random_points(12, 2, rng);
    std::vector<int> a(12);
    for (int i = 0; i < 12; ++i) a[i] = i % 2;
    auto r = em_e_step(init_gmm(a, y, 2), y);
    auto p = em_m_step(r, y);
    const double q0 = q_function(p, r, y);
    const double h = 1e-4;
    for (int m = 0; m < 2; ++m) {
      for (int j = 0; j < 2; ++j) {
        for (double s : {h, -h}) {
          auto t = p;
          t.means(m, j) += s;
          CHECK(q_function(t, r, y) <= q0 + 1e-8);
        }
      }
      for (double s : {h, -h}) {
        auto t = p;
        t.variances(m) += s;
        CHECK(q_function(t, r, y) <= q0 + 1e-8);
      }
    }
    for (double s : {h, -h}) {  // move weight mass along the simplex
      auto t = p;
      t.weights(0) += s;
      t.weights(1) -= s;
      CHECK(q_function(t, r, y) <= q0 + 1e-8);
    }
  }
}

TEST_CASE("log-likelihood") {
  SUBCASE("unit density") {
    GmmParams<double> p;
    p.weights = RVector<double>::Ones(1);
    p.means = RMatrix<double>::Constant(1, 1, 3.0);
    p.variances = RVector<double>::Constant(1, 1.0 / (2.0 * std::numbers::pi));
    RMatrix<double> x(1, 1);
    x << 3.0;
    CHECK(std::abs(log_likelihood(p, x)) < 1e-14);
  }
  Rng rng(8);
  auto x = random_points(25, 2, rng);
  std::vector<int> a(25);
  for (int i = 0; i < 25; ++i) a[i] = i % 3;
  auto p = init_gmm(a, x, 3);
  SUBCASE("duplicated data doubles it") {
    RMatrix<double> xx(50, 2);
    xx << x, x;
    CHECK(log_likelihood(p, xx) == doctest::Approx(2.0 * log_likelihood(p, x)).epsilon(1e-12));
  }
  SUBCASE("matches a naive evaluation") {
    double naive = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (int m = 0; m < 3; ++m) {
        const double v = p.variances(m);
        s += p.weights(m) * std::exp(-(x.row(i) - p.means.row(m)).squaredNorm() / (2 * v)) / (2 * std::numbers::pi * v);
      }
      naive += std::log(s);
    }
    CHECK(std::abs(log_likelihood(p, x) - naive) < 1e-9);
  }
}

TEST_CASE("fit") {
  SUBCASE("well-separated blobs") {
    Rng rng(9);
    auto x = blobs({0.0, 10.0}, 50, 0.5, rng);
    auto res = fit_features(x, 2, FitOptions{}, rng);
    CHECK(res.converged);
    const double lo = std::min(res.params.means(0, 0), res.params.means(1, 0));
    const double hi = std::max(res.params.means(0, 0), res.params.means(1, 0));
    CHECK(std::abs(lo - x.topRows(50).mean()) < 0.2);
    CHECK(std::abs(hi - x.bottomRows(50).mean()) < 0.2);
    for (std::size_t i = 1; i < res.log_likelihood_trace.size(); ++i) {
      CHECK(res.log_likelihood_trace[i] >= res.log_likelihood_trace[i - 1] - 1e-9);
    }
  }
  SUBCASE("already at a fixed point") {
    Rng rng(10);
    auto x = random_points(30, 1, rng);
    GmmParams<double> p;
    p.weights = RVector<double>::Ones(1);
    p.means = x.colwise().mean();
    p.variances = RVector<double>::Constant(1, (x.array() - x.mean()).square().mean());
    auto res = run_em(p, x, 1e-15, 100);
    CHECK(res.converged);
    CHECK(res.iterations <= 2);
  }
  SUBCASE("non-convergence is flagged") {
    Rng rng(11);
    auto x = random_points(40, 2, rng);
    FitOptions opt;
    opt.max_iter = 1;
    opt.epsilon = 1e-300;
    auto res = fit_features(x, 3, opt, rng);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);
  }
  SUBCASE("ten users, five clusters on CSI") {
    Rng rng(12);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<CVector<double>> raw;
      for (int u = 0; u < 10; ++u) {
        CVector<double> v(5);
        for (Eigen::Index k = 0; k < 5; ++k) v(k) = {z(rng), z(rng)};
        raw.push_back(v);
      }
      auto res = fit(normalize_channels(raw), 5, FitOptions{}, rng);
      auto occ = res.occupancy();
      CHECK(occ.size() == 5);
      int total = 0;
      for (int c : occ) {
        CHECK(c > 0);
        total += c;
      }
      CHECK(total == 10);
      auto members = members_from_assignment(res.assignment, 5);
      CHECK(members.size() == 5);
    }
  }
  SUBCASE("component permutation permutes the fit") {
    Rng rng(13);
    auto x = blobs({-4.0, 0.0, 5.0}, 15, 1.0, rng);
    std::vector<int> a(45);
    for (int i = 0; i < 45; ++i) a[i] = i / 15;
    auto p = init_gmm(a, x, 3);
    const int perm[3] = {2, 0, 1};
    GmmParams<double> q = p;
    for (int m = 0; m < 3; ++m) {
      q.weights(perm[m]) = p.weights(m);
      q.means.row(perm[m]) = p.means.row(m);
      q.variances(perm[m]) = p.variances(m);
    }
    auto rp = run_em(p, x, 1e-12, 200);
    auto rq = run_em(q, x, 1e-12, 200);
    for (int m = 0; m < 3; ++m) {
      CHECK(std::abs(rq.params.means(perm[m], 0) - rp.params.means(m, 0)) < 1e-9);
      CHECK(std::abs(rq.params.variances(perm[m]) - rp.params.variances(m)) < 1e-9);
    }
  }
  SUBCASE("bad epsilon") {
    Rng rng(14);
    auto x = random_points(5, 1, rng);
    FitOptions opt;
    opt.epsilon = 0.0;
    CHECK_THROWS_AS(fit_features(x, 1, opt, rng), ValidationError);
  }
}
