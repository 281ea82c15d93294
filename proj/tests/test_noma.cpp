#include <doctest.h>

#include <cmath>
#include <numeric>

#include "irsnoma/noma.hpp"

using namespace irsnoma;
using namespace irsnoma::noma;

namespace {

CMatrix<double> random_complex(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {n(rng), n(rng)};
  return m;
}

precoding::Precoder<double> unit_precoder(int m) {
  precoding::Precoder<double> p;
  p.columns = CMatrix<double>::Identity(m, m);
  p.total_power = m;
  return p;
}

RVector<double> vec(std::initializer_list<double> v) {
  RVector<double> r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

std::vector<CRowVector<double>> scalar_channels(std::initializer_list<double> gains) {
  std::vector<CRowVector<double>> out;
  for (double g : gains) out.push_back(CRowVector<double>::Constant(1, g));
  return out;
}

Scenario<double> random_scenario(Rng& rng, int k = 4, int m = 2, std::vector<std::vector<int>> clusters = {{0, 1},
                                                                                                          {2, 3}}) {
  Scenario<double> s;
  s.channels.g_matrix = random_complex(k, m, rng);
  int users = 0;
  for (const auto& c : clusters) users += static_cast<int>(c.size());
  for (int u = 0; u < users; ++u) s.channels.user_channels.push_back(random_complex(k, 1, rng).col(0));
  s.channels.noise_variance = 0.1;
  s.resolution_bits = 2;
  s.total_power = 1.0;
  s.clusters = std::move(clusters);
  return s;
}

channel::PhaseConfig random_phase(int k, int bits, Rng& rng) {
  std::uniform_int_distribution<int> lvl(0, (1 << bits) - 1);
  auto p = channel::PhaseConfig::zeros(k, bits);
  for (auto& n : p.indices) n = lvl(rng);
  return p;
}

std::vector<RVector<double>> random_split(const std::vector<std::vector<int>>& clusters, Rng& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<RVector<double>> out;
  for (const auto& c : clusters) {
    RVector<double> a(static_cast<Eigen::Index>(c.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng);
    out.push_back(a / a.sum());
  }
  return out;
}

}  // namespace

TEST_CASE("cluster plan invariants") {
  SUBCASE("valid plan indexes users") {
    auto plan = ClusterPlan<double>::create(3, {{2, 0}, {1}}, {{2, 0}, {1}}, {vec({0.25, 0.75}), vec({1.0})});
    CHECK(plan.members(0) == std::vector<int>{0, 2});
    CHECK(plan.cluster_of(2) == 0);
    CHECK(plan.order_position(2) == 0);
    CHECK(plan.order_position(0) == 1);
    CHECK(plan.alpha(0) == 0.25);
    CHECK(plan.alpha(2) == 0.75);
  }
  SUBCASE("split must sum to one") {
    CHECK_THROWS_AS(ClusterPlan<double>::create(2, {{0, 1}}, {{0, 1}}, {vec({0.5, 0.5 + 1e-9})}), ValidationError);
    CHECK_NOTHROW(ClusterPlan<double>::create(2, {{0, 1}}, {{0, 1}}, {vec({0.5, 0.5 + 1e-13})}));
  }
  SUBCASE("negative alpha") {
    CHECK_THROWS_AS(ClusterPlan<double>::create(2, {{0, 1}}, {{0, 1}}, {vec({1.5, -0.5})}), ValidationError);
  }
  SUBCASE("decoding order must be a permutation") {
    CHECK_THROWS_AS(ClusterPlan<double>::create(2, {{0, 1}}, {{0, 0}}, {vec({0.5, 0.5})}), ValidationError);
  }
  SUBCASE("every user exactly once") {
    CHECK_THROWS_AS(ClusterPlan<double>::create(3, {{0, 1}}, {{0, 1}}, {vec({0.5, 0.5})}), ValidationError);
    CHECK_THROWS_AS(ClusterPlan<double>::create(2, {{0, 1}, {1}}, {{0, 1}, {1}}, {vec({0.5, 0.5}), vec({1.0})}),
                    ValidationError);
  }
}

TEST_CASE("own-signal SINR") {
  SUBCASE("no interference") {
    auto plan = ClusterPlan<double>::uniform(1, {{0}});
    CHECK(sinr_own(0, 0, scalar_channels({1.0}), unit_precoder(1), plan, 1.0) == doctest::Approx(1.0));
  }
  SUBCASE("two users, hand evaluation") {
    auto plan = ClusterPlan<double>::create(2, {{0, 1}}, {{1, 0}}, {vec({0.8, 0.2})});
    const double t = sinr_own(0, 0, scalar_channels({1.0, 1.0}), unit_precoder(1), plan, 0.2);
    CHECK(t == doctest::Approx(0.64 / (0.04 + 0.2)).epsilon(1e-14));
    CHECK(t == doctest::Approx(2.6667).epsilon(1e-4));
  }
  SUBCASE("zero power gives zero SINR") {
    auto plan = ClusterPlan<double>::create(2, {{0, 1}}, {{0, 1}}, {vec({0.0, 1.0})});
    CHECK(sinr_own(0, 0, scalar_channels({1.0, 1.0}), unit_precoder(1), plan, 0.2) == 0.0);
  }
  SUBCASE("power-domain reading") {
    auto plan = ClusterPlan<double>::create(2, {{0, 1}}, {{1, 0}}, {vec({0.8, 0.2})});
    SinrOptions opt;
    opt.alpha_domain = AlphaDomain::Power;
    CHECK(sinr_own(0, 0, scalar_channels({1.0, 1.0}), unit_precoder(1), plan, 0.2, opt) ==
          doctest::Approx(0.8 / (0.2 + 0.2)));
  }
  SUBCASE("raising own alpha never lowers the numerator") {
    Rng rng(5);
    auto s = random_scenario(rng);
    auto bf = prepare_beamforming(s, random_phase(4, 2, rng));
    double prev = -1.0;
    for (double a = 0.0; a <= 1.0 + 1e-12; a += 0.05) {
      const double x = std::min(a, 1.0);
      auto plan = ClusterPlan<double>::create(4, s.clusters, bf.decoding_order, {vec({x, 1.0 - x}), vec({0.5, 0.5})});
      const auto t = sinr_terms(0, 0, 0, bf.effective, bf.precoder, plan, 0.1);
      CHECK(t.signal >= prev);
      prev = t.signal;
    }
  }
}

TEST_CASE("inter-cluster interference models") {
  // user 0 sees both beams; the coherent model adds them as amplitudes
  std::vector<CRowVector<double>> eff(2, CRowVector<double>(2));
  eff[0] << 1.0, 0.0;
  eff[1] << 0.0, 1.0;
  precoding::Precoder<double> pre;
  pre.columns.resize(2, 2);
  pre.columns << 1.0, 0.5, 0.0, 1.0;
  auto plan = ClusterPlan<double>::uniform(2, {{0}, {1}});
  const auto inc = sinr_terms(0, 0, 0, eff, pre, plan, 1.0);
  CHECK(inc.inter == doctest::Approx(0.25));
  SinrOptions opt;
  opt.interference = InterferenceModel::Coherent;
  CHECK(sinr_terms(0, 0, 0, eff, pre, plan, 1.0, opt).inter == doctest::Approx(0.25));

  // three beams: coherent |a + b|^2 differs from |a|^2 + |b|^2
  std::vector<CRowVector<double>> e3(3, CRowVector<double>::Ones(3));
  precoding::Precoder<double> p3;
  p3.columns = CMatrix<double>::Identity(3, 3);
  auto plan3 = ClusterPlan<double>::uniform(3, {{0}, {1}, {2}});
  CHECK(sinr_terms(0, 0, 0, e3, p3, plan3, 1.0).inter == doctest::Approx(2.0));
  CHECK(sinr_terms(0, 0, 0, e3, p3, plan3, 1.0, opt).inter == doctest::Approx(4.0));
}

TEST_CASE("cross-decoding SINR") {
  Rng rng(8);
  auto s = random_scenario(rng, 4, 2, {{0, 1, 2}, {3, 4}});
  auto bf = prepare_beamforming(s, random_phase(4, 2, rng));
  auto plan = ClusterPlan<double>::create(5, s.clusters, bf.decoding_order, random_split(s.clusters, rng));

  SUBCASE("q = p equals own SINR") {
    for (int p = 0; p < 3; ++p) {
      CHECK(sinr_cross(0, p, p, bf.effective, bf.precoder, plan, 0.1) ==
            sinr_own(0, p, bf.effective, bf.precoder, plan, 0.1));
    }
  }
  SUBCASE("identical channels are symmetric") {
    auto eff = bf.effective;
    eff[1] = eff[0];
    CHECK(sinr_cross(0, 1, 0, eff, bf.precoder, plan, 0.1) == sinr_own(0, 0, eff, bf.precoder, plan, 0.1));
  }
  SUBCASE("independent scalar re-evaluation") {
    for (int q : {0, 1, 2}) {
      for (int p : {0, 1, 2}) {
        const auto& h = bf.effective[q];
        std::complex<double> g = 0;
        for (int i = 0; i < 2; ++i) g += h(i) * bf.precoder.columns(i, 0);
        const double num = std::norm(g * plan.alpha(p));
        double den = 0.1;
        for (int l : {0, 1, 2}) {
          if (l != p) den += std::norm(g * plan.alpha(l));
        }
        std::complex<double> leak = 0;
        for (int i = 0; i < 2; ++i) leak += h(i) * bf.precoder.columns(i, 1);
        den += std::norm(leak);
        CHECK(sinr_cross(0, q, p, bf.effective, bf.precoder, plan, 0.1) == doctest::Approx(num / den).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("decoding order by gain") {
  const std::vector<double> g2 = {0.2, 0.9};
  CHECK(decoding_order_by_gain<double>({0, 1}, g2) == std::vector<int>{0, 1});
  const std::vector<double> eq = {0.5, 0.5, 0.5};
  CHECK(decoding_order_by_gain<double>({2, 0, 1}, eq) == std::vector<int>{0, 1, 2});
  // users 1, 2, 3 with gains 0.5, 0.1, 0.3 decode as 2, 3, 1
  const std::vector<double> g3 = {0.5, 0.1, 0.3};
  CHECK(decoding_order_by_gain<double>({0, 1, 2}, g3) == std::vector<int>{1, 2, 0});
}

TEST_CASE("SIC check") {
  SUBCASE("single-user clusters are vacuous") {
    Rng rng(1);
    auto s = random_scenario(rng, 3, 2, {{0}, {1}});
    auto ev = evaluate(s, random_phase(3, 2, rng), {vec({1.0}), vec({1.0})});
    CHECK(ev.report.sic_feasible);
  }
  SUBCASE("identical channels pass") {
    auto plan = ClusterPlan<double>::create(2, {{0, 1}}, {{0, 1}}, {vec({0.7, 0.3})});
    auto r = compute_rates(scalar_channels({0.6, 0.6}), unit_precoder(1), plan, 0.1);
    CHECK(r.sic_feasible);
    CHECK(r.cross(1, 0) == r.sinr[0]);
  }
  SUBCASE("weaker decoder fails") {
    // user 0 is decoded first yet user 1 (decoded later) sees 0's signal worse
    auto plan = ClusterPlan<double>::create(2, {{0, 1}}, {{0, 1}}, {vec({0.7, 0.3})});
    auto r = compute_rates(scalar_channels({1.0, 0.1}), unit_precoder(1), plan, 0.1);
    CHECK_FALSE(r.sic_feasible);
  }
  SUBCASE("gain order with stronger user decoding later chains through extra interference") {
    Rng rng(12);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int premise = 0;
    for (int i = 0; i < 1000; ++i) {
      auto s = random_scenario(rng);
      auto bf = prepare_beamforming(s, random_phase(4, 2, rng));
      auto plan = ClusterPlan<double>::create(4, s.clusters, bf.decoding_order, random_split(s.clusters, rng));
      for (int m = 0; m < 2; ++m) {
        const int b = plan.decoding_order()[m][0];
        const int a = plan.decoding_order()[m][1];
        auto tab = sinr_terms(m, a, b, bf.effective, bf.precoder, plan, 0.1);
        auto tbb = sinr_terms(m, b, b, bf.effective, bf.precoder, plan, 0.1);
        if (rate_from_sinr(tab.value()) < rate_from_sinr(tbb.value())) continue;
        ++premise;
        const double omega = 5.0 * u01(rng) * tbb.interference_plus_noise();
        const double tilde = rate_from_sinr(tbb.signal / (tbb.interference_plus_noise() + omega));
        CHECK(rate_from_sinr(tbb.value()) >= tilde);
        CHECK(rate_from_sinr(tab.signal / (tab.interference_plus_noise() + omega)) + 1e-12 >= tilde);
      }
    }
    CHECK(premise >= 1000);
  }
}

TEST_CASE("QoS check") {
  CHECK(qos_check<double>({0.1, 0.0}, {0.0, 0.0}));
  CHECK(qos_check<double>({0.1, 0.0}, {}));
  CHECK(qos_check<double>({1.0}, {1.0}));
  CHECK_FALSE(qos_check<double>({0.5}, {1.0}));
  CHECK_THROWS_AS(qos_check<double>({0.5}, {-1.0}), ValidationError);
  CHECK_THROWS_AS(qos_check<double>({0.5, 0.5}, {1.0}), ValidationError);
}

TEST_CASE("sum rate") {
  CHECK(sum_rate<double>({0.0, 0.0, 0.0}) == 0.0);
  CHECK(sum_rate<double>({1.0, 1.0}) == doctest::Approx(2.0).epsilon(1e-15));

  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    auto s = random_scenario(rng, 4, 2, {{0, 2, 4}, {1, 3}});
    auto ev = evaluate(s, random_phase(4, 2, rng), random_split(s.clusters, rng));
    double total = 0.0;
    for (double t : ev.report.sinr) total += std::log(1.0 + t) / std::log(2.0);
    CHECK(std::abs(ev.sum_rate() - total) < 1e-12);
    CHECK(std::abs(sum_rate(ev.report) - ev.sum_rate()) < 1e-12);
    for (double t : ev.report.sinr) CHECK(t >= 0.0);
  }
}

TEST_CASE("TDMA baseline") {
  SUBCASE("one user equals single-user NOMA") {
    auto plan = ClusterPlan<double>::uniform(1, {{0}});
    const double p = 2.0, noise = 0.3, g = 0.7;
    precoding::Precoder<double> pre = unit_precoder(1);
    pre.columns *= std::sqrt(p);
    const double noma = compute_rates(scalar_channels({g}), pre, plan, noise).sum_rate;
    CHECK(oma_tdma_sum_rate<double>({g}, p, noise) == doctest::Approx(noma).epsilon(1e-14));
  }
  SUBCASE("two identical users each get half") {
    const double single = std::log2(1.0 + 4.0 * 0.25 / 0.5);
    CHECK(oma_tdma_sum_rate<double>({0.5, 0.5}, 4.0, 0.5) == doctest::Approx(single).epsilon(1e-14));
  }
  SUBCASE("hand-summed instance") {
    const double expected = (std::log2(1.0 + 2.0 * 1.0 / 0.1) + std::log2(1.0 + 2.0 * 0.04 / 0.1) +
                             std::log2(1.0 + 2.0 * 0.25 / 0.1)) /
                            3.0;
    CHECK(oma_tdma_sum_rate<double>({1.0, 0.2, 0.5}, 2.0, 0.1) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK_THROWS_AS(oma_tdma_sum_rate<double>({}, 1.0, 1.0), ValidationError);
}

TEST_CASE("objective invariances") {
  Rng rng(31);
  SUBCASE("global phase-index shift") {
    for (int i = 0; i < 20; ++i) {
      auto s = random_scenario(rng);
      auto phase = random_phase(4, 2, rng);
      auto split = random_split(s.clusters, rng);
      const double base = evaluate(s, phase, split).sum_rate();
      for (int shift = 1; shift < 4; ++shift) {
        auto q = phase;
        for (auto& n : q.indices) n = (n + shift) % 4;
        CHECK(std::abs(evaluate(s, q, split).sum_rate() - base) < 1e-9);
      }
    }
  }
  SUBCASE("relabeling users") {
    for (int i = 0; i < 20; ++i) {
      auto s = random_scenario(rng, 4, 2, {{0, 1, 2}, {3, 4}});
      auto phase = random_phase(4, 2, rng);
      auto split = random_split(s.clusters, rng);
      const double base = evaluate(s, phase, split).sum_rate();

      std::vector<int> perm(5);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);  // old user u becomes perm[u]
      Scenario<double> t = s;
      for (int u = 0; u < 5; ++u) t.channels.user_channels[perm[u]] = s.channels.user_channels[u];
      std::vector<RVector<double>> tsplit;
      for (std::size_t m = 0; m < s.clusters.size(); ++m) {
        std::vector<std::pair<int, double>> pairs;
        for (std::size_t j = 0; j < s.clusters[m].size(); ++j) pairs.push_back({perm[s.clusters[m][j]], split[m](j)});
        std::sort(pairs.begin(), pairs.end());
        t.clusters[m].clear();
        RVector<double> a(static_cast<Eigen::Index>(pairs.size()));
        for (std::size_t j = 0; j < pairs.size(); ++j) {
          t.clusters[m].push_back(pairs[j].first);
          a(j) = pairs[j].second;
        }
        tsplit.push_back(a);
      }
      CHECK(std::abs(evaluate(t, phase, tsplit).sum_rate() - base) < 1e-12);
    }
  }
  SUBCASE("ZF removes inter-cluster leakage at the heads") {
    auto s = random_scenario(rng);
    auto bf = prepare_beamforming(s, random_phase(4, 2, rng));
    REQUIRE(bf.precoder_ok);
    auto plan = ClusterPlan<double>::create(4, s.clusters, bf.decoding_order, random_split(s.clusters, rng));
    for (int m = 0; m < 2; ++m) {
      const int head = bf.representatives[m];
      CHECK(sinr_terms(m, head, head, bf.effective, bf.precoder, plan, 0.1).inter < 1e-20);
    }
  }
}

TEST_CASE("scenario validation") {
  Rng rng(2);
  auto s = random_scenario(rng);
  CHECK_NOTHROW(s.validate());
  auto bad = s;
  bad.clusters = {{0, 1, 2, 3}};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = s;
  bad.clusters = {{0, 1}, {1, 3}};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = s;
  bad.qos_floor = {0.1};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(evaluate(s, channel::PhaseConfig::zeros(3, 2), random_split(s.clusters, rng)), ValidationError);
}

TEST_CASE("rate CSV row per user") {
  auto plan = ClusterPlan<double>::create(2, {{0, 1}}, {{1, 0}}, {vec({0.8, 0.2})});
  auto r = compute_rates(scalar_channels({1.0, 1.0}), unit_precoder(1), plan, 0.2);
  std::ostringstream os;
  write_rate_csv(os, plan, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "user,cluster,order,alpha,sinr,rate");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 2);
}
