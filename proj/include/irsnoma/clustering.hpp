#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/types.hpp"

namespace irsnoma::clustering {

inline constexpr double kVarianceFloor = 1e-10;

/// CSI of every user, the unit-norm channels, and their real embedding
/// (row lambda = [Re h~; Im h~]).
template <typename Scalar>
struct CsiFeatureSet {
  std::vector<CVector<Scalar>> raw;
  std::vector<CVector<Scalar>> normalized;
  std::vector<Scalar> raw_norms;
  RMatrix<Scalar> features;

  int size() const { return static_cast<int>(raw.size()); }
};

template <typename Scalar>
CsiFeatureSet<Scalar> normalize_channels(const std::vector<CVector<Scalar>>& raw) {
  if (raw.empty()) throw DegenerateCsiError("normalize_channels: empty CSI set");
  const Eigen::Index k = raw.front().size();
  CsiFeatureSet<Scalar> set;
  set.raw = raw;
  set.features.resize(static_cast<Eigen::Index>(raw.size()), 2 * k);
  for (std::size_t u = 0; u < raw.size(); ++u) {
    if (raw[u].size() != k) throw DegenerateCsiError("normalize_channels: ragged CSI set");
    const Scalar n = raw[u].norm();
    if (!(n > Scalar(0)) || !std::isfinite(n)) {
      throw DegenerateCsiError("normalize_channels: user " + std::to_string(u) + " has a zero channel");
    }
    set.raw_norms.push_back(n);
    set.normalized.push_back(raw[u] / n);
    const auto row = static_cast<Eigen::Index>(u);
    set.features.row(row).head(k) = set.normalized.back().real().transpose();
    set.features.row(row).tail(k) = set.normalized.back().imag().transpose();
  }
  return set;
}

/// |h~_a^H h~_b| / (|h~_a| |h~_b|).
template <typename Scalar>
Scalar correlation(const CsiFeatureSet<Scalar>& csi, int a, int b) {
  const auto& x = csi.normalized[a];
  const auto& y = csi.normalized[b];
  return std::abs(x.dot(y)) / (x.norm() * y.norm());
}

/// Gain difference of the raw channels, relative to the strongest user of
/// the set (normalized vectors all have unit gain).
template <typename Scalar>
Scalar gain_difference(const CsiFeatureSet<Scalar>& csi, int a, int b) {
  const Scalar top = *std::max_element(csi.raw_norms.begin(), csi.raw_norms.end());
  return std::abs(csi.raw_norms[a] - csi.raw_norms[b]) / top;
}

struct PartitionOptions {
  double rho1 = 0.3;  // gain-difference threshold
  double rho2 = 0.7;  // correlation threshold
  int max_rounds = 100;
};

template <typename Scalar>
struct Partition {
  std::vector<int> assignment;
  RMatrix<Scalar> centers;  // M x d
  int rounds = 0;
  bool stable = false;

  std::vector<int> occupancy() const {
    std::vector<int> occ(static_cast<std::size_t>(centers.rows()), 0);
    for (int a : assignment) ++occ[a];
    return occ;
  }
};

namespace detail {

template <typename Scalar>
RMatrix<Scalar> cluster_means(const RMatrix<Scalar>& x, const std::vector<int>& assignment, int m) {
  RMatrix<Scalar> c = RMatrix<Scalar>::Zero(m, x.cols());
  std::vector<int> count(m, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(assignment[i]) += x.row(i);
    ++count[assignment[i]];
  }
  for (int j = 0; j < m; ++j) {
    if (count[j] > 0) c.row(j) /= Scalar(count[j]);
  }
  return c;
}

/// Moves the point farthest from its own center (among clusters with more
/// than one member) into each empty cluster.
template <typename Scalar>
void repair_empty(const RMatrix<Scalar>& x, std::vector<int>& assignment, RMatrix<Scalar>& centers) {
  const int m = static_cast<int>(centers.rows());
  for (int j = 0; j < m; ++j) {
    std::vector<int> count(m, 0);
    for (int a : assignment) ++count[a];
    if (count[j] > 0) continue;
    int far = -1;
    Scalar far_d = Scalar(-1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (count[assignment[i]] < 2) continue;
      Scalar d = (x.row(i) - centers.row(assignment[i])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = static_cast<int>(i);
      }
    }
    if (far < 0) throw ValidationError("partition: fewer points than clusters");
    assignment[far] = j;
    centers.row(j) = x.row(far);
  }
}

template <typename Scalar>
int nearest(const RMatrix<Scalar>& centers, const auto& point) {
  int best = 0;
  Scalar best_d = (point - centers.row(0)).squaredNorm();
  for (Eigen::Index j = 1; j < centers.rows(); ++j) {
    Scalar d = (point - centers.row(j)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

/// Lloyd iterations from an initial assignment until stable.
template <typename Scalar>
Partition<Scalar> lloyd(const RMatrix<Scalar>& x, std::vector<int> assignment, int m, int max_rounds) {
  Partition<Scalar> part;
  part.centers = cluster_means(x, assignment, m);
  repair_empty(x, assignment, part.centers);
  part.centers = cluster_means(x, assignment, m);
  for (part.rounds = 0; part.rounds < max_rounds;) {
    ++part.rounds;
    std::vector<int> next(assignment.size());
    for (Eigen::Index i = 0; i < x.rows(); ++i) next[i] = nearest(part.centers, x.row(i));
    repair_empty(x, next, part.centers);
    const bool same = next == assignment;
    assignment = std::move(next);
    part.centers = cluster_means(x, assignment, m);
    if (same) {
      part.stable = true;
      break;
    }
  }
  part.assignment = std::move(assignment);
  return part;
}

}  // namespace detail

/// Rough K-means partition on CSI: random seed users, a first pass that admits
/// a user to a seed's cluster when both the gain-difference and correlation
/// gates pass (nearest center otherwise), then Lloyd iterations.
template <typename Scalar>
Partition<Scalar> rough_partition(const CsiFeatureSet<Scalar>& csi, int m, const PartitionOptions& opt,
                                  Rng& rng) {
  const int n = csi.size();
  if (m < 1 || n < m) throw ValidationError("rough_partition: need at least as many users as clusters");
  if (opt.rho1 < 0.0 || opt.rho2 < 0.0) throw ValidationError("rough_partition: thresholds must be >= 0");

  // Seeds: uniform draws, preferring users not already correlated with a
  // chosen seed above rho2.
  std::vector<int> seeds;
  std::vector<char> chosen(n, 0);
  while (static_cast<int>(seeds.size()) < m) {
    std::vector<int> pool, fallback;
    for (int u = 0; u < n; ++u) {
      if (chosen[u]) continue;
      fallback.push_back(u);
      bool distinct = std::all_of(seeds.begin(), seeds.end(), [&](int s) {
        return correlation(csi, u, s) <= Scalar(opt.rho2);
      });
      if (distinct) pool.push_back(u);
    }
    const auto& from = pool.empty() ? fallback : pool;
    std::uniform_int_distribution<std::size_t> pick(0, from.size() - 1);
    int s = from[pick(rng)];
    chosen[s] = 1;
    seeds.push_back(s);
  }

  const auto& x = csi.features;
  RMatrix<Scalar> centers(m, x.cols());
  std::vector<int> assignment(n, -1);
  for (int j = 0; j < m; ++j) {
    centers.row(j) = x.row(seeds[j]);
    assignment[seeds[j]] = j;
  }
  for (int u = 0; u < n; ++u) {
    if (assignment[u] >= 0) continue;
    int gated = -1;
    Scalar gated_cor = Scalar(-1);
    for (int j = 0; j < m; ++j) {
      const Scalar cor = correlation(csi, u, seeds[j]);
      if (gain_difference(csi, u, seeds[j]) < Scalar(opt.rho1) && cor > Scalar(opt.rho2) && cor > gated_cor) {
        gated = j;
        gated_cor = cor;
      }
    }
    assignment[u] = gated >= 0 ? gated : detail::nearest(centers, x.row(u));
  }
  return detail::lloyd(x, std::move(assignment), m, opt.max_rounds);
}

/// Plain K-means on real features with uniformly drawn seed points.
template <typename Scalar>
Partition<Scalar> kmeans_partition(const RMatrix<Scalar>& x, int m, Rng& rng, int max_rounds = 100) {
  const int n = static_cast<int>(x.rows());
  if (m < 1 || n < m) throw ValidationError("kmeans_partition: need at least as many points as clusters");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> seeds;
  for (int j = 0; j < m; ++j) {
    std::uniform_int_distribution<int> pick(j, n - 1);
    std::swap(idx[j], idx[pick(rng)]);
    seeds.push_back(idx[j]);
  }
  RMatrix<Scalar> centers(m, x.cols());
  for (int j = 0; j < m; ++j) centers.row(j) = x.row(seeds[j]);
  std::vector<int> assignment(n);
  for (int i = 0; i < n; ++i) assignment[i] = detail::nearest(centers, x.row(i));
  for (int j = 0; j < m; ++j) assignment[seeds[j]] = j;
  return detail::lloyd(x, std::move(assignment), m, max_rounds);
}

/// Mixture of isotropic Gaussians: N(x | mean_m, variance_m I_d).
template <typename Scalar>
struct GmmParams {
  RVector<Scalar> weights;
  RMatrix<Scalar> means;
  RVector<Scalar> variances;

  int components() const { return static_cast<int>(weights.size()); }
  Eigen::Index dimension() const { return means.cols(); }

  RVector<Scalar> flatten() const {
    RVector<Scalar> v(weights.size() + means.size() + variances.size());
    Eigen::Index o = 0;
    v.segment(o, weights.size()) = weights;
    o += weights.size();
    for (Eigen::Index r = 0; r < means.rows(); ++r) {
      v.segment(o, means.cols()) = means.row(r).transpose();
      o += means.cols();
    }
    v.segment(o, variances.size()) = variances;
    return v;
  }

  void validate() const {
    if (weights.size() < 1 || means.rows() != weights.size() || variances.size() != weights.size()) {
      throw ValidationError("gmm: inconsistent parameter shapes");
    }
    if ((weights.array() < Scalar(0)).any() || std::abs(weights.sum() - Scalar(1)) > Scalar(1e-12)) {
      throw ValidationError("gmm: weights must lie on the simplex");
    }
    if ((variances.array() < Scalar(kVarianceFloor)).any()) {
      throw ValidationError("gmm: variance below floor");
    }
  }
};

template <typename Scalar>
Scalar log_density(const GmmParams<Scalar>& p, int m, const auto& x) {
  const Scalar var = p.variances(m);
  const Scalar d = Scalar(p.dimension());
  return Scalar(-0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * var) -
         (x - p.means.row(m)).squaredNorm() / (Scalar(2) * var);
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const RVector<Scalar>& v) {
  const Scalar top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

template <typename Scalar>
RVector<Scalar> weighted_log_densities(const GmmParams<Scalar>& p, const auto& x) {
  RVector<Scalar> l(p.components());
  for (int m = 0; m < p.components(); ++m) l(m) = std::log(p.weights(m)) + log_density(p, m, x);
  return l;
}

}  // namespace detail

/// Responsibilities chi (n x M) and the hard argmax assignment.
template <typename Scalar>
struct Responsibilities {
  RMatrix<Scalar> chi;

  std::vector<int> hard() const {
    std::vector<int> a(static_cast<std::size_t>(chi.rows()));
    for (Eigen::Index i = 0; i < chi.rows(); ++i) {
      Eigen::Index j;
      chi.row(i).maxCoeff(&j);
      a[i] = static_cast<int>(j);
    }
    return a;
  }
};

/// Initial mixture from a hard partition: mean = cluster center, isotropic
/// variance = mean squared deviation / d, weight = cluster share.
template <typename Scalar>
GmmParams<Scalar> init_gmm(const std::vector<int>& assignment, const RMatrix<Scalar>& x, int m) {
  if (static_cast<Eigen::Index>(assignment.size()) != x.rows()) {
    throw ValidationError("init_gmm: assignment length != point count");
  }
  std::vector<int> count(m, 0);
  for (int a : assignment) {
    if (a < 0 || a >= m) throw ValidationError("init_gmm: cluster index out of range");
    ++count[a];
  }
  for (int j = 0; j < m; ++j) {
    if (count[j] == 0) throw ValidationError("init_gmm: cluster " + std::to_string(j) + " is empty");
  }
  GmmParams<Scalar> p;
  p.means = detail::cluster_means(x, assignment, m);
  p.weights.resize(m);
  p.variances = RVector<Scalar>::Zero(m);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    p.variances(assignment[i]) += (x.row(i) - p.means.row(assignment[i])).squaredNorm();
  }
  for (int j = 0; j < m; ++j) {
    p.weights(j) = Scalar(count[j]) / Scalar(x.rows());
    p.variances(j) = std::max(p.variances(j) / (Scalar(count[j]) * Scalar(x.cols())), Scalar(kVarianceFloor));
  }
  return p;
}

template <typename Scalar>
Responsibilities<Scalar> em_e_step(const GmmParams<Scalar>& p, const RMatrix<Scalar>& x) {
  Responsibilities<Scalar> r;
  r.chi.resize(x.rows(), p.components());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const RVector<Scalar> l = detail::weighted_log_densities(p, x.row(i));
    const Scalar lse = detail::log_sum_exp(l);
    r.chi.row(i) = (l.array() - lse).exp().transpose();
    r.chi.row(i) /= r.chi.row(i).sum();
  }
  return r;
}

/// Closed-form maximizer of the expected complete-data log-likelihood.
/// A component with no responsibility mass is re-seeded at the point whose
/// largest responsibility is smallest.
template <typename Scalar>
GmmParams<Scalar> em_m_step(const Responsibilities<Scalar>& r, const RMatrix<Scalar>& x) {
  const int m = static_cast<int>(r.chi.cols());
  const Eigen::Index n = x.rows();
  const Scalar d = Scalar(x.cols());
  GmmParams<Scalar> p;
  p.weights.resize(m);
  p.means.resize(m, x.cols());
  p.variances.resize(m);
  std::vector<int> dead;
  for (int j = 0; j < m; ++j) {
    const Scalar mass = r.chi.col(j).sum();
    if (!(mass > Scalar(1e-300))) {
      dead.push_back(j);
      continue;
    }
    p.means.row(j) = (r.chi.col(j).transpose() * x) / mass;
    Scalar ss(0);
    for (Eigen::Index i = 0; i < n; ++i) ss += r.chi(i, j) * (x.row(i) - p.means.row(j)).squaredNorm();
    p.variances(j) = std::max(ss / (d * mass), Scalar(kVarianceFloor));
    p.weights(j) = mass / Scalar(n);
  }
  if (!dead.empty()) {
    Scalar live_var(0);
    int live = 0;
    for (int j = 0; j < m; ++j) {
      if (std::find(dead.begin(), dead.end(), j) == dead.end()) {
        live_var += p.variances(j);
        ++live;
      }
    }
    for (int j : dead) {
      Eigen::Index worst = 0;
      r.chi.rowwise().maxCoeff().minCoeff(&worst);
      p.means.row(j) = x.row(worst);
      p.variances(j) = live > 0 ? live_var / Scalar(live) : Scalar(1);
      p.weights(j) = Scalar(1) / Scalar(n);
    }
  }
  p.weights /= p.weights.sum();
  return p;
}

/// sum_lambda log sum_m Psi_m p(x_lambda | m), log-sum-exp stabilized.
template <typename Scalar>
Scalar log_likelihood(const GmmParams<Scalar>& p, const RMatrix<Scalar>& x) {
  Scalar total(0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += detail::log_sum_exp(detail::weighted_log_densities(p, x.row(i)));
  return total;
}

template <typename Scalar>
struct FitResult {
  GmmParams<Scalar> params;
  Responsibilities<Scalar> responsibilities;
  std::vector<int> assignment;
  std::vector<Scalar> log_likelihood_trace;  // initial value, then one per iteration
  int iterations = 0;
  bool converged = false;

  std::vector<int> occupancy() const {
    std::vector<int> occ(static_cast<std::size_t>(params.components()), 0);
    for (int a : assignment) ++occ[a];
    return occ;
  }
};

struct FitOptions {
  double epsilon = 1e-15;
  int max_iter = 500;
  PartitionOptions partition;
};

/// Argmax assignment with empty components filled by the user most
/// responsible for them, taken from a cluster that keeps at least one member.
template <typename Scalar>
std::vector<int> hard_assignment(const Responsibilities<Scalar>& r) {
  std::vector<int> a = r.hard();
  const int m = static_cast<int>(r.chi.cols());
  for (int j = 0; j < m; ++j) {
    std::vector<int> count(m, 0);
    for (int c : a) ++count[c];
    if (count[j] > 0) continue;
    int best = -1;
    for (int i = 0; i < static_cast<int>(a.size()); ++i) {
      if (count[a[i]] < 2) continue;
      if (best < 0 || r.chi(i, j) > r.chi(best, j)) best = i;
    }
    if (best < 0) throw ValidationError("hard_assignment: fewer points than components");
    a[best] = j;
  }
  return a;
}

/// EM from given initial parameters until ||kappa_{t+1} - kappa_t|| < epsilon.
template <typename Scalar>
FitResult<Scalar> run_em(GmmParams<Scalar> params, const RMatrix<Scalar>& x, double epsilon, int max_iter) {
  if (!(epsilon > 0.0)) throw ValidationError("fit: epsilon must be positive");
  FitResult<Scalar> out;
  out.log_likelihood_trace.push_back(log_likelihood(params, x));
  for (out.iterations = 0; out.iterations < max_iter;) {
    ++out.iterations;
    auto next = em_m_step(em_e_step(params, x), x);
    const Scalar step = (next.flatten() - params.flatten()).norm();
    params = std::move(next);
    out.log_likelihood_trace.push_back(log_likelihood(params, x));
    if (step < Scalar(epsilon)) {
      out.converged = true;
      break;
    }
  }
  out.responsibilities = em_e_step(params, x);
  out.params = std::move(params);
  out.assignment = hard_assignment(out.responsibilities);
  return out;
}

/// GMM fit on arbitrary real features, initialized from plain K-means.
template <typename Scalar>
FitResult<Scalar> fit_features(const RMatrix<Scalar>& x, int m, const FitOptions& opt, Rng& rng) {
  auto part = kmeans_partition(x, m, rng, opt.partition.max_rounds);
  return run_em(init_gmm(part.assignment, x, m), x, opt.epsilon, opt.max_iter);
}

/// K-GMM on CSI: normalized channels, gated rough partition, then EM.
template <typename Scalar>
FitResult<Scalar> fit(const CsiFeatureSet<Scalar>& csi, int m, const FitOptions& opt, Rng& rng) {
  auto part = rough_partition(csi, m, opt.partition, rng);
  return run_em(init_gmm(part.assignment, csi.features, m), csi.features, opt.epsilon, opt.max_iter);
}

/// Cluster member lists (ascending users) from an assignment.
inline std::vector<std::vector<int>> members_from_assignment(const std::vector<int>& assignment, int m) {
  std::vector<std::vector<int>> out(m);
  for (int u = 0; u < static_cast<int>(assignment.size()); ++u) out[assignment[u]].push_back(u);
  return out;
}

}  // namespace irsnoma::clustering
