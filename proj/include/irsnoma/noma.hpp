#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/channel.hpp"
#include "irsnoma/precoding.hpp"
#include "irsnoma/types.hpp"

namespace irsnoma::noma {

/// How the inter-cluster interference term is formed.
enum class InterferenceModel {
  Incoherent,  // sum over other beams of |h_eff omega_gamma|^2
  Coherent,    // |h_eff sum_gamma omega_gamma|^2
};

/// Whether the power-split coefficient multiplies the amplitude (inside |.|^2)
/// or the power.
enum class AlphaDomain { Amplitude, Power };

struct SinrOptions {
  InterferenceModel interference = InterferenceModel::Incoherent;
  AlphaDomain alpha_domain = AlphaDomain::Amplitude;
};

inline constexpr double kSimplexTolerance = 1e-12;
/// Rates are compared with this absolute slack in the SIC check.
inline constexpr double kSicTolerance = 1e-12;

/// User -> cluster assignment, per-cluster decoding order and per-cluster
/// power split. `power_split[m](i)` belongs to `members[m][i]`; members are
/// kept in ascending user order.
template <typename Scalar>
class ClusterPlan {
 public:
  ClusterPlan() = default;

  static ClusterPlan create(int user_count, std::vector<std::vector<int>> members,
                            std::vector<std::vector<int>> decoding_order,
                            std::vector<RVector<Scalar>> power_split) {
    ClusterPlan plan;
    plan.members_ = std::move(members);
    plan.decoding_order_ = std::move(decoding_order);
    plan.power_split_ = std::move(power_split);
    plan.validate_and_index(user_count);
    return plan;
  }

  /// Plan with members sorted, index-order decoding and equal power split.
  static ClusterPlan uniform(int user_count, std::vector<std::vector<int>> members) {
    std::vector<RVector<Scalar>> split;
    for (auto& c : members) {
      std::sort(c.begin(), c.end());
      split.push_back(RVector<Scalar>::Constant(static_cast<Eigen::Index>(c.size()),
                                                Scalar(1) / Scalar(c.size())));
    }
    auto order = members;
    return create(user_count, std::move(members), std::move(order), std::move(split));
  }

  int user_count() const { return static_cast<int>(assignment_.size()); }
  int cluster_count() const { return static_cast<int>(members_.size()); }
  const std::vector<int>& assignment() const { return assignment_; }
  const std::vector<std::vector<int>>& members() const { return members_; }
  const std::vector<int>& members(int m) const { return members_[m]; }
  const std::vector<std::vector<int>>& decoding_order() const { return decoding_order_; }
  const std::vector<RVector<Scalar>>& power_split() const { return power_split_; }

  int cluster_of(int user) const { return assignment_[user]; }
  /// Zero-based position of `user` in its cluster's decoding order.
  int order_position(int user) const { return order_position_[user]; }
  Scalar alpha(int user) const { return alpha_[user]; }

  ClusterPlan with_decoding_order(std::vector<std::vector<int>> order) const {
    return create(user_count(), members_, std::move(order), power_split_);
  }
  ClusterPlan with_power_split(std::vector<RVector<Scalar>> split) const {
    return create(user_count(), members_, decoding_order_, std::move(split));
  }

 private:
  void validate_and_index(int user_count) {
    if (user_count < 1) throw ValidationError("plan: no users");
    if (members_.empty()) throw ValidationError("plan: no clusters");
    if (decoding_order_.size() != members_.size() || power_split_.size() != members_.size()) {
      throw ValidationError("plan: per-cluster vectors disagree in length");
    }
    assignment_.assign(user_count, -1);
    order_position_.assign(user_count, -1);
    alpha_.assign(user_count, Scalar(0));
    for (std::size_t m = 0; m < members_.size(); ++m) {
      auto& c = members_[m];
      std::sort(c.begin(), c.end());
      if (c.empty()) throw ValidationError("plan: cluster " + std::to_string(m) + " is empty");
      if (power_split_[m].size() != static_cast<Eigen::Index>(c.size())) {
        throw ValidationError("plan: power split size mismatch in cluster " + std::to_string(m));
      }
      Scalar total(0);
      for (std::size_t i = 0; i < c.size(); ++i) {
        int u = c[i];
        if (u < 0 || u >= user_count) throw ValidationError("plan: user index out of range");
        if (assignment_[u] != -1) {
          throw ValidationError("plan: user " + std::to_string(u) + " assigned twice");
        }
        Scalar a = power_split_[m](static_cast<Eigen::Index>(i));
        if (!(a >= Scalar(0)) || !std::isfinite(a)) throw ValidationError("plan: negative alpha");
        assignment_[u] = static_cast<int>(m);
        alpha_[u] = a;
        total += a;
      }
      if (std::abs(total - Scalar(1)) > Scalar(kSimplexTolerance)) {
        throw ValidationError("plan: power split of cluster " + std::to_string(m) +
                              " does not sum to 1");
      }
      auto sorted_order = decoding_order_[m];
      std::sort(sorted_order.begin(), sorted_order.end());
      if (sorted_order != c) {
        throw ValidationError("plan: decoding order of cluster " + std::to_string(m) +
                              " is not a permutation of its members");
      }
      for (std::size_t pos = 0; pos < decoding_order_[m].size(); ++pos) {
        order_position_[decoding_order_[m][pos]] = static_cast<int>(pos);
      }
    }
    for (int u = 0; u < user_count; ++u) {
      if (assignment_[u] == -1) throw ValidationError("plan: user " + std::to_string(u) + " unassigned");
    }
  }

  std::vector<std::vector<int>> members_;
  std::vector<std::vector<int>> decoding_order_;
  std::vector<RVector<Scalar>> power_split_;
  std::vector<int> assignment_;
  std::vector<int> order_position_;
  std::vector<Scalar> alpha_;
};

/// Numerator and denominator parts of one SINR evaluation.
template <typename Scalar>
struct SinrTerms {
  Scalar signal{0};
  Scalar intra{0};
  Scalar inter{0};
  Scalar noise{1};

  Scalar interference_plus_noise() const { return intra + inter + noise; }
  Scalar value() const { return signal / interference_plus_noise(); }
};

/// SINR parts for decoder `q` recovering target `p`'s signal in cluster `m`.
/// q == p gives the own-signal SINR.
template <typename Scalar>
SinrTerms<Scalar> sinr_terms(int m, int q, int p, const std::vector<CRowVector<Scalar>>& effective,
                             const precoding::Precoder<Scalar>& precoder,
                             const ClusterPlan<Scalar>& plan, Scalar noise,
                             const SinrOptions& options = {}) {
  const auto& h = effective[q];
  const Complex<Scalar> g = (h * precoder.columns.col(m)).value();
  const Scalar g2 = std::norm(g);
  auto weigh = [&](Scalar a) {
    return options.alpha_domain == AlphaDomain::Amplitude ? std::norm(g * a) : g2 * a;
  };

  SinrTerms<Scalar> t;
  t.noise = noise;
  t.signal = weigh(plan.alpha(p));
  for (int lambda : plan.members(m)) {
    if (lambda != p) t.intra += weigh(plan.alpha(lambda));
  }
  const Eigen::Index beams = precoder.columns.cols();
  if (options.interference == InterferenceModel::Incoherent) {
    for (Eigen::Index gamma = 0; gamma < beams; ++gamma) {
      if (gamma != m) t.inter += std::norm((h * precoder.columns.col(gamma)).value());
    }
  } else {
    CVector<Scalar> sum = CVector<Scalar>::Zero(precoder.columns.rows());
    for (Eigen::Index gamma = 0; gamma < beams; ++gamma) {
      if (gamma != m) sum += precoder.columns.col(gamma);
    }
    t.inter = std::norm((h * sum).value());
  }
  return t;
}

template <typename Scalar>
Scalar sinr_own(int m, int p, const std::vector<CRowVector<Scalar>>& effective,
                const precoding::Precoder<Scalar>& precoder, const ClusterPlan<Scalar>& plan,
                Scalar noise, const SinrOptions& options = {}) {
  return sinr_terms(m, p, p, effective, precoder, plan, noise, options).value();
}

template <typename Scalar>
Scalar sinr_cross(int m, int q, int p, const std::vector<CRowVector<Scalar>>& effective,
                  const precoding::Precoder<Scalar>& precoder, const ClusterPlan<Scalar>& plan,
                  Scalar noise, const SinrOptions& options = {}) {
  return sinr_terms(m, q, p, effective, precoder, plan, noise, options).value();
}

template <typename Scalar>
Scalar rate_from_sinr(Scalar sinr) {
  return std::log2(Scalar(1) + sinr);
}

/// Members sorted by ascending gain; the weakest user is decoded first.
/// Equal gains keep ascending user order.
template <typename Scalar>
std::vector<int> decoding_order_by_gain(std::vector<int> members, const std::vector<Scalar>& gains) {
  std::stable_sort(members.begin(), members.end(), [&](int a, int b) {
    if (gains[a] != gains[b]) return gains[a] < gains[b];
    return a < b;
  });
  return members;
}

template <typename Scalar>
struct RateReport {
  std::vector<Scalar> sinr;   // own-signal SINR per user
  std::vector<Scalar> rate;   // log2(1 + sinr)
  RMatrix<Scalar> cross;      // cross(q, p): SINR of p's signal at q, same cluster only
  Scalar sum_rate{0};
  bool sic_feasible = true;
  bool qos_feasible = true;

  bool feasible() const { return sic_feasible && qos_feasible; }
};

/// Sum over users of log2(1 + sinr).
template <typename Scalar>
Scalar sum_rate(const std::vector<Scalar>& sinr) {
  Scalar total(0);
  for (Scalar t : sinr) total += rate_from_sinr(t);
  return total;
}

template <typename Scalar>
Scalar sum_rate(const RateReport<Scalar>& report) {
  return sum_rate(report.sinr);
}

/// For each cluster and every pair decoded as b before a, user a must decode
/// b's signal at least as well as b does.
template <typename Scalar>
bool check_sic(const ClusterPlan<Scalar>& plan, const RateReport<Scalar>& report) {
  for (const auto& order : plan.decoding_order()) {
    for (std::size_t ib = 0; ib < order.size(); ++ib) {
      const int b = order[ib];
      const Scalar own = rate_from_sinr(report.sinr[b]);
      for (std::size_t ia = ib + 1; ia < order.size(); ++ia) {
        const int a = order[ia];
        if (rate_from_sinr(report.cross(a, b)) < own - Scalar(kSicTolerance)) return false;
      }
    }
  }
  return true;
}

template <typename Scalar>
bool qos_check(const std::vector<Scalar>& sinr, const std::vector<Scalar>& tau_min) {
  if (tau_min.empty()) return true;
  if (tau_min.size() != sinr.size()) throw ValidationError("qos_check: floor count != user count");
  for (std::size_t u = 0; u < sinr.size(); ++u) {
    if (tau_min[u] < Scalar(0)) throw ValidationError("qos_check: negative SINR floor");
    if (sinr[u] < tau_min[u]) return false;
  }
  return true;
}

/// Full rate evaluation for a fixed plan and precoder.
template <typename Scalar>
RateReport<Scalar> compute_rates(const std::vector<CRowVector<Scalar>>& effective,
                                 const precoding::Precoder<Scalar>& precoder,
                                 const ClusterPlan<Scalar>& plan, Scalar noise,
                                 const std::vector<Scalar>& tau_min = {},
                                 const SinrOptions& options = {}) {
  const int n = plan.user_count();
  RateReport<Scalar> r;
  r.sinr.assign(n, Scalar(0));
  r.rate.assign(n, Scalar(0));
  r.cross = RMatrix<Scalar>::Zero(n, n);
  for (int m = 0; m < plan.cluster_count(); ++m) {
    for (int p : plan.members(m)) {
      for (int q : plan.members(m)) {
        r.cross(q, p) = sinr_cross(m, q, p, effective, precoder, plan, noise, options);
      }
      r.sinr[p] = r.cross(p, p);
      r.rate[p] = rate_from_sinr(r.sinr[p]);
    }
  }
  r.sum_rate = std::accumulate(r.rate.begin(), r.rate.end(), Scalar(0));
  r.sic_feasible = check_sic(plan, r);
  r.qos_feasible = qos_check(r.sinr, tau_min);
  return r;
}

/// TDMA baseline: every user gets a 1/L time share at full power with no
/// interference. `gains` are effective-channel magnitudes under each user's
/// own best beam.
template <typename Scalar>
Scalar oma_tdma_sum_rate(const std::vector<Scalar>& gains, Scalar total_power, Scalar noise) {
  if (gains.empty()) throw ValidationError("oma: at least one user required");
  const Scalar share = Scalar(1) / Scalar(gains.size());
  Scalar total(0);
  for (Scalar g : gains) total += share * std::log2(Scalar(1) + total_power * g * g / noise);
  return total;
}

/// Everything needed to score one time slot.
template <typename Scalar>
struct Scenario {
  channel::ChannelRealization<Scalar> channels;
  int resolution_bits = 5;
  Scalar total_power{1};
  std::vector<std::vector<int>> clusters;  // members per cluster
  std::vector<Scalar> qos_floor;           // empty = no floors
  SinrOptions options;

  int user_count() const { return channels.user_count(); }
  int elements() const { return channels.elements(); }
  int cluster_count() const { return static_cast<int>(clusters.size()); }

  void validate() const {
    channels.validate();
    if (cluster_count() != channels.antennas()) {
      throw ValidationError("scenario: cluster count must equal the BS antenna count");
    }
    std::vector<int> seen(user_count(), 0);
    for (const auto& c : clusters) {
      if (c.empty()) throw ValidationError("scenario: empty cluster");
      for (int u : c) {
        if (u < 0 || u >= user_count() || seen[u]++) {
          throw ValidationError("scenario: clusters must partition the users");
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw ValidationError("scenario: clusters must partition the users");
    }
    if (!qos_floor.empty() && static_cast<int>(qos_floor.size()) != user_count()) {
      throw ValidationError("scenario: one QoS floor per user required");
    }
    if (!(total_power > Scalar(0))) throw ValidationError("scenario: total power must be positive");
  }
};

/// Phase-dependent quantities shared by every power split.
template <typename Scalar>
struct Beamforming {
  std::vector<CRowVector<Scalar>> effective;
  std::vector<int> representatives;
  precoding::Precoder<Scalar> precoder;
  std::vector<Scalar> gains;                       // |h_eff,u omega_{m(u)}|
  std::vector<std::vector<int>> decoding_order;    // ascending gain per cluster
  Scalar condition_number{0};
  bool precoder_ok = false;
};

template <typename Scalar>
Beamforming<Scalar> prepare_beamforming(const Scenario<Scalar>& scenario,
                                        const CVector<Scalar>& coefficients) {
  Beamforming<Scalar> bf;
  bf.effective = channel::effective_channels(scenario.channels, coefficients);
  bf.representatives = precoding::select_cluster_representatives(scenario.clusters, bf.effective);
  std::vector<CRowVector<Scalar>> rows;
  for (int r : bf.representatives) rows.push_back(bf.effective[r]);
  auto hmat = precoding::ClusterChannelMatrix<Scalar>::from_rows(rows);
  bf.condition_number = hmat.condition_number();
  const Eigen::Index m = hmat.size();
  if (hmat.condition_number() < Scalar(precoding::kMaxConditionNumber)) {
    bf.precoder = precoding::zf_precoder(hmat, scenario.total_power);
    bf.precoder_ok = true;
  } else {
    // no usable beam: every user transmits nothing in this configuration
    bf.precoder.zero(m);
  }
  bf.gains.assign(scenario.user_count(), Scalar(0));
  for (int c = 0; c < scenario.cluster_count(); ++c) {
    for (int u : scenario.clusters[c]) {
      bf.gains[u] = std::abs((bf.effective[u] * bf.precoder.columns.col(c)).value());
    }
  }
  for (const auto& members : scenario.clusters) {
    bf.decoding_order.push_back(decoding_order_by_gain(members, bf.gains));
  }
  return bf;
}

template <typename Scalar>
Beamforming<Scalar> prepare_beamforming(const Scenario<Scalar>& scenario, const channel::PhaseConfig& phase) {
  if (phase.elements() != scenario.elements() || phase.resolution_bits != scenario.resolution_bits) {
    throw ValidationError("phase configuration does not match the scenario");
  }
  return prepare_beamforming(scenario, channel::reflection_coefficients<Scalar>(phase));
}

template <typename Scalar>
struct Evaluation {
  ClusterPlan<Scalar> plan;
  RateReport<Scalar> report;
  bool precoder_ok = false;
  bool power_feasible = true;

  Scalar sum_rate() const { return report.sum_rate; }
  bool feasible() const { return report.feasible() && power_feasible; }
};

template <typename Scalar>
Evaluation<Scalar> evaluate_split(const Scenario<Scalar>& scenario, const Beamforming<Scalar>& bf,
                                  const std::vector<RVector<Scalar>>& split) {
  Evaluation<Scalar> ev;
  ev.plan = ClusterPlan<Scalar>::create(scenario.user_count(), scenario.clusters, bf.decoding_order, split);
  ev.report = compute_rates(bf.effective, bf.precoder, ev.plan, scenario.channels.noise_variance,
                            scenario.qos_floor, scenario.options);
  ev.precoder_ok = bf.precoder_ok;
  ev.power_feasible = bf.precoder.total_power <=
                      scenario.total_power * (Scalar(1) + Scalar(1e-12)) + Scalar(1e-9);
  return ev;
}

/// Objective of the sum-rate problem for one phase configuration and split:
/// ZF on cluster heads, gain-sorted decoding, SIC and QoS checks.
template <typename Scalar>
Evaluation<Scalar> evaluate(const Scenario<Scalar>& scenario, const channel::PhaseConfig& phase,
                            const std::vector<RVector<Scalar>>& split) {
  return evaluate_split(scenario, prepare_beamforming(scenario, phase), split);
}

/// One CSV row per user: user,cluster,order,alpha,sinr,rate.
template <typename Scalar>
void write_rate_csv(std::ostream& os, const ClusterPlan<Scalar>& plan, const RateReport<Scalar>& report) {
  os << "user,cluster,order,alpha,sinr,rate\n";
  auto old = os.precision(17);
  for (int u = 0; u < plan.user_count(); ++u) {
    os << u << ',' << plan.cluster_of(u) << ',' << plan.order_position(u) << ',' << plan.alpha(u) << ','
       << report.sinr[u] << ',' << report.rate[u] << '\n';
  }
  os.precision(old);
}

}  // namespace irsnoma::noma
