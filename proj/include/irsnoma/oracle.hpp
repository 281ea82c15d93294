#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "irsnoma/channel.hpp"
#include "irsnoma/noma.hpp"
#include "irsnoma/types.hpp"

namespace irsnoma::oracle {

inline constexpr double kMaxEvaluations = 1e8;

/// Number of grid units of size `step` in [0, 1]; `step` must divide 1.
inline int alpha_units(double step) {
  if (!(step > 0.0) || step > 1.0) throw ValidationError("alpha step must be in (0, 1]");
  const double units = std::round(1.0 / step);
  if (std::abs(units * step - 1.0) > 1e-9) {
    throw ValidationError("alpha step " + std::to_string(step) + " does not divide 1");
  }
  return static_cast<int>(units);
}

/// Number of compositions of `units` into `parts` non-negative integers.
inline double composition_count(int units, int parts) {
  // C(units + parts - 1, parts - 1)
  double c = 1.0;
  for (int i = 1; i < parts; ++i) c = c * (units + i) / i;
  return std::round(c);
}

struct SearchSpace {
  int elements = 1;
  int resolution_bits = 1;
  std::vector<int> cluster_sizes;
  double alpha_step = 0.1;

  double phase_count() const { return std::pow(2.0, resolution_bits * elements); }

  double alpha_grid_size() const {
    const int units = alpha_units(alpha_step);
    double total = 1.0;
    for (int p : cluster_sizes) total *= composition_count(units, p);
    return total;
  }

  double evaluation_count() const { return phase_count() * alpha_grid_size(); }

  void check_guard() const {
    const double count = evaluation_count();
    if (count > kMaxEvaluations) {
      throw SearchTooLargeError("search space of " + std::to_string(count) +
                                    " evaluations exceeds the 1e8 guard",
                                count);
    }
  }

  template <typename Scalar>
  static SearchSpace for_scenario(const noma::Scenario<Scalar>& s, double alpha_step) {
    SearchSpace space{s.elements(), s.resolution_bits, {}, alpha_step};
    for (const auto& c : s.clusters) space.cluster_sizes.push_back(static_cast<int>(c.size()));
    return space;
  }
};

/// Odometer over all (2^B)^K phase configurations in lexicographic order
/// (element 0 most significant).
class PhaseEnumerator {
 public:
  PhaseEnumerator(int elements, int resolution_bits)
      : current_(channel::PhaseConfig::zeros(elements, resolution_bits)) {
    if (elements < 1) throw ValidationError("phase enumeration: K must be positive");
    const double count = std::pow(2.0, resolution_bits * elements);
    if (count > kMaxEvaluations) {
      throw SearchTooLargeError("phase enumeration of " + std::to_string(count) +
                                    " configurations exceeds the 1e8 guard",
                                count);
    }
    current_.validate();
  }

  /// Writes the next configuration into `out`; false once exhausted.
  bool next(channel::PhaseConfig& out) {
    if (done_) return false;
    out = current_;
    advance();
    return true;
  }

 private:
  void advance() {
    const int levels = current_.levels();
    for (int k = current_.elements() - 1; k >= 0; --k) {
      if (++current_.indices[k] < levels) return;
      current_.indices[k] = 0;
    }
    done_ = true;
  }

  channel::PhaseConfig current_;
  bool done_ = false;
};

inline std::vector<channel::PhaseConfig> enumerate_phase_configs(int elements, int resolution_bits) {
  PhaseEnumerator it(elements, resolution_bits);
  std::vector<channel::PhaseConfig> out;
  channel::PhaseConfig p;
  while (it.next(p)) out.push_back(p);
  return out;
}

/// All compositions of `units` into `parts`, lexicographically ascending.
inline std::vector<std::vector<int>> compositions(int units, int parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(parts, 0);
  auto rec = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == parts - 1) {
      cur[pos] = remaining;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      cur[pos] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  if (parts > 0) rec(rec, 0, units);
  return out;
}

/// Cross product over clusters of every on-grid power split.
template <typename Scalar = double>
std::vector<std::vector<RVector<Scalar>>> enumerate_alpha_grids(const std::vector<int>& cluster_sizes,
                                                                double step) {
  const int units = alpha_units(step);
  double total = 1.0;
  for (int p : cluster_sizes) {
    if (p < 1) throw ValidationError("alpha grid: clusters must be non-empty");
    total *= composition_count(units, p);
  }
  if (total > kMaxEvaluations) throw SearchTooLargeError("alpha grid exceeds the 1e8 guard", total);

  std::vector<std::vector<RVector<Scalar>>> per_cluster;
  for (int p : cluster_sizes) {
    std::vector<RVector<Scalar>> splits;
    for (const auto& comp : compositions(units, p)) {
      RVector<Scalar> a(p);
      for (int i = 0; i < p; ++i) a(i) = Scalar(comp[i]) / Scalar(units);
      splits.push_back(std::move(a));
    }
    per_cluster.push_back(std::move(splits));
  }

  std::vector<std::vector<RVector<Scalar>>> out;
  std::vector<RVector<Scalar>> cur(cluster_sizes.size());
  auto rec = [&](auto&& self, std::size_t m) -> void {
    if (m == cluster_sizes.size()) {
      out.push_back(cur);
      return;
    }
    for (const auto& s : per_cluster[m]) {
      cur[m] = s;
      self(self, m + 1);
    }
  };
  rec(rec, 0);
  return out;
}

template <typename Scalar>
struct OracleResult {
  channel::PhaseConfig phase;
  std::vector<RVector<Scalar>> split;
  Scalar sum_rate{0};
  std::size_t feasible_count = 0;
  std::size_t evaluated = 0;
  double wall_seconds = 0.0;

  bool found() const { return feasible_count > 0; }
};

/// Exhaustive maximization of the sum rate over every phase configuration and
/// on-grid split. Ties keep the lexicographically first (phase, split).
template <typename Scalar>
OracleResult<Scalar> brute_force_optimum(const noma::Scenario<Scalar>& scenario, const SearchSpace& space) {
  scenario.validate();
  space.check_guard();
  if (space.elements != scenario.elements() || space.resolution_bits != scenario.resolution_bits) {
    throw ValidationError("search space does not match the scenario");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto grids = enumerate_alpha_grids<Scalar>(space.cluster_sizes, space.alpha_step);

  OracleResult<Scalar> best;
  PhaseEnumerator phases(space.elements, space.resolution_bits);
  channel::PhaseConfig phase;
  while (phases.next(phase)) {
    const auto bf = noma::prepare_beamforming(scenario, phase);
    for (const auto& split : grids) {
      const auto ev = noma::evaluate_split(scenario, bf, split);
      ++best.evaluated;
      if (!ev.feasible()) continue;
      if (best.feasible_count++ == 0 || ev.sum_rate() > best.sum_rate) {
        best.sum_rate = ev.sum_rate();
        best.phase = phase;
        best.split = split;
      }
    }
  }
  best.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

template <typename Scalar>
struct OmaResult {
  std::vector<channel::PhaseConfig> phases;  // per-slot optimal configuration
  std::vector<Scalar> gains;                 // ||h_eff,u|| under that configuration
  Scalar sum_rate{0};
};

/// TDMA baseline with every user's slot using its own best IRS configuration
/// and a matched-filter beam at full power.
template <typename Scalar>
OmaResult<Scalar> brute_force_oma(const noma::Scenario<Scalar>& scenario) {
  scenario.channels.validate();
  const int users = scenario.user_count();
  OmaResult<Scalar> r;
  r.phases.assign(users, channel::PhaseConfig{});
  r.gains.assign(users, Scalar(-1));
  PhaseEnumerator phases(scenario.elements(), scenario.resolution_bits);
  channel::PhaseConfig phase;
  while (phases.next(phase)) {
    const auto coeffs = channel::reflection_coefficients<Scalar>(phase);
    for (int u = 0; u < users; ++u) {
      const Scalar g = channel::effective_channel_from_coefficients(scenario.channels.user_channels[u],
                                                                    coeffs, scenario.channels.g_matrix)
                           .norm();
      if (g > r.gains[u]) {
        r.gains[u] = g;
        r.phases[u] = phase;
      }
    }
  }
  r.sum_rate = noma::oma_tdma_sum_rate(r.gains, scenario.total_power, scenario.channels.noise_variance);
  return r;
}

}  // namespace irsnoma::oracle
