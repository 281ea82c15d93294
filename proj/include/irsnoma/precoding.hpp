#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/types.hpp"

namespace irsnoma::precoding {

inline constexpr double kMaxConditionNumber = 1e8;

/// Square M x M matrix whose row m is the effective channel of cluster m's
/// representative user.
template <typename Scalar>
class ClusterChannelMatrix {
 public:
  explicit ClusterChannelMatrix(CMatrix<Scalar> rows) : rows_(std::move(rows)) {
    if (rows_.rows() != rows_.cols() || rows_.rows() == 0) {
      throw ValidationError("cluster channel matrix must be square and non-empty");
    }
    Eigen::JacobiSVD<CMatrix<Scalar>> svd(rows_);
    const auto& s = svd.singularValues();
    const Scalar smin = s(s.size() - 1);
    condition_number_ = smin > Scalar(0) && std::isfinite(s(0)) ? s(0) / smin
                                                                 : std::numeric_limits<Scalar>::infinity();
  }

  static ClusterChannelMatrix from_rows(const std::vector<CRowVector<Scalar>>& rows) {
    if (rows.empty()) throw ValidationError("cluster channel matrix: no rows");
    CMatrix<Scalar> h(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t m = 0; m < rows.size(); ++m) {
      if (rows[m].size() != h.cols()) throw ValidationError("cluster channel matrix: ragged rows");
      h.row(static_cast<Eigen::Index>(m)) = rows[m];
    }
    return ClusterChannelMatrix(std::move(h));
  }

  const CMatrix<Scalar>& matrix() const { return rows_; }
  Scalar condition_number() const { return condition_number_; }
  Eigen::Index size() const { return rows_.rows(); }

 private:
  CMatrix<Scalar> rows_;
  Scalar condition_number_{};
};

template <typename Scalar>
struct Precoder {
  CMatrix<Scalar> columns;  // omega_1 .. omega_M
  Scalar total_power{0};    // sum_m ||omega_m||^2 actually consumed
  Scalar scale{1};

  void zero(Eigen::Index m) {
    columns = CMatrix<Scalar>::Zero(m, m);
    total_power = Scalar(0);
    scale = Scalar(0);
  }
};

/// Per cluster, the member with the largest effective-channel norm; ties go
/// to the lowest user index.
template <typename Scalar>
std::vector<int> select_cluster_representatives(const std::vector<std::vector<int>>& clusters,
                                                const std::vector<CRowVector<Scalar>>& effective) {
  std::vector<int> reps;
  reps.reserve(clusters.size());
  for (std::size_t m = 0; m < clusters.size(); ++m) {
    if (clusters[m].empty()) throw ValidationError("cluster " + std::to_string(m) + " is empty");
    int best = -1;
    Scalar best_norm = Scalar(-1);
    for (int u : clusters[m]) {
      if (u < 0 || u >= static_cast<int>(effective.size())) {
        throw ValidationError("cluster member index out of range");
      }
      Scalar n = effective[u].squaredNorm();
      if (n > best_norm || (n == best_norm && u < best)) {
        best_norm = n;
        best = u;
      }
    }
    reps.push_back(best);
  }
  return reps;
}

/// Unscaled zero-forcing directions W = h (h^H h)^{-1} with h^H = H, which
/// for square H reduces to H^{-1}, so that H W = I.
template <typename Scalar>
CMatrix<Scalar> zf_directions(const ClusterChannelMatrix<Scalar>& hmat) {
  if (!(hmat.condition_number() < Scalar(kMaxConditionNumber))) {
    throw IllConditionedError("zero-forcing: cluster channel matrix is ill-conditioned (cond = " +
                                  std::to_string(static_cast<double>(hmat.condition_number())) + ")",
                              static_cast<double>(hmat.condition_number()));
  }
  const Eigen::Index m = hmat.size();
  return hmat.matrix().fullPivLu().solve(CMatrix<Scalar>::Identity(m, m));
}

/// Zero-forcing precoder scaled so that sum_m ||omega_m||^2 equals the power
/// budget.
template <typename Scalar>
Precoder<Scalar> zf_precoder(const ClusterChannelMatrix<Scalar>& hmat, Scalar total_power) {
  if (!(total_power > Scalar(0)) || !std::isfinite(total_power)) {
    throw ValidationError("zero-forcing: total power must be positive and finite");
  }
  Precoder<Scalar> p;
  p.columns = zf_directions(hmat);
  const Scalar used = p.columns.squaredNorm();
  p.scale = std::sqrt(total_power / used);
  p.columns *= p.scale;
  p.total_power = p.columns.squaredNorm();
  return p;
}

}  // namespace irsnoma::precoding
