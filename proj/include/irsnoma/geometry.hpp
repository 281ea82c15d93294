#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "irsnoma/types.hpp"

namespace irsnoma {

/// Axis-aligned service area with an optional excluded obstacle polygon.
struct Region {
  Eigen::Vector2d lower{0.0, 0.0};
  Eigen::Vector2d upper{100.0, 100.0};
  std::vector<Eigen::Vector2d> obstacle;

  /// 100 m x 100 m box with the IRS at its corner and a rectangular block
  /// between the base station and the users.
  static Region default_region() {
    Region r;
    r.obstacle = {{0.0, 35.0}, {10.0, 35.0}, {10.0, 65.0}, {0.0, 65.0}};
    return r;
  }

  bool in_box(const Eigen::Vector2d& p) const {
    return p.x() >= lower.x() && p.x() <= upper.x() && p.y() >= lower.y() &&
           p.y() <= upper.y();
  }

  bool in_obstacle(const Eigen::Vector2d& p) const {
    if (obstacle.size() < 3) return false;
    // even-odd ray casting
    bool inside = false;
    std::size_t n = obstacle.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = obstacle[i];
      const auto& b = obstacle[j];
      if ((a.y() > p.y()) != (b.y() > p.y())) {
        double x_cross = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
        if (p.x() < x_cross) inside = !inside;
      }
    }
    return inside;
  }

  bool contains(const Eigen::Vector2d& p) const { return in_box(p) && !in_obstacle(p); }

  double box_area() const { return (upper - lower).prod(); }

  /// Clamps into the box; falls back to `fallback` when the clamped point is
  /// inside the obstacle.
  Eigen::Vector2d project(const Eigen::Vector2d& p, const Eigen::Vector2d& fallback) const {
    Eigen::Vector2d q = p.cwiseMax(lower).cwiseMin(upper);
    return in_obstacle(q) ? fallback : q;
  }

  void validate() const {
    if (!(upper.array() > lower.array()).all()) {
      throw ValidationError("region: upper corner must exceed lower corner");
    }
  }
};

}  // namespace irsnoma
