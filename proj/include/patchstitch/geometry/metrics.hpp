// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_GEOMETRY_METRICS_HPP
#define PATCHSTITCH_GEOMETRY_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch {

/// Sign-invariant angle between two directions, in degrees, within [0, 90].
inline double angle_error_unoriented(const Vec3& a, const Vec3& b) {
  const double na = norm(a), nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw ConfigError("angle error is undefined for a zero vector");
  const double c = std::clamp(std::abs(dot(a, b)) / (na * nb), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

struct MetricReport {
  double rmse_deg = 0.0;
  double pgp5 = 0.0;   // fraction of points with error < 5 degrees
  double pgp10 = 0.0;  // fraction of points with error < 10 degrees
  std::size_t n_evaluated = 0;
};

/// RMSE and PGP5/PGP10 of unoriented angle errors over `subset` (all points if empty).
inline MetricReport evaluate(std::span<const Vec3> pred, std::span<const Vec3> gt,
                             std::optional<std::span<const PointId>> subset = std::nullopt) {
  if (pred.size() != gt.size())
    throw ConfigError("prediction count " + std::to_string(pred.size()) + " does not match ground truth count " +
                      std::to_string(gt.size()));
  MetricReport report;
  double sum_sq = 0.0;
  std::size_t below5 = 0, below10 = 0;
  auto visit = [&](std::size_t i) {
    const double e = angle_error_unoriented(pred[i], gt[i]);
    sum_sq += e * e;
    below5 += e < 5.0 ? 1 : 0;
    below10 += e < 10.0 ? 1 : 0;
    ++report.n_evaluated;
  };
  if (subset) {
    for (PointId id : *subset) {
      if (id >= pred.size()) throw ConfigError("evaluation subset id " + std::to_string(id) + " out of range");
      visit(id);
    }
  } else {
    for (std::size_t i = 0; i < pred.size(); ++i) visit(i);
  }
  if (report.n_evaluated == 0) return report;
  const double n = static_cast<double>(report.n_evaluated);
  report.rmse_deg = std::sqrt(sum_sq / n);
  report.pgp5 = static_cast<double>(below5) / n;
  report.pgp10 = static_cast<double>(below10) / n;
  return report;
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_GEOMETRY_METRICS_HPP
