// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_ESTIMATORS_PCA_HPP
#define PATCHSTITCH_ESTIMATORS_PCA_HPP

#include <array>
#include <span>

#include "patchstitch/error.hpp"
#include "patchstitch/estimators/linalg.hpp"
#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch {

struct PlaneFit {
  Vec3 normal;
  Vec3 centroid;
  std::array<double, 3> eigenvalues{};  // ascending
  std::array<Vec3, 3> axes{};           // eigenvectors matching eigenvalues; axes[0] == normal
};

/// Covariance of the points about their mean (divided by the count).
inline Mat3 covariance(std::span<const Vec3> pts, Vec3* mean_out = nullptr) {
  Vec3 mean;
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 c{};
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) c[i][j] += d[i] * d[j];
  }
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) c[j][i] = c[i][j] /= static_cast<double>(pts.size());
  if (mean_out) *mean_out = mean;
  return c;
}

/// Least-squares plane through the points; the normal is the eigenvector of
/// the smallest covariance eigenvalue, sign-canonicalized.
inline PlaneFit pca_normal(std::span<const Vec3> pts) {
  if (pts.size() < 3) throw DegenerateInput("plane fit needs at least 3 points");
  PlaneFit fit;
  const Mat3 cov = covariance(pts, &fit.centroid);
  const auto eig = symmetric_eigen3(cov);
  // Rank below 2 means collinear or coincident points.
  if (!(eig.values[2] > 0.0) || eig.values[1] <= 1e-12 * eig.values[2])
    throw DegenerateInput("plane fit on collinear or coincident points");
  for (int k = 0; k < 3; ++k) {
    fit.eigenvalues[static_cast<std::size_t>(k)] = std::max(0.0, eig.values[static_cast<std::size_t>(k)]);
    const auto& v = eig.vectors[static_cast<std::size_t>(k)];
    fit.axes[static_cast<std::size_t>(k)] = normalized(Vec3{v[0], v[1], v[2]});
  }
  fit.axes[0] = canonical_sign(fit.axes[0]);
  fit.normal = fit.axes[0];
  return fit;
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_ESTIMATORS_PCA_HPP
