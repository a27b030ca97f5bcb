// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Order-2 osculating jet: a height function
//   h(u, v) = c0 + c1 u + c2 v + c3 u^2 + c4 u v + c5 v^2
// fitted by least squares in the PCA frame of the neighbourhood, with the
// frame origin at the query point (the first neighbour).

#ifndef PATCHSTITCH_ESTIMATORS_JET_HPP
#define PATCHSTITCH_ESTIMATORS_JET_HPP

#include <array>
#include <cmath>
#include <limits>
#include <span>

#include "patchstitch/error.hpp"
#include "patchstitch/estimators/linalg.hpp"
#include "patchstitch/estimators/pca.hpp"

namespace patchstitch {

struct JetFit {
  Vec3 normal;                  // at the query point, sign-canonicalized
  std::array<double, 6> coeffs{};
  Mat3 frame{};                 // columns: u axis, v axis, height axis
  Vec3 origin;
  double condition = 1.0;       // of the solved normal equations

  Vec3 to_frame(const Vec3& p) const {
    const Vec3 d = p - origin;
    return {frame[0][0] * d.x + frame[1][0] * d.y + frame[2][0] * d.z,
            frame[0][1] * d.x + frame[1][1] * d.y + frame[2][1] * d.z,
            frame[0][2] * d.x + frame[1][2] * d.y + frame[2][2] * d.z};
  }

  /// Surface normal of the fitted jet above the projection of `p`.
  Vec3 normal_at(const Vec3& p) const {
    const Vec3 l = to_frame(p);
    const double hu = coeffs[1] + 2.0 * coeffs[3] * l.x + coeffs[4] * l.y;
    const double hv = coeffs[2] + coeffs[4] * l.x + 2.0 * coeffs[5] * l.y;
    return canonical_sign(normalized(frame * Vec3{-hu, -hv, 1.0}));
  }
};

struct JetOptions {
  double max_condition = 1e12;
  double damping_condition = 1e8;  // add Tikhonov damping above this
  double damping = 1e-10;
};

inline JetFit jet_normal(std::span<const Vec3> pts, const JetOptions& opt = {}) {
  if (pts.size() < 6) throw DegenerateInput("jet fit needs at least 6 points");
  const PlaneFit plane = pca_normal(pts);

  JetFit fit;
  fit.origin = pts[0];
  // Right-handed frame with the plane normal as height axis.
  const Vec3 w = plane.normal;
  const Vec3 u = plane.axes[2];
  const Vec3 v = cross(w, u);
  for (int r = 0; r < 3; ++r) {
    fit.frame[r][0] = u[r];
    fit.frame[r][1] = v[r];
    fit.frame[r][2] = w[r];
  }

  // Solve in coordinates scaled to unit extent for conditioning.
  double scale = 0.0;
  for (const auto& p : pts) {
    const Vec3 l = fit.to_frame(p);
    scale = std::max(scale, std::hypot(l.x, l.y));
  }
  if (!(scale > 0.0)) throw DegenerateInput("jet fit on coincident points");

  SquareMatrix<6> ata{};
  std::array<double, 6> atb{};
  for (const auto& p : pts) {
    const Vec3 l = fit.to_frame(p) / scale;
    const std::array<double, 6> row = {1.0, l.x, l.y, l.x * l.x, l.x * l.y, l.y * l.y};
    for (std::size_t i = 0; i < 6; ++i) {
      atb[i] += row[i] * l.z;
      for (std::size_t j = 0; j < 6; ++j) ata[i][j] += row[i] * row[j];
    }
  }

  auto eig = symmetric_eigen(ata);
  auto cond = [](const SymmetricEigen<6>& e) {
    return e.values[0] > 0.0 ? e.values[5] / e.values[0] : std::numeric_limits<double>::infinity();
  };
  fit.condition = cond(eig);
  if (fit.condition > opt.damping_condition) {
    const double lambda = opt.damping * std::max(1.0, eig.values[5]);
    for (std::size_t i = 3; i < 6; ++i) ata[i][i] += lambda;
    eig = symmetric_eigen(ata);
    fit.condition = cond(eig);
  }
  if (!(fit.condition <= opt.max_condition)) throw DegenerateInput("jet normal equations are singular");

  // x = V diag(1/lambda) V^T b
  std::array<double, 6> c{};
  for (std::size_t k = 0; k < 6; ++k) {
    double proj = 0.0;
    for (std::size_t i = 0; i < 6; ++i) proj += eig.vectors[k][i] * atb[i];
    proj /= eig.values[k];
    for (std::size_t i = 0; i < 6; ++i) c[i] += proj * eig.vectors[k][i];
  }
  fit.coeffs = {c[0] * scale, c[1], c[2], c[3] / scale, c[4] / scale, c[5] / scale};
  fit.normal = fit.normal_at(fit.origin);
  return fit;
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_ESTIMATORS_JET_HPP
