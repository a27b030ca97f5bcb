// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Small dense symmetric eigen-solvers used by the plane and jet fits.

#ifndef PATCHSTITCH_ESTIMATORS_LINALG_HPP
#define PATCHSTITCH_ESTIMATORS_LINALG_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch {

template <std::size_t N>
using SquareMatrix = std::array<std::array<double, N>, N>;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
/// vectors[k] is the unit eigenvector of values[k].
template <std::size_t N>
struct SymmetricEigen {
  std::array<double, N> values{};
  std::array<std::array<double, N>, N> vectors{};
};

namespace detail {

/// Cyclic Jacobi sweeps on `a`, accumulating rotations into the columns of `v`.
template <std::size_t N>
void jacobi_sweeps(SquareMatrix<N>& a, SquareMatrix<N>& v, int max_sweeps = 60) {
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      diag += a[i][i] * a[i][i];
      for (std::size_t j = i + 1; j < N; ++j) off += a[i][j] * a[i][j];
    }
    if (off == 0.0 || off <= 1e-34 * diag) return;

    for (std::size_t p = 0; p < N; ++p) {
      for (std::size_t q = p + 1; q < N; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < N; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < N; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < N; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

template <std::size_t N>
SymmetricEigen<N> sorted_from(const SquareMatrix<N>& diagonalized, const SquareMatrix<N>& v) {
  std::array<std::size_t, N> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return diagonalized[i][i] < diagonalized[j][j]; });
  SymmetricEigen<N> out;
  for (std::size_t k = 0; k < N; ++k) {
    out.values[k] = diagonalized[order[k]][order[k]];
    for (std::size_t r = 0; r < N; ++r) out.vectors[k][r] = v[r][order[k]];
  }
  return out;
}

inline Vec3 best_row_cross(const Mat3& a, double lambda) {
  const Vec3 r0{a[0][0] - lambda, a[0][1], a[0][2]};
  const Vec3 r1{a[1][0], a[1][1] - lambda, a[1][2]};
  const Vec3 r2{a[2][0], a[2][1], a[2][2] - lambda};
  const Vec3 c[3] = {cross(r0, r1), cross(r0, r2), cross(r1, r2)};
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (squared_norm(c[i]) > squared_norm(c[best])) best = i;
  return c[best];
}

}  // namespace detail

/// General symmetric solver: Jacobi iteration from the identity.
template <std::size_t N>
SymmetricEigen<N> symmetric_eigen(SquareMatrix<N> a) {
  SquareMatrix<N> v{};
  for (std::size_t i = 0; i < N; ++i) v[i][i] = 1.0;
  detail::jacobi_sweeps(a, v);
  return detail::sorted_from(a, v);
}

/// Symmetric 3x3 eigen-decomposition.
///
/// Eigenvalues come from the trigonometric solution of the characteristic
/// polynomial; eigenvectors of the extreme eigenvalues from cross products of
/// rows of (A - lambda I). The resulting basis is then refined with Jacobi
/// sweeps on V^T A V, which also covers repeated eigenvalues where the cross
/// products vanish.
inline SymmetricEigen<3> symmetric_eigen3(const Mat3& a) {
  const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
  const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
  const double p2 = (a[0][0] - q) * (a[0][0] - q) + (a[1][1] - q) * (a[1][1] - q) + (a[2][2] - q) * (a[2][2] - q) +
                    2.0 * p1;

  SquareMatrix<3> v = identity3();
  if (p2 > 0.0 && p1 > 0.0) {
    const double p = std::sqrt(p2 / 6.0);
    Mat3 b{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
    const double r = std::clamp(determinant(b) / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double lmax = q + 2.0 * p * std::cos(phi);
    const double lmin = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);

    Vec3 e0 = detail::best_row_cross(a, lmin);
    Vec3 e2 = detail::best_row_cross(a, lmax);
    const double n0 = norm(e0), n2 = norm(e2);
    if (n0 > 0.0 && n2 > 0.0) {
      e0 /= n0;
      e2 /= n2;
      e2 -= dot(e2, e0) * e0;
      const double m2 = norm(e2);
      if (m2 > 1e-8) {
        e2 /= m2;
        const Vec3 e1 = cross(e2, e0);
        for (int r2 = 0; r2 < 3; ++r2) {
          v[r2][0] = e0[r2];
          v[r2][1] = e1[r2];
          v[r2][2] = e2[r2];
        }
      }
    }
  }

  // B = V^T A V, then polish with Jacobi.
  SquareMatrix<3> bmat{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) s += v[k][i] * a[k][l] * v[l][j];
      bmat[i][j] = s;
    }
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) bmat[j][i] = bmat[i][j] = 0.5 * (bmat[i][j] + bmat[j][i]);
  detail::jacobi_sweeps(bmat, v);
  return detail::sorted_from(bmat, v);
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_ESTIMATORS_LINALG_HPP
