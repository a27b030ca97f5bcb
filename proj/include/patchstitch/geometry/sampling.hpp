// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_GEOMETRY_SAMPLING_HPP
#define PATCHSTITCH_GEOMETRY_SAMPLING_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/point_cloud.hpp"
#include "patchstitch/random.hpp"

namespace patchstitch {

/// Patch sampling parameters for one cloud.
struct SamplingPlan {
  std::size_t patch_size = 256;   // K
  std::size_t patch_count = 0;    // M
  std::uint64_t seed = 0;

  /// Average number of patches each point belongs to, K*M/N.
  double overlap_rate(std::size_t n_points) const {
    return n_points == 0 ? 0.0 : static_cast<double>(patch_size * patch_count) / static_cast<double>(n_points);
  }

  /// Plan whose patch count gives roughly the requested overlap rate.
  static SamplingPlan for_overlap(std::size_t n_points, std::size_t patch_size, double overlap, std::uint64_t seed) {
    if (patch_size == 0) throw ConfigError("patch size must be positive");
    const double m = overlap * static_cast<double>(n_points) / static_cast<double>(patch_size);
    SamplingPlan plan;
    plan.patch_size = patch_size;
    plan.patch_count = std::max<std::size_t>(1, static_cast<std::size_t>(m + 0.5));
    plan.seed = seed;
    return plan;
  }

  void validate(std::size_t n_points) const {
    if (patch_count < 1) throw ConfigError("patch count must be at least 1");
    if (patch_size < 3) throw ConfigError("patch size must be at least 3");
    if (patch_size > n_points)
      throw ConfigError("patch size " + std::to_string(patch_size) + " exceeds point count " + std::to_string(n_points));
    if (patch_count > n_points)
      throw ConfigError("patch count " + std::to_string(patch_count) + " exceeds point count " +
                        std::to_string(n_points));
  }
};

/// Id of the point nearest to the cloud centroid (lowest id on ties).
inline PointId nearest_to_centroid(const PointCloud& cloud) {
  const Vec3 c = cloud.centroid();
  PointId best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d2 = squared_distance(cloud[i], c);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<PointId>(i);
    }
  }
  return best;
}

/// Greedy max-min sampling of `m` centers starting from `start`.
/// Ties in the max-min distance go to the lowest id; chosen points are never
/// picked twice, so m == N yields a permutation even with duplicate points.
inline std::vector<PointId> farthest_point_sample_from(const PointCloud& cloud, std::size_t m, PointId start) {
  const std::size_t n = cloud.size();
  if (m < 1) throw ConfigError("farthest point sampling needs at least one center");
  if (m > n) throw ConfigError("cannot sample " + std::to_string(m) + " centers from " + std::to_string(n) + " points");
  if (start >= n) throw ConfigError("start point out of range");

  std::vector<PointId> centers;
  centers.reserve(m);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  const auto pts = cloud.positions();

  PointId current = start;
  for (std::size_t step = 0; step < m; ++step) {
    centers.push_back(current);
    chosen[current] = 1;
    if (step + 1 == m) break;
    const Vec3 c = pts[current];
    PointId next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = squared_distance(pts[i], c);
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (!chosen[i] && min_d2[i] > best) {
        best = min_d2[i];
        next = static_cast<PointId>(i);
      }
    }
    current = next;
  }
  return centers;
}

/// Farthest point sampling. seed == 0 starts at the point nearest the
/// centroid; any other seed starts at a uniformly drawn point.
inline std::vector<PointId> farthest_point_sample(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  if (cloud.empty()) throw ConfigError("cannot sample from an empty point cloud");
  PointId start = 0;
  if (seed == 0) {
    start = nearest_to_centroid(cloud);
  } else {
    Rng rng(seed);
    start = static_cast<PointId>(uniform_index(rng, cloud.size()));
  }
  return farthest_point_sample_from(cloud, m, start);
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_GEOMETRY_SAMPLING_HPP
