// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Per-point selection among overlapping patch predictions.
//
// Every occurrence of point i in patch p is a candidate with weight
//   w_candidate = w_pred * exp(-|x_i - c_p|^2 / (2 sigma_p^2)),
// where c_p is the patch centroid and sigma_p = sigma_ratio * radius_p, both
// in cloud units. The candidate with the largest weight wins, lowest patch id
// on ties. Points no patch covers get a PCA normal over their nearest cloud
// neighbours and are listed in `uncovered`.

#ifndef PATCHSTITCH_STITCHING_STITCH_HPP
#define PATCHSTITCH_STITCHING_STITCH_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/estimators/pca.hpp"
#include "patchstitch/geometry/kdtree.hpp"
#include "patchstitch/geometry/point_cloud.hpp"
#include "patchstitch/prediction.hpp"
#include "patchstitch/stitching/sparse_index.hpp"

namespace patchstitch {

inline constexpr std::uint32_t kNoPatch = std::numeric_limits<std::uint32_t>::max();

/// Gaussian falloff with distance from a patch centroid, in (0, 1].
inline double distance_weight(const Vec3& point, const Vec3& patch_centroid, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("distance weight needs sigma > 0");
  return std::exp(-squared_distance(point, patch_centroid) / (2.0 * sigma * sigma));
}

struct StitchConfig {
  double sigma_ratio = 1.0 / 3.0;   // sigma = sigma_ratio * patch radius
  std::size_t fallback_neighbors = 32;
};

struct StitchResult {
  std::vector<Vec3> normals;
  std::vector<double> winner_weight;       // 0 for uncovered points
  std::vector<std::uint32_t> winner_patch; // kNoPatch for uncovered points
  std::vector<std::uint32_t> candidate_count;
  std::vector<PointId> uncovered;

  std::size_t size() const { return normals.size(); }
};

namespace detail {

inline void check_alignment(const PointCloud& cloud, std::span<const Patch> patches,
                            std::span<const PatchPrediction> predictions) {
  if (patches.size() != predictions.size())
    throw ConfigError(std::to_string(predictions.size()) + " predictions for " + std::to_string(patches.size()) +
                      " patches");
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const auto k = patches[p].size();
    const auto& pr = predictions[p];
    if (pr.normals.size() != k || pr.w_pred.size() != k)
      throw ConfigError("prediction " + std::to_string(p) + " does not match its patch size");
    for (PointId id : patches[p].member_ids)
      if (id >= cloud.size()) throw ConfigError("patch " + std::to_string(p) + " member out of range");
  }
}

inline double patch_sigma(const Patch& patch, const StitchConfig& config) {
  const double sigma = config.sigma_ratio * patch.radius;
  // Degenerate single-point patches still need a positive sigma.
  return sigma > 0.0 ? sigma : std::numeric_limits<double>::min();
}

inline double candidate_weight(const PointCloud& cloud, PointId point, const Patch& patch,
                               const PatchPrediction& pred, std::size_t slot, double sigma) {
  return pred.w_pred[slot] * distance_weight(cloud[point], patch.centroid, sigma);
}

inline void fill_uncovered(const PointCloud& cloud, StitchResult& result, const StitchConfig& config,
                           const SpatialIndex* index) {
  if (result.uncovered.empty()) return;
  std::optional<SpatialIndex> local;
  if (!index) {
    local.emplace(cloud.positions());
    index = &*local;
  }
  std::vector<Vec3> nbrs;
  for (PointId i : result.uncovered) {
    nbrs.clear();
    for (PointId id : index->knn(cloud[i], config.fallback_neighbors)) nbrs.push_back(cloud[id]);
    try {
      result.normals[i] = pca_normal(nbrs).normal;
    } catch (const DegenerateInput&) {
      result.normals[i] = Vec3{0.0, 0.0, 1.0};
    }
  }
}

inline StitchResult empty_result(std::size_t n) {
  StitchResult r;
  r.normals.assign(n, Vec3{});
  r.winner_weight.assign(n, 0.0);
  r.winner_patch.assign(n, kNoPatch);
  r.candidate_count.assign(n, 0);
  return r;
}

}  // namespace detail

/// Index-driven stitching. `fallback_index` is used for uncovered points
/// (one is built on demand if null).
inline StitchResult stitch(const PointCloud& cloud, std::span<const Patch> patches,
                           std::span<const PatchPrediction> predictions, const SparseIndexMatrix& index,
                           const StitchConfig& config = {}, const SpatialIndex* fallback_index = nullptr) {
  detail::check_alignment(cloud, patches, predictions);
  if (index.num_points() != cloud.size()) throw ConfigError("sparse index was built for a different cloud");

  std::vector<double> sigma(patches.size());
  for (std::size_t p = 0; p < patches.size(); ++p) sigma[p] = detail::patch_sigma(patches[p], config);

  const std::size_t n = cloud.size();
  StitchResult result = detail::empty_result(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = index.row(i);
    result.candidate_count[i] = static_cast<std::uint32_t>(row.size());
    if (row.empty()) {
      result.uncovered.push_back(static_cast<PointId>(i));
      continue;
    }
    double best = -1.0;
    IndexEntry winner{};
    for (const IndexEntry& e : row) {
      const double w = detail::candidate_weight(cloud, static_cast<PointId>(i), patches[e.patch_id],
                                                predictions[e.patch_id], e.slot, sigma[e.patch_id]);
      if (w > best || (w == best && e.patch_id < winner.patch_id)) {
        best = w;
        winner = e;
      }
    }
    result.normals[i] = predictions[winner.patch_id].normals[winner.slot];
    result.winner_weight[i] = best;
    result.winner_patch[i] = winner.patch_id;
  }
  detail::fill_uncovered(cloud, result, config, fallback_index);
  return result;
}

/// Reference stitching without an index: for every point, scan every slot of
/// every patch. O(N * M * K); used as an oracle and for timing comparisons.
inline StitchResult stitch_naive(const PointCloud& cloud, std::span<const Patch> patches,
                                 std::span<const PatchPrediction> predictions, const StitchConfig& config = {},
                                 const SpatialIndex* fallback_index = nullptr) {
  detail::check_alignment(cloud, patches, predictions);
  const std::size_t n = cloud.size();
  StitchResult result = detail::empty_result(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    std::uint32_t best_patch = kNoPatch;
    std::size_t best_slot = 0;
    std::uint32_t count = 0;
    for (std::size_t p = 0; p < patches.size(); ++p) {
      const auto& members = patches[p].member_ids;
      for (std::size_t s = 0; s < members.size(); ++s) {
        if (members[s] != i) continue;
        ++count;
        const double w = detail::candidate_weight(cloud, static_cast<PointId>(i), patches[p], predictions[p], s,
                                                  detail::patch_sigma(patches[p], config));
        if (w > best) {
          best = w;
          best_patch = static_cast<std::uint32_t>(p);
          best_slot = s;
        }
      }
    }
    result.candidate_count[i] = count;
    if (count == 0) {
      result.uncovered.push_back(static_cast<PointId>(i));
      continue;
    }
    result.normals[i] = predictions[best_patch].normals[best_slot];
    result.winner_weight[i] = best;
    result.winner_patch[i] = best_patch;
  }
  detail::fill_uncovered(cloud, result, config, fallback_index);
  return result;
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_STITCHING_STITCH_HPP
