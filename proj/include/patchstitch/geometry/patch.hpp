// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_GEOMETRY_PATCH_HPP
#define PATCHSTITCH_GEOMETRY_PATCH_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/kdtree.hpp"
#include "patchstitch/geometry/point_cloud.hpp"

namespace patchstitch {

/// K nearest neighbours of a center point, normalized to a local frame.
///
/// local_coords[s] = (cloud[member_ids[s]] - centroid) / scale, where the
/// centroid is the mean of the members and scale is the largest member
/// distance from it. member_ids[0] is always the center.
struct Patch {
  PointId center_id = 0;
  std::vector<PointId> member_ids;
  std::vector<Vec3> local_coords;
  Vec3 centroid;
  double scale = 1.0;
  double radius = 0.0;

  std::size_t size() const { return member_ids.size(); }

  Vec3 to_cloud(const Vec3& local) const { return centroid + scale * local; }
};

/// Builds the patch for a given set of members (center first).
inline Patch make_patch(const PointCloud& cloud, std::vector<PointId> members) {
  if (members.empty()) throw ConfigError("a patch needs at least one member");
  Patch patch;
  patch.center_id = members.front();
  patch.member_ids = std::move(members);

  Vec3 sum;
  for (PointId id : patch.member_ids) sum += cloud[id];
  patch.centroid = sum / static_cast<double>(patch.member_ids.size());

  double r2 = 0.0;
  for (PointId id : patch.member_ids) r2 = std::max(r2, squared_distance(cloud[id], patch.centroid));
  patch.radius = std::sqrt(r2);
  // A patch of coincident points has nothing to normalize; keep scale positive.
  patch.scale = patch.radius > 0.0 ? patch.radius : 1.0;

  patch.local_coords.reserve(patch.member_ids.size());
  for (PointId id : patch.member_ids) patch.local_coords.push_back((cloud[id] - patch.centroid) / patch.scale);
  return patch;
}

/// Patch made of the K nearest neighbours of `center_id`, center included.
inline Patch extract_patch(const PointCloud& cloud, PointId center_id, std::size_t k, const SpatialIndex& index) {
  if (k < 1) throw ConfigError("patch size must be positive");
  if (k > cloud.size())
    throw ConfigError("patch size " + std::to_string(k) + " exceeds point count " + std::to_string(cloud.size()));
  if (center_id >= cloud.size()) throw ConfigError("patch center out of range");

  auto ids = index.knn(cloud[center_id], k);
  // Duplicates of the center with lower ids can outrank it; force it to slot 0.
  auto it = std::find(ids.begin(), ids.end(), center_id);
  if (it == ids.end()) {
    ids.pop_back();
    ids.insert(ids.begin(), center_id);
  } else {
    std::rotate(ids.begin(), it, it + 1);
  }
  return make_patch(cloud, std::move(ids));
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_GEOMETRY_PATCH_HPP
