// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_GEOMETRY_POINT_CLOUD_HPP
#define PATCHSTITCH_GEOMETRY_POINT_CLOUD_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch {

/// N positions with optional ground-truth unit normals.
///
/// Construction validates that positions are finite and, when normals are
/// given, that there is one per position with unit length (within 1e-4).
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(std::vector<Vec3> positions, std::optional<std::vector<Vec3>> normals = std::nullopt)
      : positions_(std::move(positions)), normals_(std::move(normals)) {
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      if (!is_finite(positions_[i])) {
        throw DataError("point " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
    if (normals_) {
      if (normals_->size() != positions_.size()) {
        throw DataError("normal count " + std::to_string(normals_->size()) + " does not match point count " +
                        std::to_string(positions_.size()));
      }
      for (std::size_t i = 0; i < normals_->size(); ++i) {
        const double len = norm((*normals_)[i]);
        if (!(std::abs(len - 1.0) <= 1e-4)) {
          throw DataError("normal " + std::to_string(i) + " is not unit length (norm " + std::to_string(len) + ")");
        }
      }
    }
  }

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }

  const Vec3& operator[](std::size_t i) const { return positions_[i]; }
  std::span<const Vec3> positions() const { return positions_; }

  bool has_normals() const { return normals_.has_value(); }
  std::span<const Vec3> normals() const {
    if (!normals_) throw DataError("point cloud has no ground-truth normals");
    return *normals_;
  }

  Vec3 centroid() const {
    Vec3 c;
    for (const auto& p : positions_) c += p;
    return positions_.empty() ? c : c / static_cast<double>(positions_.size());
  }

 private:
  std::vector<Vec3> positions_;
  std::optional<std::vector<Vec3>> normals_;
};

}  // namespace patchstitch

#endif  // PATCHSTITCH_GEOMETRY_POINT_CLOUD_HPP
