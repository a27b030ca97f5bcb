// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_PREDICTION_HPP
#define PATCHSTITCH_PREDICTION_HPP

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "patchstitch/geometry/patch.hpp"
#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch {

/// Per-member output of a patch-level estimator.
///
/// normals are unit directions in the cloud frame. expert_weights rows are
/// points on the 3-simplex; w_pred is the row maximum and chosen_branch its
/// (1-based) column. Classical estimators report a one-hot row on branch 1.
struct PatchPrediction {
  std::vector<Vec3> normals;
  std::vector<std::array<double, 3>> expert_weights;
  std::vector<double> w_pred;
  std::vector<std::uint8_t> chosen_branch;

  std::size_t size() const { return normals.size(); }

  static PatchPrediction uniform_weight(std::vector<Vec3> normals) {
    PatchPrediction p;
    const auto k = normals.size();
    p.normals = std::move(normals);
    p.expert_weights.assign(k, {1.0, 0.0, 0.0});
    p.w_pred.assign(k, 1.0);
    p.chosen_branch.assign(k, 1);
    return p;
  }
};

/// Anything that maps a patch to per-member cloud-frame normals.
class PatchEstimator {
 public:
  virtual ~PatchEstimator() = default;
  virtual PatchPrediction estimate(const Patch& patch) const = 0;
  virtual std::string_view name() const = 0;
};

}  // namespace patchstitch

#endif  // PATCHSTITCH_PREDICTION_HPP
