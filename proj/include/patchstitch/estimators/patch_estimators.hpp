// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Classical patch-level backends for the stitching pipeline.

#ifndef PATCHSTITCH_ESTIMATORS_PATCH_ESTIMATORS_HPP
#define PATCHSTITCH_ESTIMATORS_PATCH_ESTIMATORS_HPP

#include <vector>

#include "patchstitch/estimators/jet.hpp"
#include "patchstitch/estimators/pca.hpp"
#include "patchstitch/prediction.hpp"

namespace patchstitch {

/// One plane per patch: every member receives the patch PCA normal.
class PcaPatchEstimator final : public PatchEstimator {
 public:
  PatchPrediction estimate(const Patch& patch) const override {
    const Vec3 n = pca_normal(patch.local_coords).normal;
    return PatchPrediction::uniform_weight(std::vector<Vec3>(patch.size(), n));
  }
  std::string_view name() const override { return "pca"; }
};

/// One jet per patch, evaluated at each member's projection.
/// Falls back to the plane fit if the jet system is singular.
class JetPatchEstimator final : public PatchEstimator {
 public:
  PatchPrediction estimate(const Patch& patch) const override {
    std::vector<Vec3> normals;
    normals.reserve(patch.size());
    try {
      const JetFit jet = jet_normal(patch.local_coords);
      for (const auto& p : patch.local_coords) normals.push_back(jet.normal_at(p));
    } catch (const DegenerateInput&) {
      normals.assign(patch.size(), pca_normal(patch.local_coords).normal);
    }
    return PatchPrediction::uniform_weight(std::move(normals));
  }
  std::string_view name() const override { return "jet"; }
};

}  // namespace patchstitch

#endif  // PATCHSTITCH_ESTIMATORS_PATCH_ESTIMATORS_HPP
