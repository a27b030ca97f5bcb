// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// sample centers -> extract patches -> per-patch estimation -> index -> stitch

#ifndef PATCHSTITCH_STITCHING_PIPELINE_HPP
#define PATCHSTITCH_STITCHING_PIPELINE_HPP

#include <chrono>
#include <vector>

#include "patchstitch/geometry/kdtree.hpp"
#include "patchstitch/geometry/patch.hpp"
#include "patchstitch/geometry/sampling.hpp"
#include "patchstitch/prediction.hpp"
#include "patchstitch/random.hpp"
#include "patchstitch/stitching/sparse_index.hpp"
#include "patchstitch/stitching/stitch.hpp"

namespace patchstitch {

struct PipelineConfig {
  StitchConfig stitch;
  bool naive_stitch = false;
};

struct PipelineTimings {
  double sampling_ms = 0.0;    // spatial index + FPS + patch extraction
  double inference_ms = 0.0;   // patch-level estimation
  double stitch_ms = 0.0;      // sparse index construction + selection (or naive scan)
};

struct PipelineResult {
  StitchResult stitch;
  std::vector<Patch> patches;
  PipelineTimings timings;
  double overlap = 0.0;        // K*M/N
  std::size_t peak_overlap = 0;
};

/// FPS seed for a run seed: 0 keeps the centroid start, anything else draws
/// a stage sub-seed.
inline std::uint64_t fps_seed(std::uint64_t run_seed) {
  if (run_seed == 0) return 0;
  const auto s = derive_seed(run_seed, "fps");
  return s == 0 ? 1 : s;
}

/// Samples M patch centers and extracts their patches.
inline std::vector<Patch> sample_patches(const PointCloud& cloud, const SamplingPlan& plan, const SpatialIndex& index) {
  plan.validate(cloud.size());
  const auto centers = farthest_point_sample(cloud, plan.patch_count, fps_seed(plan.seed));
  std::vector<Patch> patches;
  patches.reserve(centers.size());
  for (PointId c : centers) patches.push_back(extract_patch(cloud, c, plan.patch_size, index));
  return patches;
}

inline PipelineResult run_pipeline(const PointCloud& cloud, const SamplingPlan& plan, const PatchEstimator& estimator,
                                   const PipelineConfig& config = {}) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  PipelineResult out;
  auto t0 = Clock::now();
  const SpatialIndex index = build_spatial_index(cloud);
  out.patches = sample_patches(cloud, plan, index);
  out.timings.sampling_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<PatchPrediction> predictions;
  predictions.reserve(out.patches.size());
  for (const auto& patch : out.patches) predictions.push_back(estimator.estimate(patch));
  out.timings.inference_ms = ms_since(t0);

  t0 = Clock::now();
  if (config.naive_stitch) {
    out.stitch = stitch_naive(cloud, out.patches, predictions, config.stitch, &index);
  } else {
    const auto sparse = build_sparse_index(out.patches, cloud.size());
    out.stitch = stitch(cloud, out.patches, predictions, sparse, config.stitch, &index);
  }
  out.timings.stitch_ms = ms_since(t0);

  out.overlap = plan.overlap_rate(cloud.size());
  for (auto c : out.stitch.candidate_count) out.peak_overlap = std::max<std::size_t>(out.peak_overlap, c);
  return out;
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_STITCHING_PIPELINE_HPP
