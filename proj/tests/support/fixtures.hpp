// Random patch sets and predictions for the stitching tests.

#ifndef PATCHSTITCH_TESTS_SUPPORT_FIXTURES_HPP
#define PATCHSTITCH_TESTS_SUPPORT_FIXTURES_HPP

#include <algorithm>
#include <array>
#include <vector>

#include "patchstitch/geometry/kdtree.hpp"
#include "patchstitch/geometry/patch.hpp"
#include "patchstitch/prediction.hpp"
#include "support/shapes.hpp"

namespace patchstitch::testing {

/// m kNN patches of size k around uniformly drawn centers (repeats allowed).
inline std::vector<Patch> random_patches(const PointCloud& cloud, std::size_t m, std::size_t k, Rng& rng) {
  const auto index = build_spatial_index(cloud);
  std::vector<Patch> patches;
  for (std::size_t p = 0; p < m; ++p)
    patches.push_back(extract_patch(cloud, static_cast<PointId>(uniform_index(rng, cloud.size())), k, index));
  return patches;
}

/// Random unit normals and random simplex rows; w_pred is the row maximum.
inline PatchPrediction random_prediction(std::size_t k, Rng& rng) {
  PatchPrediction pred;
  for (std::size_t s = 0; s < k; ++s) {
    pred.normals.push_back(random_unit(rng));
    const double a = uniform(rng, 0.0, 1.0), b = uniform(rng, 0.0, 1.0 - a);
    std::array<double, 3> w{a, b, 1.0 - a - b};
    const auto best = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    pred.expert_weights.push_back(w);
    pred.w_pred.push_back(w[best]);
    pred.chosen_branch.push_back(static_cast<std::uint8_t>(best + 1));
  }
  return pred;
}

inline std::vector<PatchPrediction> random_predictions(std::span<const Patch> patches, Rng& rng) {
  std::vector<PatchPrediction> out;
  for (const auto& p : patches) out.push_back(random_prediction(p.size(), rng));
  return out;
}

}  // namespace patchstitch::testing

#endif  // PATCHSTITCH_TESTS_SUPPORT_FIXTURES_HPP
