// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_PATCHNET_ESTIMATOR_HPP
#define PATCHSTITCH_PATCHNET_ESTIMATOR_HPP

#include <utility>

#include "patchstitch/patchnet/network.hpp"
#include "patchstitch/prediction.hpp"

namespace patchstitch::net {

/// Trained network as a stitching backend. Parameters are read-only, so one
/// instance can serve concurrent callers.
class NetPatchEstimator final : public PatchEstimator {
 public:
  explicit NetPatchEstimator(NetworkParams params) : params_(std::move(params)) { params_.config.validate(); }

  PatchPrediction estimate(const Patch& patch) const override { return predict(to_matrix(patch.local_coords), params_); }
  std::string_view name() const override { return "net"; }

  const NetworkParams& params() const { return params_; }

 private:
  NetworkParams params_;
};

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_ESTIMATOR_HPP
