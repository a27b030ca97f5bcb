// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_TOOLS_RUN_CONFIG_HPP
#define PATCHSTITCH_TOOLS_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "patchstitch/error.hpp"
#include "patchstitch/estimators/patch_estimators.hpp"
#include "patchstitch/geometry/sampling.hpp"
#include "patchstitch/patchnet/estimator.hpp"
#include "patchstitch/patchnet/weights_io.hpp"
#include "patchstitch/stitching/pipeline.hpp"

namespace patchstitch::cli {

namespace fs = std::filesystem;

enum class Backend { kPca, kJet, kNet };

inline Backend parse_backend(std::string_view s) {
  if (s == "pca") return Backend::kPca;
  if (s == "jet") return Backend::kJet;
  if (s == "net") return Backend::kNet;
  throw ConfigError("unknown backend '" + std::string(s) + "' (expected pca, jet or net)");
}

inline std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kPca: return "pca";
    case Backend::kJet: return "jet";
    case Backend::kNet: return "net";
  }
  return "?";
}

/// Everything one estimation run needs.
struct RunConfig {
  std::size_t patch_size = 256;
  std::size_t patch_count = 0;  // 0: derive from `overlap`
  double overlap = 12.0;
  std::uint64_t seed = 0;
  Backend backend = Backend::kJet;
  std::optional<fs::path> weights;
  double sigma_ratio = 1.0 / 3.0;
  std::optional<std::size_t> k_graph;  // overrides the value stored with the weights
  bool naive_stitch = false;

  fs::path input;
  std::optional<fs::path> normals;
  std::optional<fs::path> subset;
  std::optional<fs::path> output;
  std::optional<fs::path> report;
  std::optional<fs::path> heatmap;

  void validate() const {
    if (backend == Backend::kNet && !weights) throw ConfigError("backend 'net' requires --weights");
    if (weights && backend != Backend::kNet) throw ConfigError("--weights is only used by backend 'net'");
    if (weights && !fs::is_regular_file(*weights)) throw ConfigError("weights file not found: " + weights->string());
    if (patch_size < 3) throw ConfigError("patch size must be at least 3");
    if (patch_count == 0 && !(overlap > 0.0)) throw ConfigError("overlap must be positive");
    if (!(sigma_ratio > 0.0)) throw ConfigError("sigma ratio must be positive");
    if (k_graph && *k_graph == 0) throw ConfigError("k-graph must be positive");
    if (heatmap && !normals) throw ConfigError("a heatmap needs reference normals (--normals)");
  }

  SamplingPlan plan(std::size_t n_points) const {
    if (patch_count > 0) return SamplingPlan{patch_size, patch_count, seed};
    return SamplingPlan::for_overlap(n_points, patch_size, overlap, seed);
  }

  PipelineConfig pipeline() const {
    PipelineConfig c;
    c.stitch.sigma_ratio = sigma_ratio;
    c.naive_stitch = naive_stitch;
    return c;
  }
};

inline std::unique_ptr<PatchEstimator> make_estimator(const RunConfig& cfg) {
  switch (cfg.backend) {
    case Backend::kPca: return std::make_unique<PcaPatchEstimator>();
    case Backend::kJet: return std::make_unique<JetPatchEstimator>();
    case Backend::kNet: {
      auto loaded = net::load_weights(*cfg.weights);
      if (cfg.k_graph) loaded.params.config.k_graph = *cfg.k_graph;
      return std::make_unique<net::NetPatchEstimator>(std::move(loaded.params));
    }
  }
  throw ConfigError("unknown backend");
}

}  // namespace patchstitch::cli

#endif  // PATCHSTITCH_TOOLS_RUN_CONFIG_HPP
