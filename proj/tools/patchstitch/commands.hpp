// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Subcommand implementations behind the patchstitch executable.

#ifndef PATCHSTITCH_TOOLS_COMMANDS_HPP
#define PATCHSTITCH_TOOLS_COMMANDS_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchstitch/geometry/metrics.hpp"
#include "patchstitch/io/dataset.hpp"
#include "patchstitch/io/heatmap.hpp"
#include "patchstitch/io/text_formats.hpp"
#include "patchstitch/patchnet/train.hpp"
#include "patchstitch/patchnet/weights_io.hpp"
#include "run_config.hpp"

namespace patchstitch::cli {

using Json = nlohmann::ordered_json;

inline Json to_json(const MetricReport& m) {
  return Json{{"rmse_deg", m.rmse_deg}, {"pgp5", m.pgp5}, {"pgp10", m.pgp10}, {"n_evaluated", m.n_evaluated}};
}

inline Json config_json(const RunConfig& cfg, const SamplingPlan& plan) {
  Json j;
  j["backend"] = backend_name(cfg.backend);
  j["patch_size"] = plan.patch_size;
  j["patch_count"] = plan.patch_count;
  j["seed"] = cfg.seed;
  j["sigma_ratio"] = cfg.sigma_ratio;
  j["naive_stitch"] = cfg.naive_stitch;
  if (cfg.k_graph) j["k_graph"] = *cfg.k_graph;
  if (cfg.weights) j["weights"] = cfg.weights->string();
  return j;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOutcome {
  PipelineResult result;
  std::optional<MetricReport> metrics;
  Json report;
};

inline EstimateOutcome run_estimate(const RunConfig& cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  auto estimator = make_estimator(cfg);  // loads weights before any point data
  const PointCloud cloud = io::read_cloud(cfg.input, cfg.normals);
  std::optional<std::vector<PointId>> subset;
  if (cfg.subset) subset = io::read_indices(*cfg.subset, cloud.size());

  const SamplingPlan plan = cfg.plan(cloud.size());
  EstimateOutcome out{run_pipeline(cloud, plan, *estimator, cfg.pipeline()), std::nullopt, {}};
  const auto& r = out.result;

  Json& rep = out.report;
  rep["shape"] = cfg.input.stem().string();
  rep["points"] = cloud.size();
  rep["config"] = config_json(cfg, plan);
  rep["overlap"] = r.overlap;
  rep["peak_overlap"] = r.peak_overlap;
  rep["uncovered"] = r.stitch.uncovered.size();
  rep["timings_ms"] = Json{{"sampling", r.timings.sampling_ms},
                           {"inference", r.timings.inference_ms},
                           {"stitch", r.timings.stitch_ms}};
  rep["ms_per_point"] =
      (r.timings.sampling_ms + r.timings.inference_ms + r.timings.stitch_ms) / static_cast<double>(cloud.size());
  if (cloud.has_normals()) {
    out.metrics = evaluate(r.stitch.normals, cloud.normals(), subset ? std::optional<std::span<const PointId>>(*subset)
                                                                     : std::nullopt);
    rep["metrics"] = to_json(*out.metrics);
  }

  if (cfg.output) io::write_vectors(*cfg.output, r.stitch.normals);
  if (cfg.report) io::write_file_atomic(*cfg.report, rep.dump(2) + "\n");
  if (cfg.heatmap)
    io::write_file_atomic(*cfg.heatmap, io::heatmap_ply(cloud.positions(), r.stitch.normals, cloud.normals()));

  log << rep["shape"].get<std::string>() << ": " << cloud.size() << " points, " << plan.patch_count
      << " patches of " << plan.patch_size << ", overlap " << r.overlap;
  if (out.metrics) log << ", rmse " << out.metrics->rmse_deg << " deg";
  log << "\n";
  return out;
}

// ---------------------------------------------------------------------------
// bench

struct BenchInput {
  std::string name;
  PointCloud cloud;
  std::vector<PointId> subset;
};

struct BenchOptions {
  std::vector<std::size_t> patch_sizes{256};
  std::vector<std::size_t> patch_counts{};  // empty: derive from overlap
  double overlap = 12.0;
  std::uint64_t seed = 0;
  Backend backend = Backend::kJet;
  std::optional<fs::path> weights;
  std::optional<std::size_t> k_graph;
  double sigma_ratio = 1.0 / 3.0;
  std::size_t runs = 3;
  bool naive_stitch = false;  // also time the index-free reference
};

struct BenchRecord {
  std::string dataset;
  SamplingPlan plan;
  std::optional<MetricReport> metrics;
  double inference_ms_per_point = 0.0;
  double stitch_ms_per_point = 0.0;
  double ms_per_point = 0.0;           // mean over runs
  double ms_per_point_variance = 0.0;  // sample variance over runs
  double overlap = 0.0;
  std::size_t peak_overlap = 0;
  std::optional<double> naive_stitch_ms;
  std::optional<double> stitch_speedup;
};

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// One warm-up run, then `runs` timed runs per (input, K, M).
inline std::vector<BenchRecord> run_bench(const std::vector<BenchInput>& inputs, const BenchOptions& opt,
                                          std::ostream& log = std::cerr) {
  if (inputs.empty()) throw ConfigError("bench needs at least one input");
  if (opt.runs < 3) throw ConfigError("bench needs at least 3 timed runs");
  RunConfig rc;
  rc.backend = opt.backend;
  rc.weights = opt.weights;
  rc.k_graph = opt.k_graph;
  rc.sigma_ratio = opt.sigma_ratio;
  rc.validate();
  const auto estimator = make_estimator(rc);
  const PipelineConfig pcfg = rc.pipeline();

  using Clock = std::chrono::steady_clock;
  std::vector<BenchRecord> records;
  for (const auto& in : inputs) {
    const double n = static_cast<double>(in.cloud.size());
    for (std::size_t k : opt.patch_sizes) {
      std::vector<SamplingPlan> plans;
      if (opt.patch_counts.empty()) {
        plans.push_back(SamplingPlan::for_overlap(in.cloud.size(), k, opt.overlap, opt.seed));
      } else {
        for (std::size_t m : opt.patch_counts) plans.push_back(SamplingPlan{k, m, opt.seed});
      }
      for (const auto& plan : plans) {
        BenchRecord rec{in.name, plan, std::nullopt};
        std::vector<double> total, infer, stitch_t;
        PipelineResult last;
        for (std::size_t run = 0; run <= opt.runs; ++run) {
          last = run_pipeline(in.cloud, plan, *estimator, pcfg);
          if (run == 0) continue;  // warm-up
          const auto& t = last.timings;
          total.push_back((t.sampling_ms + t.inference_ms + t.stitch_ms) / n);
          infer.push_back(t.inference_ms / n);
          stitch_t.push_back(t.stitch_ms / n);
        }
        rec.ms_per_point = mean_of(total);
        rec.ms_per_point_variance = variance_of(total);
        rec.inference_ms_per_point = mean_of(infer);
        rec.stitch_ms_per_point = mean_of(stitch_t);
        rec.overlap = last.overlap;
        rec.peak_overlap = last.peak_overlap;
        if (in.cloud.has_normals())
          rec.metrics = evaluate(last.stitch.normals, in.cloud.normals(),
                                 in.subset.empty() ? std::nullopt : std::optional<std::span<const PointId>>(in.subset));

        if (opt.naive_stitch) {
          // Same patches and predictions, index-free selection.
          const auto index = build_spatial_index(in.cloud);
          std::vector<PatchPrediction> preds;
          for (const auto& p : last.patches) preds.push_back(estimator->estimate(p));
          const auto t0 = Clock::now();
          const auto naive = stitch_naive(in.cloud, last.patches, preds, pcfg.stitch, &index);
          rec.naive_stitch_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
          if (naive.winner_patch != last.stitch.winner_patch)
            throw NumericError("naive and indexed stitching disagree on " + in.name);
          rec.stitch_speedup = *rec.naive_stitch_ms / (rec.stitch_ms_per_point * n);
        }
        log << "bench " << in.name << " K=" << plan.patch_size << " M=" << plan.patch_count << " done\n";
        records.push_back(rec);
      }
    }
  }
  return records;
}

inline Json to_json(const BenchRecord& r) {
  Json j;
  j["dataset"] = r.dataset;
  j["patch_size"] = r.plan.patch_size;
  j["patch_count"] = r.plan.patch_count;
  j["seed"] = r.plan.seed;
  j["overlap"] = r.overlap;
  j["peak_overlap"] = r.peak_overlap;
  j["ms_per_point"] = r.ms_per_point;
  j["ms_per_point_variance"] = r.ms_per_point_variance;
  j["inference_ms_per_point"] = r.inference_ms_per_point;
  j["stitch_ms_per_point"] = r.stitch_ms_per_point;
  if (r.naive_stitch_ms) j["naive_stitch_ms"] = *r.naive_stitch_ms;
  if (r.stitch_speedup) j["stitch_speedup"] = *r.stitch_speedup;
  if (r.metrics) j["metrics"] = to_json(*r.metrics);
  return j;
}

inline std::string bench_table(const std::vector<BenchRecord>& records) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %6s %6s %8s %6s %12s %12s %12s %10s %9s\n", "dataset", "K", "M", "overlap",
                "peak", "ms/point", "infer ms/pt", "stitch ms/pt", "rmse", "speedup");
  out += line;
  for (const auto& r : records) {
    char rmse[32] = "-", speed[32] = "-";
    if (r.metrics) std::snprintf(rmse, sizeof rmse, "%.3f", r.metrics->rmse_deg);
    if (r.stitch_speedup) std::snprintf(speed, sizeof speed, "%.1fx", *r.stitch_speedup);
    std::snprintf(line, sizeof line, "%-20s %6zu %6zu %8.2f %6zu %12.5f %12.5f %12.6f %10s %9s\n",
                  r.dataset.substr(0, 20).c_str(), r.plan.patch_size, r.plan.patch_count, r.overlap,
                  r.peak_overlap, r.ms_per_point, r.inference_ms_per_point, r.stitch_ms_per_point, rmse, speed);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// heatmap

inline void run_heatmap(const fs::path& xyz, const fs::path& predicted, const fs::path& truth, const fs::path& out) {
  const auto positions = io::read_vectors(xyz);
  const auto pred = io::read_vectors(predicted);
  const auto gt = io::read_vectors(truth);
  io::write_file_atomic(out, io::heatmap_ply(positions, pred, gt));
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::size_t patch_size = 128;
  std::size_t patches_per_shape = 20;
  net::TrainConfig train;
  net::NetworkConfig network;
  std::optional<fs::path> resume;
  fs::path output;
  std::size_t checkpoint_every = 0;  // 0: only at the end
};

/// Random patch centers per shape, normalized patches with their reference normals.
inline std::vector<net::TrainingSample> training_samples(const std::vector<io::Shape>& shapes, std::size_t patch_size,
                                                         std::size_t per_shape, std::uint64_t seed) {
  std::vector<net::TrainingSample> out;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto& cloud = shapes[s].cloud;
    if (!cloud.has_normals()) throw DataError(shapes[s].name + ": training needs reference normals");
    if (per_shape > cloud.size()) throw ConfigError(shapes[s].name + ": more patches requested than points");
    const auto index = build_spatial_index(cloud);
    Rng rng(derive_seed(seed, "patch-centers", s));
    std::vector<PointId> ids(cloud.size());
    std::iota(ids.begin(), ids.end(), PointId{0});
    for (std::size_t i = 0; i < per_shape; ++i) std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
    for (std::size_t i = 0; i < per_shape; ++i) {
      const Patch p = extract_patch(cloud, ids[i], patch_size, index);
      net::TrainingSample sample{net::to_matrix(p.local_coords), net::Matrix(static_cast<Eigen::Index>(patch_size), 3)};
      for (std::size_t r = 0; r < patch_size; ++r) {
        const Vec3& n = cloud.normals()[p.member_ids[r]];
        sample.normals.row(static_cast<Eigen::Index>(r)) << n.x, n.y, n.z;
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

struct TrainOutcome {
  net::NetworkParams params;
  net::AdamState state;
  std::vector<double> losses;
};

/// Trains (or resumes) and writes an STNW checkpoint with optimizer state.
inline TrainOutcome run_train(const std::vector<io::Shape>& shapes, const TrainOptions& opt,
                              std::ostream& log = std::cerr) {
  if (shapes.empty()) throw ConfigError("training needs at least one shape");
  const auto data = training_samples(shapes, opt.patch_size, opt.patches_per_shape, opt.train.seed);

  TrainOutcome out{net::NetworkParams::initialize(opt.network, opt.train.seed), {}, {}};
  if (opt.resume) {
    auto loaded = net::load_weights(*opt.resume);
    if (!loaded.optimizer) throw DataError(opt.resume->string() + ": no optimizer state to resume from");
    out.params = std::move(loaded.params);
    out.state = std::move(*loaded.optimizer);
  }

  net::TrainConfig cfg = opt.train;
  const std::size_t chunk = opt.checkpoint_every ? opt.checkpoint_every : std::max<std::size_t>(cfg.steps, 1);
  std::size_t remaining = cfg.steps;
  do {
    cfg.steps = std::min(chunk, remaining);
    auto r = net::train(out.params, data, cfg, out.state);
    out.losses.insert(out.losses.end(), r.losses.begin(), r.losses.end());
    remaining -= cfg.steps;
    net::save_weights(opt.output, out.params, &out.state);
    if (!r.losses.empty())
      log << "step " << out.state.step << " loss " << r.losses.back() << " -> " << opt.output.string() << "\n";
  } while (remaining > 0);
  return out;
}

// ---------------------------------------------------------------------------
// synth

/// Sphere or plane test cloud with exact normals.
inline PointCloud synthetic_cloud(const std::string& shape, std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synth"));
  std::vector<Vec3> pos(n), nrm(n);
  if (shape == "sphere") {
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 v;
      do v = {normal01(rng), normal01(rng), normal01(rng)};
      while (norm(v) < 1e-6);
      pos[i] = nrm[i] = normalized(v);
    }
  } else if (shape == "plane") {
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), 0.0};
      nrm[i] = {0.0, 0.0, 1.0};
    }
  } else {
    throw ConfigError("unknown synthetic shape '" + shape + "' (expected sphere or plane)");
  }
  return PointCloud(std::move(pos), std::move(nrm));
}

inline void run_synth(const std::string& shape, std::size_t n, std::uint64_t seed, const fs::path& xyz,
                      const fs::path& normals) {
  const PointCloud cloud = synthetic_cloud(shape, n, seed);
  io::write_vectors(xyz, cloud.positions());
  io::write_vectors(normals, cloud.normals());
}

}  // namespace patchstitch::cli

#endif  // PATCHSTITCH_TOOLS_COMMANDS_HPP
