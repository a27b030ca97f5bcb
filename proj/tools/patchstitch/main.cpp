// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace patchstitch;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUnexpected = 1, kConfig = 2, kData = 3, kNumeric = 4 };

void add_run_options(CLI::App& cmd, cli::RunConfig& cfg, std::string& backend) {
  cmd.add_option("--patch-size", cfg.patch_size, "Points per patch (K)")->capture_default_str();
  cmd.add_option("--patch-count", cfg.patch_count, "Number of patches (M); 0 derives it from --overlap")
      ->capture_default_str();
  cmd.add_option("--overlap", cfg.overlap, "Target K*M/N when --patch-count is 0")->capture_default_str();
  cmd.add_option("--seed", cfg.seed, "Run seed; 0 starts sampling at the point nearest the centroid")
      ->capture_default_str();
  cmd.add_option("--backend", backend, "Patch estimator")->check(CLI::IsMember({"pca", "jet", "net"}))
      ->capture_default_str();
  cmd.add_option("--weights", cfg.weights, "STNW weights for the net backend");
  cmd.add_option("--sigma-ratio", cfg.sigma_ratio, "Distance weight sigma as a fraction of patch radius")
      ->capture_default_str();
  cmd.add_option("--k-graph", cfg.k_graph, "Neighbours in the network's feature graphs");
  cmd.add_flag("--naive-stitch", cfg.naive_stitch, "Stitch with the index-free reference scan");
}

std::vector<std::size_t> parse_counts(const std::vector<std::string>& items) {
  std::vector<std::size_t> out;
  for (const auto& s : items) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || v == 0) throw ConfigError("expected a positive count, got '" + s + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point cloud normal estimation by stitching overlapping patch predictions"};
  app.require_subcommand(1);

  // estimate
  cli::RunConfig est;
  std::string est_backend = "jet";
  auto* estimate = app.add_subcommand("estimate", "Estimate normals for one cloud");
  estimate->add_option("--input", est.input, "Point file (.xyz)")->required();
  estimate->add_option("--normals", est.normals, "Reference normals for evaluation");
  estimate->add_option("--subset", est.subset, "Evaluation subset (.pidx)");
  estimate->add_option("--output", est.output, "Estimated normals (.normals)");
  estimate->add_option("--report", est.report, "Metrics report (JSON)");
  estimate->add_option("--heatmap", est.heatmap, "Error heatmap (ASCII PLY)");
  add_run_options(*estimate, est, est_backend);

  // bench
  cli::BenchOptions bench_opt;
  std::string bench_backend = "jet";
  std::vector<std::string> bench_inputs, bench_sizes{"256"}, bench_counts;
  std::optional<fs::path> bench_dataset, bench_split, bench_json;
  std::size_t bench_sphere = 0;
  auto* bench = app.add_subcommand("bench", "Time the pipeline over sampling configurations");
  bench->add_option("--input", bench_inputs, "Point files (.xyz, with .normals/.pidx alongside if present)");
  bench->add_option("--dataset", bench_dataset, "Dataset directory (with --split)");
  bench->add_option("--split", bench_split, "File listing shape names");
  bench->add_option("--sphere", bench_sphere, "Benchmark a synthetic unit sphere of this many points");
  bench->add_option("--patch-size", bench_sizes, "Patch sizes K")->delimiter(',');
  bench->add_option("--patch-count", bench_counts, "Patch counts M; omitted derives M from --overlap")->delimiter(',');
  bench->add_option("--overlap", bench_opt.overlap)->capture_default_str();
  bench->add_option("--seed", bench_opt.seed)->capture_default_str();
  bench->add_option("--backend", bench_backend)->check(CLI::IsMember({"pca", "jet", "net"}))->capture_default_str();
  bench->add_option("--weights", bench_opt.weights);
  bench->add_option("--sigma-ratio", bench_opt.sigma_ratio)->capture_default_str();
  bench->add_option("--k-graph", bench_opt.k_graph);
  bench->add_option("--runs", bench_opt.runs, "Timed runs after one warm-up (>= 3)")->capture_default_str();
  bench->add_flag("--naive-stitch", bench_opt.naive_stitch, "Also time the index-free stitch and report the speedup");
  bench->add_option("--json", bench_json, "Machine-readable records");

  // heatmap
  fs::path hm_xyz, hm_pred, hm_gt, hm_out;
  auto* heatmap = app.add_subcommand("heatmap", "Colour points by unoriented normal error");
  heatmap->add_option("--input", hm_xyz, "Point file (.xyz)")->required();
  heatmap->add_option("--pred", hm_pred, "Estimated normals")->required();
  heatmap->add_option("--gt", hm_gt, "Reference normals")->required();
  heatmap->add_option("--output", hm_out, "PLY file")->required();

  // train
  cli::TrainOptions train_opt;
  train_opt.train.steps = 500;
  std::vector<fs::path> train_inputs;
  std::optional<fs::path> train_dataset, train_split;
  auto* train = app.add_subcommand("train", "Train the patch network on shapes with reference normals");
  train->add_option("--input", train_inputs, "Point files (.xyz with .normals alongside)");
  train->add_option("--dataset", train_dataset, "Dataset directory (with --split)");
  train->add_option("--split", train_split, "File listing shape names");
  train->add_option("--patch-size", train_opt.patch_size)->capture_default_str();
  train->add_option("--patches-per-shape", train_opt.patches_per_shape)->capture_default_str();
  train->add_option("--steps", train_opt.train.steps, "Optimizer steps to run (added to a resumed run)")
      ->capture_default_str();
  train->add_option("--batch-size", train_opt.train.batch_size)->capture_default_str();
  train->add_option("--lr", train_opt.train.learning_rate)->capture_default_str();
  train->add_option("--seed", train_opt.train.seed)->capture_default_str();
  train->add_option("--k-graph", train_opt.network.k_graph)->capture_default_str();
  train->add_option("--heads", train_opt.network.n_heads)->capture_default_str();
  train->add_option("--resume", train_opt.resume, "Checkpoint to continue from");
  train->add_option("--checkpoint-every", train_opt.checkpoint_every)->capture_default_str();
  train->add_option("--output", train_opt.output, "Checkpoint path (STNW)")->required();

  // synth
  std::string synth_shape = "sphere";
  std::size_t synth_n = 10000;
  std::uint64_t synth_seed = 0;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic cloud with exact normals");
  synth->add_option("--shape", synth_shape)->check(CLI::IsMember({"sphere", "plane"}))->capture_default_str();
  synth->add_option("--points", synth_n)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--output", synth_out, "Output stem; writes <stem>.xyz and <stem>.normals")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  auto load_shapes = [](const std::vector<fs::path>& inputs, const std::optional<fs::path>& dir,
                        const std::optional<fs::path>& split) {
    std::vector<io::Shape> shapes;
    if (dir || split) {
      if (!dir || !split) throw ConfigError("--dataset and --split go together");
      shapes = io::load_dataset(*dir, *split);
    }
    for (const auto& p : inputs) shapes.push_back(io::load_shape(p.parent_path(), p.stem().string()));
    return shapes;
  };

  try {
    if (*estimate) {
      est.backend = cli::parse_backend(est_backend);
      cli::run_estimate(est);
    } else if (*bench) {
      bench_opt.backend = cli::parse_backend(bench_backend);
      bench_opt.patch_sizes = parse_counts(bench_sizes);
      bench_opt.patch_counts = parse_counts(bench_counts);
      std::vector<cli::BenchInput> inputs;
      std::vector<fs::path> paths(bench_inputs.begin(), bench_inputs.end());
      for (auto& s : load_shapes(paths, bench_dataset, bench_split))
        inputs.push_back({s.name, std::move(s.cloud), std::move(s.subset)});
      if (bench_sphere > 0)
        inputs.push_back({"sphere-" + std::to_string(bench_sphere),
                          cli::synthetic_cloud("sphere", bench_sphere, bench_opt.seed), {}});
      const auto records = cli::run_bench(inputs, bench_opt);
      std::cout << cli::bench_table(records);
      if (bench_json) {
        cli::Json arr = cli::Json::array();
        for (const auto& r : records) arr.push_back(cli::to_json(r));
        io::write_file_atomic(*bench_json, arr.dump(2) + "\n");
      }
    } else if (*heatmap) {
      cli::run_heatmap(hm_xyz, hm_pred, hm_gt, hm_out);
    } else if (*train) {
      const auto shapes = load_shapes(train_inputs, train_dataset, train_split);
      cli::run_train(shapes, train_opt);
    } else if (*synth) {
      auto xyz = synth_out, nrm = synth_out;
      xyz += ".xyz";
      nrm += ".normals";
      cli::run_synth(synth_shape, synth_n, synth_seed, xyz, nrm);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kOk;
}
