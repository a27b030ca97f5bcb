// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_PATCHNET_TRAIN_HPP
#define PATCHSTITCH_PATCHNET_TRAIN_HPP

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/vec3.hpp"
#include "patchstitch/patchnet/network.hpp"
#include "patchstitch/random.hpp"

namespace patchstitch::net {

/// One normalized patch with its ground-truth member normals.
struct TrainingSample {
  Matrix coords;   // K x 3
  Matrix normals;  // K x 3, unit
};

struct TrainConfig {
  std::size_t batch_size = 48;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  /// Called after every step with (step index, training loss).
  std::function<void(std::size_t, double)> on_step;
};

/// Adam moments per learnable tensor plus the number of steps taken.
struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

struct TrainResult {
  std::vector<double> losses;  // one per step, training mode
};

/// Rows of the batch at `step`: all samples if they fit, else a seeded draw
/// without replacement.
inline std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                              std::size_t step) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= batch_size) return idx;
  Rng rng(derive_seed(seed, "batch", step));
  for (std::size_t i = 0; i < batch_size; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(batch_size);
  return idx;
}

/// One Adam update of every learnable tensor from its accumulated gradient.
inline void adam_update(NetworkParams& params, AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, tensor] : params.tensors()) {
    if (NetworkParams::is_buffer(name)) continue;
    if (tensor.grad.size() != tensor.data.size()) tensor.zero_grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    m.resize(tensor.size(), 0.0);
    v.resize(tensor.size(), 0.0);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double g = tensor.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      tensor.data[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

inline Matrix stack_normals(std::span<const TrainingSample> data, std::span<const std::size_t> rows) {
  Eigen::Index total = 0;
  for (auto r : rows) total += data[r].normals.rows();
  Matrix gt(total, 3);
  Eigen::Index at = 0;
  for (auto r : rows) {
    gt.middleRows(at, data[r].normals.rows()) = data[r].normals;
    at += data[r].normals.rows();
  }
  return gt;
}

/// Continues training `params` from `state` for cfg.steps steps. Every step
/// draws its batch and dropout masks from (seed, step), so a resumed run
/// matches an uninterrupted one.
inline TrainResult train(NetworkParams& params, std::span<const TrainingSample> data, const TrainConfig& cfg,
                         AdamState& state) {
  if (data.empty()) throw ConfigError("training needs at least one sample");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  for (const auto& s : data)
    if (s.coords.rows() != s.normals.rows() || s.coords.cols() != 3 || s.normals.cols() != 3)
      throw ConfigError("training sample coordinates and normals must both be K x 3");

  TrainResult result;
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    const std::size_t step = state.step;
    const auto rows = batch_indices(data.size(), cfg.batch_size, cfg.seed, step);
    std::vector<Matrix> coords;
    for (auto r : rows) coords.push_back(data[r].coords);

    params.zero_grad();
    Tape tape;
    ParamBinder binder(tape, params, true);
    ForwardOptions opt;
    opt.training = true;
    opt.update_running_stats = true;
    opt.dropout_seed = derive_seed(cfg.seed, "dropout", step);
    const BatchTrace trace = forward_batch(tape, binder, coords, opt);
    const Var loss = batch_loss(tape, trace, stack_normals(data, rows));
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value))
      throw NumericError("training diverged at step " + std::to_string(step) + " (loss is not finite)");
    tape.backward(loss);
    adam_update(params, state, cfg);
    result.losses.push_back(value);
    if (cfg.on_step) cfg.on_step(step, value);
  }
  return result;
}

/// Fresh seeded parameters trained from scratch.
inline NetworkParams train(std::span<const TrainingSample> data, const NetworkConfig& net_cfg,
                           const TrainConfig& cfg, TrainResult* result = nullptr) {
  NetworkParams params = NetworkParams::initialize(net_cfg, cfg.seed);
  AdamState state;
  auto r = train(params, data, cfg, state);
  if (result) *result = std::move(r);
  return params;
}

/// Mean loss over `data` in inference mode, one patch at a time.
inline double evaluate_loss(const NetworkParams& params, std::span<const TrainingSample> data) {
  double total = 0.0;
  Eigen::Index rows = 0;
  for (const auto& s : data) {
    Tape tape;
    ParamBinder binder(tape, params);
    const Matrix batch[1] = {s.coords};
    const auto trace = forward_batch(tape, binder, batch);
    total += tape.value(batch_loss(tape, trace, s.normals))(0, 0) * static_cast<double>(s.coords.rows());
    rows += s.coords.rows();
  }
  return total / static_cast<double>(rows);
}

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_TRAIN_HPP
