// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Patch-level normal network.
//
//   coords (K x 3) --QST--> rotated = coords * R
//   F0 = EdgeConv(rotated)                  graph: kNN of rotated points
//   F{l+1} = EdgeConv(F{l}) + F{l}, l=0..2  graph: kNN in feature space of F{l}
//   F = [F1 | F2 | F3]                      K x 192
//   F_new = [head_1 | ... | head_n] * W,    head_i = softmax(Q_i K_i^T / s) V_i
//   N_j = expert_j(F_new), w = softmax(gate(F_new))
//
// EdgeConv edge term is ReLU(theta * (x_j - x_i) + theta_bar * x_i), max over
// the neighbours of i (self included). The attention divisor s is sqrt(K) by
// default. Branch outputs are expressed in the rotated (canonical) frame; the
// training loss and the patch prediction use them normalized and rotated back
// by R^T.

#ifndef PATCHSTITCH_PATCHNET_NETWORK_HPP
#define PATCHSTITCH_PATCHNET_NETWORK_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/vec3.hpp"
#include "patchstitch/patchnet/autograd.hpp"
#include "patchstitch/patchnet/params.hpp"
#include "patchstitch/prediction.hpp"

namespace patchstitch::net {

struct ForwardOptions {
  bool training = false;            // batch statistics and dropout
  bool update_running_stats = false;
  bool dropout = true;              // only consulted in training mode
  std::uint64_t dropout_seed = 0;
};

/// Resolves parameter names to tape leaves, once per tape.
/// Built from a const NetworkParams the leaves are constants (inference).
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const NetworkParams& params) : tape_(tape), params_(params) {}
  ParamBinder(Tape& tape, NetworkParams& params, bool track_grad)
      : tape_(tape), params_(params), mutable_(&params), track_(track_grad) {}

  Var operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Var v = track_ ? tape_.parameter((*mutable_)[name]) : tape_.constant(params_[name]);
    cache_.emplace(name, v);
    return v;
  }

  const NetworkParams& params() const { return params_; }
  NetworkParams* mutable_params() { return mutable_; }
  const NetworkConfig& config() const { return params_.config; }

 private:
  Tape& tape_;
  const NetworkParams& params_;
  NetworkParams* mutable_ = nullptr;
  bool track_ = false;
  std::map<std::string, Var> cache_;
};

/// Row-wise kNN graph (rows x k ids, self included), ordered by
/// (squared distance, id).
inline std::vector<std::uint32_t> knn_graph(const Matrix& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  k = std::min(k, n);
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  const Matrix gram = x * x.transpose();
  std::vector<std::uint32_t> graph(n * k);
  std::vector<std::pair<double, std::uint32_t>> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double d2 = i == j ? 0.0 : std::max(0.0, sq(ii) + sq(jj) - 2.0 * gram(ii, jj));
      row[j] = {d2, static_cast<std::uint32_t>(j)};
    }
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    for (std::size_t q = 0; q < k; ++q) graph[i * k + q] = row[q].second;
  }
  return graph;
}

/// Quaternion spatial transformer; returns the 3x3 rotation node.
inline Var qst_rotation(Tape& t, ParamBinder& p, Var coords, bool* fallback = nullptr) {
  Var h = relu(t, add_row(t, matmul(t, coords, p("qst.conv1.weight")), p("qst.conv1.bias")));
  h = relu(t, add_row(t, matmul(t, h, p("qst.conv2.weight")), p("qst.conv2.bias")));
  Var g = max_over_rows(t, h);
  g = relu(t, add_row(t, matmul(t, g, p("qst.fc1.weight")), p("qst.fc1.bias")));
  Var q = add_row(t, matmul(t, g, p("qst.fc2.weight")), p("qst.fc2.bias"));
  bool fell_back = false;
  Var r = quaternion_to_rotation(t, q, &fell_back);
  if (fell_back) std::clog << "patchnet: degenerate QST quaternion, using identity rotation\n";
  if (fallback) *fallback = fell_back;
  return r;
}

/// One edge convolution; `residual` adds the input back (needs equal widths).
inline Var edge_conv(Tape& t, Var x, Var theta, Var theta_bar, std::size_t k_graph, bool residual) {
  const auto k = std::min<std::size_t>(k_graph, static_cast<std::size_t>(t.value(x).rows()));
  auto graph = knn_graph(t.value(x), k);
  // theta (x_j - x_i) + theta_bar x_i = a_j + b_i
  Var a = matmul(t, x, theta);
  Var b = sub(t, matmul(t, x, theta_bar), a);
  Var out = edge_max_relu(t, a, b, std::move(graph), k);
  return residual ? add(t, out, x) : out;
}

inline double attention_divisor(const NetworkConfig& cfg, std::size_t patch_size) {
  return cfg.attention_scale == AttentionScale::kPatchSize ? std::sqrt(static_cast<double>(patch_size))
                                                           : std::sqrt(static_cast<double>(cfg.head_dim()));
}

/// Multi-head self-attention over the points of one patch.
inline Var attention(Tape& t, ParamBinder& p, Var f, std::vector<Var>* maps = nullptr) {
  const auto& cfg = p.config();
  const auto k = static_cast<std::size_t>(t.value(f).rows());
  const auto d = static_cast<Eigen::Index>(cfg.head_dim());
  Var q = add_row(t, matmul(t, f, p("attn.phi.weight")), p("attn.phi.bias"));
  Var kk = add_row(t, matmul(t, f, p("attn.rho.weight")), p("attn.rho.bias"));
  Var v = add_row(t, matmul(t, f, p("attn.alpha.weight")), p("attn.alpha.bias"));
  const double inv = 1.0 / attention_divisor(cfg, k);
  std::vector<Var> heads;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * d;
    Var scores = scale(t, matmul(t, slice_cols(t, q, c0, d), slice_cols(t, kk, c0, d), true), inv);
    Var m = softmax_rows(t, scores);
    if (maps) maps->push_back(m);
    heads.push_back(matmul(t, m, slice_cols(t, v, c0, d)));
  }
  return matmul(t, concat_cols(t, heads), p("attn.out.weight"));
}

/// 192 -> 64 -> 32 -> 3 stack; dropout follows each hidden layer when `with_dropout`.
inline Var head_stack(Tape& t, ParamBinder& p, const std::string& prefix, Var x, bool with_dropout,
                      const ForwardOptions& opt, Rng& rng) {
  const auto& cfg = p.config();
  auto bn = [&](Var h, const std::string& name) {
    BatchNormSpec spec;
    spec.running_mean = &p.params()[name + ".running_mean"];
    spec.running_var = &p.params()[name + ".running_var"];
    if (opt.training && opt.update_running_stats && p.mutable_params()) {
      spec.update_mean = &(*p.mutable_params())[name + ".running_mean"];
      spec.update_var = &(*p.mutable_params())[name + ".running_var"];
    }
    spec.training = opt.training;
    spec.momentum = cfg.bn_momentum;
    spec.eps = cfg.bn_eps;
    return batch_norm(t, h, p(name + ".gamma"), p(name + ".beta"), spec);
  };
  const bool drop = with_dropout && opt.training && opt.dropout;
  Var h = leaky_relu(t, bn(matmul(t, x, p(prefix + ".fc1.weight")), prefix + ".bn1"), cfg.leaky_slope);
  if (drop) h = dropout(t, h, cfg.dropout, rng);
  h = leaky_relu(t, bn(matmul(t, h, p(prefix + ".fc2.weight")), prefix + ".bn2"), cfg.leaky_slope);
  if (drop) h = dropout(t, h, cfg.dropout, rng);
  return add_row(t, matmul(t, h, p(prefix + ".fc3.weight")), p(prefix + ".fc3.bias"));
}

struct PatchTrace {
  Var coords;
  Var rotation;
  Var rotated;
  std::array<Var, 4> edge;  // F0..F3
  Var features;             // [F1 | F2 | F3]
  Var aggregated;           // F_new
  std::vector<Var> attention;
  bool qst_fallback = false;
};

struct BatchTrace {
  std::vector<PatchTrace> patches;
  std::vector<Eigen::Index> row_offsets;   // patch b occupies rows [offsets[b], offsets[b+1])
  std::array<Var, 3> branch_raw;           // canonical frame, unnormalized
  Var gate;                                // rows on the simplex
  std::array<Var, 3> branch_normals;       // unit, cloud frame
};

inline PatchTrace forward_features(Tape& t, ParamBinder& p, const Matrix& coords) {
  if (coords.rows() < 1 || coords.cols() != 3) throw ConfigError("patch coordinates must be K x 3 with K >= 1");
  const auto kg = p.config().k_graph;
  PatchTrace tr;
  tr.coords = t.constant(coords);
  tr.rotation = qst_rotation(t, p, tr.coords, &tr.qst_fallback);
  tr.rotated = matmul(t, tr.coords, tr.rotation);
  tr.edge[0] = edge_conv(t, tr.rotated, p("edge0.theta"), p("edge0.theta_bar"), kg, false);
  for (int l = 1; l < 4; ++l) {
    const std::string prefix = "edge" + std::to_string(l);
    tr.edge[static_cast<std::size_t>(l)] =
        edge_conv(t, tr.edge[static_cast<std::size_t>(l - 1)], p(prefix + ".theta"), p(prefix + ".theta_bar"), kg, true);
  }
  const std::array<Var, 3> parts = {tr.edge[1], tr.edge[2], tr.edge[3]};
  tr.features = concat_cols(t, parts);
  tr.aggregated = attention(t, p, tr.features, &tr.attention);
  return tr;
}

/// Full forward pass over a batch of patches. Batch norm statistics span all
/// rows of the batch.
inline BatchTrace forward_batch(Tape& t, ParamBinder& p, std::span<const Matrix> patches,
                                const ForwardOptions& opt = {}) {
  if (patches.empty()) throw ConfigError("forward pass needs at least one patch");
  BatchTrace out;
  std::vector<Var> aggregated;
  out.row_offsets.push_back(0);
  for (const auto& coords : patches) {
    out.patches.push_back(forward_features(t, p, coords));
    aggregated.push_back(out.patches.back().aggregated);
    out.row_offsets.push_back(out.row_offsets.back() + coords.rows());
  }
  Var f = aggregated.size() == 1 ? aggregated[0] : concat_rows(t, aggregated);

  Rng rng(opt.dropout_seed);
  for (std::size_t j = 0; j < 3; ++j)
    out.branch_raw[j] = head_stack(t, p, "expert" + std::to_string(j + 1), f, true, opt, rng);
  out.gate = softmax_rows(t, head_stack(t, p, "gate", f, false, opt, rng));

  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<Var> parts;
    for (std::size_t b = 0; b < patches.size(); ++b) {
      const Eigen::Index r0 = out.row_offsets[b], rn = out.row_offsets[b + 1] - r0;
      Var rows = patches.size() == 1 ? out.branch_raw[j] : slice_rows(t, out.branch_raw[j], r0, rn);
      parts.push_back(matmul(t, rows, out.patches[b].rotation, true));
    }
    Var cloud = parts.size() == 1 ? parts[0] : concat_rows(t, parts);
    out.branch_normals[j] = normalize_rows(t, cloud);
  }
  return out;
}

/// Multi-branch loss of a traced batch against K x 3 (stacked) ground truth.
inline Var batch_loss(Tape& t, const BatchTrace& trace, const Matrix& gt) {
  return expert_loss(t, trace.gate, trace.branch_normals, gt);
}

// ---------------------------------------------------------------------------
// Value-level entry points (inference mode, no gradient tracking).

inline Matrix to_matrix(std::span<const Vec3> pts) {
  Matrix m(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) << pts[i].x, pts[i].y, pts[i].z;
  return m;
}

inline Mat3 to_mat3(const Matrix& m) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = m(i, j);
  return r;
}

struct QstResult {
  Matrix rotated;  // coords * R
  Mat3 rotation;
  bool fallback = false;
};

inline QstResult qst_forward(const Matrix& coords, const NetworkParams& params) {
  if (coords.rows() < 1) throw ConfigError("QST needs at least one point");
  Tape t;
  ParamBinder p(t, params);
  QstResult out;
  Var c = t.constant(coords);
  Var r = qst_rotation(t, p, c, &out.fallback);
  out.rotated = coords * t.value(r);
  out.rotation = to_mat3(t.value(r));
  return out;
}

inline Matrix edge_conv_first(const Matrix& rotated, const NetworkParams& params, std::size_t k_graph) {
  if (k_graph > static_cast<std::size_t>(rotated.rows())) throw ConfigError("k_graph exceeds patch size");
  Tape t;
  ParamBinder p(t, params);
  return t.value(edge_conv(t, t.constant(rotated), p("edge0.theta"), p("edge0.theta_bar"), k_graph, false));
}

/// Residual edge convolution `layer` in {1, 2, 3}.
inline Matrix edge_conv_residual(const Matrix& features, const NetworkParams& params, int layer,
                                 std::size_t k_graph) {
  if (layer < 1 || layer > 3) throw ConfigError("residual edge layers are 1..3");
  if (k_graph > static_cast<std::size_t>(features.rows())) throw ConfigError("k_graph exceeds patch size");
  Tape t;
  ParamBinder p(t, params);
  const std::string prefix = "edge" + std::to_string(layer);
  return t.value(edge_conv(t, t.constant(features), p(prefix + ".theta"), p(prefix + ".theta_bar"), k_graph, true));
}

inline Matrix concat_features(const Matrix& f1, const Matrix& f2, const Matrix& f3) {
  const auto w = static_cast<Eigen::Index>(NetworkConfig::kEdgeWidth);
  if (f1.cols() != w || f2.cols() != w || f3.cols() != w || f1.rows() != f2.rows() || f2.rows() != f3.rows())
    throw ConfigError("concat_features expects three K x 64 blocks");
  Matrix out(f1.rows(), 3 * w);
  out << f1, f2, f3;
  return out;
}

inline Matrix attention_aggregate(const Matrix& features, const NetworkParams& params,
                                  std::vector<Matrix>* maps = nullptr) {
  Tape t;
  ParamBinder p(t, params);
  std::vector<Var> m;
  Matrix out = t.value(attention(t, p, t.constant(features), &m));
  if (maps)
    for (Var v : m) maps->push_back(t.value(v));
  return out;
}

/// Selection rule at test time: the branch with the largest gate weight,
/// lowest branch on ties.
inline PatchPrediction select_branches(const std::array<Matrix, 3>& normals, const Matrix& weights) {
  PatchPrediction pred;
  const auto k = static_cast<std::size_t>(weights.rows());
  pred.normals.resize(k);
  pred.expert_weights.resize(k);
  pred.w_pred.resize(k);
  pred.chosen_branch.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    int best = 0;
    for (int j = 1; j < 3; ++j)
      if (weights(ii, j) > weights(ii, best)) best = j;
    const auto& n = normals[static_cast<std::size_t>(best)];
    Vec3 v{n(ii, 0), n(ii, 1), n(ii, 2)};
    const double len = norm(v);
    pred.normals[i] = len > 0.0 ? v / len : Vec3{0.0, 0.0, 1.0};
    pred.expert_weights[i] = {weights(ii, 0), weights(ii, 1), weights(ii, 2)};
    pred.w_pred[i] = weights(ii, best);
    pred.chosen_branch[i] = static_cast<std::uint8_t>(best + 1);
  }
  return pred;
}

/// Expert branches and gate on K x 192 aggregated features. Normals stay in
/// the frame of the features (canonical pose).
inline PatchPrediction experts_forward(const Matrix& aggregated, const NetworkParams& params) {
  if (aggregated.cols() != static_cast<Eigen::Index>(NetworkConfig::kFeatureWidth))
    throw ConfigError("experts expect K x 192 features");
  Tape t;
  ParamBinder p(t, params);
  Rng rng(0);
  const ForwardOptions opt;
  Var f = t.constant(aggregated);
  std::array<Matrix, 3> normals;
  for (std::size_t j = 0; j < 3; ++j)
    normals[j] = t.value(head_stack(t, p, "expert" + std::to_string(j + 1), f, true, opt, rng));
  const Matrix w = t.value(softmax_rows(t, head_stack(t, p, "gate", f, false, opt, rng)));
  return select_branches(normals, w);
}

/// Multi-branch loss on plain values; `branches` hold the per-branch
/// predictions N_j used as-is.
inline double expert_loss_value(std::span<const Matrix> branches, const Matrix& weights, const Matrix& gt) {
  Tape t;
  std::vector<Var> b;
  for (const auto& m : branches) b.push_back(t.constant(m));
  return t.value(expert_loss(t, t.constant(weights), b, gt))(0, 0);
}

/// Full inference on one normalized patch: per-member unit normals in the
/// patch (cloud) frame, with gate weights.
inline PatchPrediction predict(const Matrix& coords, const NetworkParams& params) {
  Tape t;
  ParamBinder p(t, params);
  const Matrix batch[1] = {coords};
  const BatchTrace tr = forward_batch(t, p, batch);
  std::array<Matrix, 3> normals;
  for (std::size_t j = 0; j < 3; ++j) normals[j] = t.value(tr.branch_normals[j]);
  return select_branches(normals, t.value(tr.gate));
}

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_NETWORK_HPP
