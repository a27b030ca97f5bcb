// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Learnable tensors of the patch network, addressed by name.
//
//   qst.*        quaternion spatial transformer: per-point 3->64->128 MLP,
//                max-pool, 128->64->4 head
//   edge0.*      first edge convolution, theta / theta_bar: 3 x 64
//   edge{1,2,3}.* residual edge convolutions, 64 x 64
//   attn.*       phi / rho / alpha projections 192 x 192 (+bias), split into
//                n_heads column blocks; out projection W 192 x 192
//   expert{1,2,3}.*, gate.*
//                192 -> 64 -> 32 -> 3 stacks with batch norm after the two
//                hidden layers (hidden linears carry no bias, batch norm
//                subsumes it)
//
// Matrices are stored input-major ([in, out]) and applied as x * W.

#ifndef PATCHSTITCH_PATCHNET_PARAMS_HPP
#define PATCHSTITCH_PATCHNET_PARAMS_HPP

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/patchnet/tensor.hpp"
#include "patchstitch/random.hpp"

namespace patchstitch::net {

enum class AttentionScale : std::uint8_t {
  kPatchSize = 0,  // divide scores by sqrt(K)
  kHeadDim = 1,    // divide scores by sqrt(192 / n_heads)
};

struct NetworkConfig {
  std::size_t n_heads = 8;
  std::size_t k_graph = 20;
  AttentionScale attention_scale = AttentionScale::kPatchSize;
  double dropout = 0.3;
  double leaky_slope = 0.2;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  std::size_t qst_width1 = 64;
  std::size_t qst_width2 = 128;
  std::size_t qst_hidden = 64;

  static constexpr std::size_t kEdgeWidth = 64;
  static constexpr std::size_t kFeatureWidth = 3 * kEdgeWidth;  // 192
  static constexpr std::size_t kHidden1 = 64;
  static constexpr std::size_t kHidden2 = 32;
  static constexpr std::size_t kBranches = 3;

  void validate() const {
    if (n_heads == 0 || kFeatureWidth % n_heads != 0)
      throw ConfigError("attention head count must divide " + std::to_string(kFeatureWidth));
    if (k_graph == 0) throw ConfigError("k_graph must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  }

  std::size_t head_dim() const { return kFeatureWidth / n_heads; }
};

class NetworkParams {
 public:
  NetworkConfig config;

  Tensor& operator[](std::string_view name) { return tensors_.at(lookup(name)).second; }
  const Tensor& operator[](std::string_view name) const { return tensors_.at(lookup(name)).second; }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  Tensor& add(std::string name, std::vector<std::size_t> shape, double fill = 0.0) {
    if (contains(name)) throw ConfigError("duplicate tensor " + name);
    index_.emplace(name, tensors_.size());
    tensors_.emplace_back(std::move(name), Tensor(std::move(shape), fill));
    return tensors_.back().second;
  }

  /// All tensors in creation order.
  std::vector<std::pair<std::string, Tensor>>& tensors() { return tensors_; }
  const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }

  /// Running batch-norm statistics are state, not learnable parameters.
  static bool is_buffer(std::string_view name) {
    return name.ends_with(".running_mean") || name.ends_with(".running_var");
  }

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_)
      if (!is_buffer(name)) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : tensors_) t.zero_grad();
  }

  /// Every tensor with zero-filled values; layer shapes follow `cfg`.
  static NetworkParams layout(const NetworkConfig& cfg) {
    cfg.validate();
    NetworkParams p;
    p.config = cfg;
    const auto E = NetworkConfig::kEdgeWidth, F = NetworkConfig::kFeatureWidth;

    p.add("qst.conv1.weight", {3, cfg.qst_width1});
    p.add("qst.conv1.bias", {cfg.qst_width1});
    p.add("qst.conv2.weight", {cfg.qst_width1, cfg.qst_width2});
    p.add("qst.conv2.bias", {cfg.qst_width2});
    p.add("qst.fc1.weight", {cfg.qst_width2, cfg.qst_hidden});
    p.add("qst.fc1.bias", {cfg.qst_hidden});
    p.add("qst.fc2.weight", {cfg.qst_hidden, 4});
    p.add("qst.fc2.bias", {4});

    for (int l = 0; l < 4; ++l) {
      const std::size_t in = l == 0 ? 3 : E;
      const std::string prefix = "edge" + std::to_string(l);
      p.add(prefix + ".theta", {in, E});
      p.add(prefix + ".theta_bar", {in, E});
    }

    for (const char* proj : {"phi", "rho", "alpha"}) {
      p.add(std::string("attn.") + proj + ".weight", {F, F});
      p.add(std::string("attn.") + proj + ".bias", {F});
    }
    p.add("attn.out.weight", {F, F});

    for (const std::string& stack : stack_names()) {
      p.add(stack + ".fc1.weight", {F, NetworkConfig::kHidden1});
      add_batch_norm(p, stack + ".bn1", NetworkConfig::kHidden1);
      p.add(stack + ".fc2.weight", {NetworkConfig::kHidden1, NetworkConfig::kHidden2});
      add_batch_norm(p, stack + ".bn2", NetworkConfig::kHidden2);
      p.add(stack + ".fc3.weight", {NetworkConfig::kHidden2, 3});
      p.add(stack + ".fc3.bias", {3});
    }
    return p;
  }

  /// Seeded initialization: weights uniform in +-sqrt(6 / fan_in), biases
  /// zero, batch-norm gamma one, and a QST head that starts at the identity
  /// quaternion (zero weights, bias (1, 0, 0, 0)).
  static NetworkParams initialize(const NetworkConfig& cfg, std::uint64_t seed) {
    NetworkParams p = layout(cfg);
    Rng rng(derive_seed(seed, "init"));
    for (auto& [name, t] : p.tensors_) {
      if (name.ends_with(".weight") || name.ends_with(".theta") || name.ends_with(".theta_bar")) {
        if (name == "qst.fc2.weight") continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(t.shape[0]));
        for (auto& v : t.data) v = uniform(rng, -bound, bound);
      } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
        std::fill(t.data.begin(), t.data.end(), 1.0);
      }
    }
    p["qst.fc2.bias"].data = {1.0, 0.0, 0.0, 0.0};
    return p;
  }

  static std::vector<std::string> stack_names() { return {"expert1", "expert2", "expert3", "gate"}; }

 private:
  static void add_batch_norm(NetworkParams& p, const std::string& prefix, std::size_t width) {
    p.add(prefix + ".gamma", {width}, 1.0);
    p.add(prefix + ".beta", {width});
    p.add(prefix + ".running_mean", {width});
    p.add(prefix + ".running_var", {width}, 1.0);
  }

  std::size_t lookup(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown network tensor " + std::string(name));
    return it->second;
  }

  std::vector<std::pair<std::string, Tensor>> tensors_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_PARAMS_HPP
