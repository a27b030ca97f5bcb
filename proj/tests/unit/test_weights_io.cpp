#include <gtest/gtest.h>

#include "patchstitch/geometry/metrics.hpp"
#include "patchstitch/patchnet/train.hpp"
#include "patchstitch/patchnet/weights_io.hpp"
#include "support/net_fixtures.hpp"
#include "support/temp_dir.hpp"

namespace ps = patchstitch;
namespace net = patchstitch::net;

namespace {

net::NetworkConfig odd_config() {
  net::NetworkConfig cfg;
  cfg.n_heads = 4;
  cfg.k_graph = 7;
  cfg.attention_scale = net::AttentionScale::kHeadDim;
  cfg.dropout = 0.25;
  return cfg;
}

}  // namespace

TEST(WeightsIo, RoundTripKeepsConfigAndFloat32Values) {
  const auto params = ps::testing::random_network(odd_config(), 3);
  const auto loaded = net::from_named_tensors(net::decode_weights(net::encode_weights(net::to_named_tensors(params))));
  EXPECT_EQ(loaded.params.config.n_heads, 4u);
  EXPECT_EQ(loaded.params.config.k_graph, 7u);
  EXPECT_EQ(loaded.params.config.attention_scale, net::AttentionScale::kHeadDim);
  EXPECT_FLOAT_EQ(static_cast<float>(loaded.params.config.dropout), 0.25f);
  EXPECT_FALSE(loaded.optimizer.has_value());
  ASSERT_EQ(loaded.params.tensors().size(), params.tensors().size());
  for (std::size_t i = 0; i < params.tensors().size(); ++i) {
    const auto& a = params.tensors()[i].second.data;
    const auto& b = loaded.params.tensors()[i].second.data;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(b[j], static_cast<double>(static_cast<float>(a[j])));
  }
}

TEST(WeightsIo, EncodingIsStableAcrossASecondRoundTrip) {
  const auto params = ps::testing::random_network(odd_config(), 4);
  const auto bytes = net::encode_weights(net::to_named_tensors(params));
  const auto again = net::encode_weights(net::to_named_tensors(net::from_named_tensors(net::decode_weights(bytes)).params));
  EXPECT_EQ(bytes, again);
}

TEST(WeightsIo, FileRoundTripWithOptimizerState) {
  const ps::testing::TempDir dir;
  auto params = net::NetworkParams::initialize(net::NetworkConfig{}, 1);
  net::AdamState state;
  state.step = 12;
  for (const auto& [name, t] : params.tensors()) {
    if (net::NetworkParams::is_buffer(name)) continue;
    state.m[name].assign(t.size(), 0.5);
    state.v[name].assign(t.size(), 0.25);
  }
  net::save_weights(dir / "w.stnw", params, &state);
  const auto loaded = net::load_weights(dir / "w.stnw");
  ASSERT_TRUE(loaded.optimizer.has_value());
  EXPECT_EQ(loaded.optimizer->step, 12u);
  EXPECT_EQ(loaded.optimizer->m.at("edge0.theta"), state.m.at("edge0.theta"));
  EXPECT_EQ(loaded.optimizer->v.at("attn.out.weight"), state.v.at("attn.out.weight"));
  EXPECT_FALSE(std::filesystem::exists(dir / "w.stnw.tmp"));
}

TEST(WeightsIo, BadMagicIsADataError) {
  auto bytes = net::encode_weights(net::to_named_tensors(net::NetworkParams::initialize(net::NetworkConfig{}, 1)));
  bytes[0] = 'X';
  EXPECT_THROW(net::decode_weights(bytes), ps::DataError);
}

TEST(WeightsIo, TruncationAndTrailingBytesAreDataErrors) {
  const auto bytes = net::encode_weights(net::to_named_tensors(net::NetworkParams::initialize(net::NetworkConfig{}, 1)));
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<char> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(net::decode_weights(part), ps::DataError) << cut;
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(net::decode_weights(extra), ps::DataError);
}

TEST(WeightsIo, MissingOrMisshapenTensorIsADataError) {
  const auto params = net::NetworkParams::initialize(net::NetworkConfig{}, 1);
  auto tensors = net::to_named_tensors(params);
  auto missing = tensors;
  std::erase_if(missing, [](const net::NamedTensor& t) { return t.name == "attn.rho.weight"; });
  EXPECT_THROW(net::from_named_tensors(missing), ps::DataError);
  auto misshapen = tensors;
  for (auto& t : misshapen)
    if (t.name == "gate.fc3.bias") {
      t.dims = {2};
      t.values.resize(2);
    }
  EXPECT_THROW(net::from_named_tensors(misshapen), ps::DataError);
}

TEST(WeightsIo, MissingFileIsADataError) {
  EXPECT_THROW(net::load_weights("/nonexistent/dir/w.stnw"), ps::DataError);
}

TEST(WeightsIo, LoadedNetworkPredictsLikeTheFloat32Original) {
  const auto params = ps::testing::random_network(net::NetworkConfig{}, 6);
  const auto loaded = net::from_named_tensors(net::decode_weights(net::encode_weights(net::to_named_tensors(params)))).params;
  ps::Rng rng(1);
  const auto coords = ps::testing::random_matrix(64, 3, rng);
  const auto a = net::predict(coords, params), b = net::predict(coords, loaded);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(ps::angle_error_unoriented(a.normals[i], b.normals[i]), 0.5);
}
