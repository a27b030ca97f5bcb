#include <gtest/gtest.h>

#include <cmath>

#include "patchstitch/patchnet/network.hpp"
#include "support/net_fixtures.hpp"
#include "support/oracles.hpp"

namespace ps = patchstitch;
namespace net = patchstitch::net;
using ps::testing::max_abs_diff;
using ps::testing::random_matrix;
using ps::testing::to_rows;

namespace {

net::NetworkConfig small_config(std::size_t k_graph = 4, std::size_t heads = 8) {
  net::NetworkConfig cfg;
  cfg.k_graph = k_graph;
  cfg.n_heads = heads;
  return cfg;
}

double det3(const ps::Mat3& r) {
  return r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
         r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
}

}  // namespace

TEST(KnnGraph, SelfFirstAndOrderedByDistanceThenId) {
  net::Matrix x(4, 1);
  x << 0.0, 1.0, -1.0, 3.0;
  const auto g = net::knn_graph(x, 3);
  EXPECT_EQ(std::vector<std::uint32_t>(g.begin(), g.begin() + 3), (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(std::vector<std::uint32_t>(g.begin() + 3, g.begin() + 6), (std::vector<std::uint32_t>{1, 0, 2}));
  EXPECT_EQ(std::vector<std::uint32_t>(g.begin() + 9, g.end()), (std::vector<std::uint32_t>{3, 1, 0}));
}

TEST(Qst, InitialHeadIsTheIdentity) {
  const auto params = net::NetworkParams::initialize(small_config(), 3);
  ps::Rng rng(1);
  const auto coords = random_matrix(16, 3, rng);
  const auto out = net::qst_forward(coords, params);
  EXPECT_FALSE(out.fallback);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(out.rotation[i][j], i == j ? 1.0 : 0.0);
  EXPECT_EQ(out.rotated, coords);
}

TEST(Qst, UnitZQuaternionIsAHalfTurnAboutZ) {
  auto params = net::NetworkParams::initialize(small_config(), 3);
  params["qst.fc2.bias"].data = {0.0, 0.0, 0.0, 1.0};
  ps::Rng rng(2);
  const auto out = net::qst_forward(random_matrix(10, 3, rng), params);
  const double expected[3][3] = {{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(out.rotation[i][j], expected[i][j], 1e-15);
}

TEST(Qst, ZeroQuaternionFallsBackToIdentity) {
  auto params = net::NetworkParams::initialize(small_config(), 3);
  params["qst.fc2.bias"].data = {0.0, 0.0, 0.0, 0.0};
  ps::Rng rng(2);
  const auto out = net::qst_forward(random_matrix(10, 3, rng), params);
  EXPECT_TRUE(out.fallback);
  EXPECT_EQ(out.rotation[1][1], 1.0);
}

TEST(Qst, RandomHeadsGiveProperRotations) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto params = ps::testing::random_network(small_config(), seed);
    ps::Rng rng(seed);
    const auto r = net::qst_forward(random_matrix(16, 3, rng), params).rotation;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += r[k][i] * r[k][j];
        EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
      }
    EXPECT_NEAR(det3(r), 1.0, 1e-12);
  }
}

TEST(EdgeConv, ZeroWeightsGiveZero) {
  auto params = net::NetworkParams::layout(small_config());
  ps::Rng rng(4);
  const auto out = net::edge_conv_first(random_matrix(12, 3, rng), params, 4);
  EXPECT_EQ(out.rows(), 12);
  EXPECT_EQ(out.cols(), 64);
  EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(EdgeConv, OnlyThetaBarGivesPointwiseRelu) {
  // With theta = 0 the edge term no longer depends on the neighbour.
  auto params = net::NetworkParams::layout(small_config());
  ps::Rng rng(5);
  const auto theta_bar = random_matrix(3, 64, rng);
  std::copy(theta_bar.data(), theta_bar.data() + theta_bar.size(), params["edge0.theta_bar"].data.begin());
  const auto x = random_matrix(12, 3, rng);
  const net::Matrix expected = (x * theta_bar).cwiseMax(0.0);
  EXPECT_LT((net::edge_conv_first(x, params, 5) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EdgeConv, MatchesScalarOracle) {
  const auto params = ps::testing::random_network(small_config(3), 7);
  ps::Rng rng(8);
  const auto x = random_matrix(8, 3, rng);
  const auto expected = ps::oracle::edge_conv(to_rows(x), ps::testing::tensor_rows(params["edge0.theta"]),
                                              ps::testing::tensor_rows(params["edge0.theta_bar"]), 3, false);
  EXPECT_LT(max_abs_diff(net::edge_conv_first(x, params, 3), expected), 1e-12);
}

TEST(EdgeConv, ResidualLayerWithZeroWeightsIsIdentity) {
  const auto params = net::NetworkParams::layout(small_config());
  ps::Rng rng(9);
  const auto f = random_matrix(10, 64, rng);
  for (int layer = 1; layer <= 3; ++layer) EXPECT_EQ(net::edge_conv_residual(f, params, layer, 4), f);
}

TEST(EdgeConv, ResidualMatchesScalarOracle) {
  const auto params = ps::testing::random_network(small_config(5), 10);
  ps::Rng rng(11);
  const auto f = random_matrix(9, 64, rng);
  const auto expected = ps::oracle::edge_conv(to_rows(f), ps::testing::tensor_rows(params["edge2.theta"]),
                                              ps::testing::tensor_rows(params["edge2.theta_bar"]), 5, true);
  EXPECT_LT(max_abs_diff(net::edge_conv_residual(f, params, 2, 5), expected), 1e-12);
}

TEST(EdgeConv, SinglePointPatch) {
  const auto params = ps::testing::random_network(small_config(1), 12);
  net::Matrix x(1, 3);
  x << 0.2, -0.4, 0.9;
  const auto expected = ps::oracle::edge_conv(to_rows(x), ps::testing::tensor_rows(params["edge0.theta"]),
                                              ps::testing::tensor_rows(params["edge0.theta_bar"]), 1, false);
  EXPECT_LT(max_abs_diff(net::edge_conv_first(x, params, 1), expected), 1e-12);
  EXPECT_THROW(net::edge_conv_first(x, params, 2), ps::ConfigError);
}

TEST(Concat, StacksBlocksInOrder) {
  ps::Rng rng(13);
  const auto a = random_matrix(5, 64, rng), b = random_matrix(5, 64, rng), c = random_matrix(5, 64, rng);
  const auto f = net::concat_features(a, b, c);
  EXPECT_EQ(f.cols(), 192);
  EXPECT_EQ(f.middleCols(0, 64), a);
  EXPECT_EQ(f.middleCols(64, 64), b);
  EXPECT_EQ(f.middleCols(128, 64), c);
  EXPECT_THROW(net::concat_features(a, b, random_matrix(4, 64, rng)), ps::ConfigError);
}

TEST(Attention, SinglePointAttendsToItself) {
  const auto params = ps::testing::random_network(small_config(), 14);
  ps::Rng rng(15);
  const auto f = random_matrix(1, 192, rng);
  std::vector<net::Matrix> maps;
  const auto out = net::attention_aggregate(f, params, &maps);
  ASSERT_EQ(maps.size(), 8u);
  for (const auto& m : maps) EXPECT_EQ(m(0, 0), 1.0);
  // Output is then V * W_out.
  const auto v = f * Eigen::Map<const net::Matrix>(params["attn.alpha.weight"].data.data(), 192, 192);
  net::Matrix vb = v;
  for (Eigen::Index c = 0; c < 192; ++c) vb(0, c) += params["attn.alpha.bias"].data[static_cast<std::size_t>(c)];
  const net::Matrix expected = vb * Eigen::Map<const net::Matrix>(params["attn.out.weight"].data.data(), 192, 192);
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Attention, ZeroQueryWeightsGiveUniformMaps) {
  auto params = ps::testing::random_network(small_config(), 16);
  std::fill(params["attn.phi.weight"].data.begin(), params["attn.phi.weight"].data.end(), 0.0);
  std::fill(params["attn.phi.bias"].data.begin(), params["attn.phi.bias"].data.end(), 0.0);
  ps::Rng rng(17);
  std::vector<net::Matrix> maps;
  net::attention_aggregate(random_matrix(6, 192, rng), params, &maps);
  for (const auto& m : maps) EXPECT_LT((m.array() - 1.0 / 6.0).abs().maxCoeff(), 1e-15);
}

TEST(Attention, MatchesScalarOracle) {
  for (std::size_t heads : {1u, 2u, 8u}) {
    const auto cfg = small_config(4, heads);
    const auto params = ps::testing::random_network(cfg, 18 + heads);
    ps::Rng rng(19);
    const auto f = random_matrix(6, 192, rng);
    std::vector<net::Matrix> maps;
    std::vector<ps::oracle::Rows> oracle_maps;
    const auto out = net::attention_aggregate(f, params, &maps);
    const auto expected = ps::oracle::attention(to_rows(f), ps::testing::attention_weights(params), heads,
                                                net::attention_divisor(cfg, 6), &oracle_maps);
    EXPECT_LT(max_abs_diff(out, expected), 1e-10) << heads << " heads";
    ASSERT_EQ(maps.size(), heads);
    for (std::size_t h = 0; h < heads; ++h) EXPECT_LT(max_abs_diff(maps[h], oracle_maps[h]), 1e-12);
  }
}

TEST(Attention, HeadDimScaleOption) {
  auto cfg = small_config(4, 2);
  cfg.attention_scale = net::AttentionScale::kHeadDim;
  EXPECT_DOUBLE_EQ(net::attention_divisor(cfg, 100), std::sqrt(96.0));
  EXPECT_DOUBLE_EQ(net::attention_divisor(small_config(4, 2), 100), 10.0);
}

TEST(Attention, RowsAreOnTheSimplex) {
  const auto params = ps::testing::random_network(small_config(), 20);
  ps::Rng rng(21);
  std::vector<net::Matrix> maps;
  net::attention_aggregate(random_matrix(16, 192, rng, -3.0, 3.0), params, &maps);
  for (const auto& m : maps) {
    EXPECT_GE(m.minCoeff(), 0.0);
    EXPECT_LT((m.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(Experts, TiedGateChoosesFirstBranch) {
  auto params = ps::testing::random_network(small_config(), 22);
  std::fill(params["gate.fc3.weight"].data.begin(), params["gate.fc3.weight"].data.end(), 0.0);
  params["gate.fc3.bias"].data = {0.0, 0.0, 0.0};
  ps::Rng rng(23);
  const auto pred = net::experts_forward(random_matrix(5, 192, rng), params);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_EQ(pred.chosen_branch[i], 1);
    EXPECT_NEAR(pred.w_pred[i], 1.0 / 3.0, 1e-15);
  }
}

TEST(Experts, DominantLogitPicksItsBranch) {
  auto params = ps::testing::random_network(small_config(), 24);
  std::fill(params["gate.fc3.weight"].data.begin(), params["gate.fc3.weight"].data.end(), 0.0);
  params["gate.fc3.bias"].data = {0.0, 100.0, 0.0};
  ps::Rng rng(25);
  const auto pred = net::experts_forward(random_matrix(5, 192, rng), params);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_EQ(pred.chosen_branch[i], 2);
    EXPECT_NEAR(pred.w_pred[i], 1.0, 1e-12);
    EXPECT_NEAR(ps::norm(pred.normals[i]), 1.0, 1e-12);
  }
}

TEST(Experts, GateRowsAreOnTheSimplex) {
  const auto params = ps::testing::random_network(small_config(), 26);
  ps::Rng rng(27);
  const auto pred = net::experts_forward(random_matrix(20, 192, rng, -5.0, 5.0), params);
  for (const auto& w : pred.expert_weights) {
    EXPECT_GE(std::min({w[0], w[1], w[2]}), 0.0);
    EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
  }
}

TEST(Loss, ZeroWhenBranchesMatchUpToSign) {
  net::Matrix gt(2, 3), w(2, 3);
  gt << 0, 0, 1, 1, 0, 0;
  w << 0.2, 0.3, 0.5, 1.0, 0.0, 0.0;
  const std::vector<net::Matrix> branches{gt, -gt, gt};
  EXPECT_EQ(net::expert_loss_value(branches, w, gt), 0.0);
}

TEST(Loss, PerpendicularPredictionCostsSqrtTwo) {
  net::Matrix gt(1, 3), w(1, 3), p(1, 3);
  gt << 0, 0, 1;
  p << 1, 0, 0;
  w << 1.0, 0.0, 0.0;
  const std::vector<net::Matrix> branches{p, gt, gt};
  EXPECT_NEAR(net::expert_loss_value(branches, w, gt), std::sqrt(2.0), 1e-15);
  w << 0.5, 0.5, 0.0;
  EXPECT_NEAR(net::expert_loss_value(branches, w, gt), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(Loss, AveragesOverRows) {
  net::Matrix gt(2, 3), w(2, 3), p(2, 3);
  gt << 0, 0, 1, 0, 0, 1;
  p << 1, 0, 0, 0, 0, -1;
  w << 1, 0, 0, 1, 0, 0;
  const std::vector<net::Matrix> branches{p, p, p};
  EXPECT_NEAR(net::expert_loss_value(branches, w, gt), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(Loss, InvariantToGroundTruthSign) {
  ps::Rng rng(28);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = random_matrix(7, 3, rng);
    const std::vector<net::Matrix> branches{random_matrix(7, 3, rng), random_matrix(7, 3, rng), random_matrix(7, 3, rng)};
    net::Matrix w = random_matrix(7, 3, rng, 0.0, 1.0);
    const net::Matrix flipped = -gt;
    EXPECT_EQ(net::expert_loss_value(branches, w, gt), net::expert_loss_value(branches, w, flipped));
  }
}

TEST(Predict, InferenceIsDeterministic) {
  const auto params = ps::testing::random_network(small_config(8), 29);
  ps::Rng rng(30);
  const auto coords = random_matrix(32, 3, rng);
  const auto a = net::predict(coords, params), b = net::predict(coords, params);
  EXPECT_EQ(a.normals, b.normals);
  EXPECT_EQ(a.w_pred, b.w_pred);
  for (const auto& n : a.normals) EXPECT_NEAR(ps::norm(n), 1.0, 1e-12);
}

TEST(Predict, RejectsBadShapes) {
  const auto params = net::NetworkParams::initialize(small_config(), 1);
  EXPECT_THROW(net::predict(net::Matrix(0, 3), params), ps::ConfigError);
  EXPECT_THROW(net::predict(net::Matrix(4, 2), params), ps::ConfigError);
  net::NetworkConfig bad;
  bad.n_heads = 5;
  EXPECT_THROW(net::NetworkParams::initialize(bad, 1), ps::ConfigError);
}
