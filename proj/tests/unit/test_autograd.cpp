#include <gtest/gtest.h>

#include <functional>

#include "patchstitch/patchnet/autograd.hpp"
#include "patchstitch/patchnet/network.hpp"
#include "support/gradcheck.hpp"
#include "support/net_fixtures.hpp"

namespace ps = patchstitch;
namespace net = patchstitch::net;
using net::Matrix;
using net::Tape;
using net::Var;
using ps::testing::random_matrix;

namespace {

using Op = std::function<Var(Tape&, std::vector<Var>&)>;

net::Tensor tensor_of(const Matrix& m) {
  net::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

/// sum(out .* r): reduces any output to a scalar with a fixed random weighting.
Var weighted_sum(Tape& t, Var v, const Matrix& r) {
  Matrix out(1, 1);
  out(0, 0) = t.value(v).cwiseProduct(r).sum();
  return t.record(std::move(out), {v}, [v, r](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(v, r * g(0, 0)); });
}

double evaluate(std::vector<net::Tensor>& inputs, const Op& op, const Matrix& r, bool with_grad) {
  Tape t;
  std::vector<Var> vars;
  for (auto& in : inputs) vars.push_back(with_grad ? t.parameter(in) : t.constant(in));
  Var out = op(t, vars);
  Var loss = out;
  if (t.value(out).size() != 1 || r.size() != 1) loss = weighted_sum(t, out, r);
  if (with_grad) t.backward(loss);
  return t.value(loss)(0, 0);
}

/// Central differences against the tape for every input coordinate.
void expect_gradients(std::vector<Matrix> values, const Op& op, std::uint64_t seed, double tol = 1e-6) {
  std::vector<net::Tensor> inputs;
  for (const auto& v : values) inputs.push_back(tensor_of(v));
  Matrix shape_probe;
  {
    Tape t;
    std::vector<Var> vars;
    for (auto& in : inputs) vars.push_back(t.constant(in));
    shape_probe = t.value(op(t, vars));
  }
  ps::Rng rng(seed);
  const Matrix r = shape_probe.size() == 1 ? Matrix::Ones(1, 1)
                                           : random_matrix(static_cast<std::size_t>(shape_probe.rows()),
                                                           static_cast<std::size_t>(shape_probe.cols()), rng);
  for (auto& in : inputs) in.zero_grad();
  evaluate(inputs, op, r, true);
  const double h = 1e-6;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double saved = inputs[a].data[i];
      inputs[a].data[i] = saved + h;
      const double up = evaluate(inputs, op, r, false);
      inputs[a].data[i] = saved - h;
      const double down = evaluate(inputs, op, r, false);
      inputs[a].data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      EXPECT_NEAR(inputs[a].grad[i], numeric, tol * std::max(1.0, std::abs(numeric))) << "input " << a << " index " << i;
    }
  }
}

}  // namespace

TEST(Autograd, Matmul) {
  ps::Rng rng(1);
  expect_gradients({random_matrix(4, 3, rng), random_matrix(3, 5, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::matmul(t, v[0], v[1]); }, 2);
  expect_gradients({random_matrix(4, 3, rng), random_matrix(5, 3, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::matmul(t, v[0], v[1], true); }, 3);
}

TEST(Autograd, ElementwiseArithmetic) {
  ps::Rng rng(4);
  expect_gradients({random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::sub(t, net::add(t, v[0], v[1]), net::scale(t, v[1], 3.0)); },
                   5);
  expect_gradients({random_matrix(3, 4, rng), random_matrix(1, 4, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::add_row(t, v[0], v[1]); }, 6);
}

TEST(Autograd, Activations) {
  ps::Rng rng(7);
  expect_gradients({random_matrix(5, 4, rng)}, [](Tape& t, std::vector<Var>& v) { return net::relu(t, v[0]); }, 8);
  expect_gradients({random_matrix(5, 4, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::leaky_relu(t, v[0], 0.2); }, 9);
  expect_gradients({random_matrix(4, 6, rng, -3.0, 3.0)},
                   [](Tape& t, std::vector<Var>& v) { return net::softmax_rows(t, v[0]); }, 10);
}

TEST(Autograd, SlicingAndConcatenation) {
  ps::Rng rng(11);
  expect_gradients({random_matrix(4, 6, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::slice_cols(t, v[0], 2, 3); }, 12);
  expect_gradients({random_matrix(6, 4, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::slice_rows(t, v[0], 1, 4); }, 13);
  expect_gradients({random_matrix(3, 2, rng), random_matrix(3, 4, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::concat_cols(t, std::span<const Var>(v)); }, 14);
  expect_gradients({random_matrix(2, 3, rng), random_matrix(4, 3, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::concat_rows(t, std::span<const Var>(v)); }, 15);
}

TEST(Autograd, Reductions) {
  ps::Rng rng(16);
  expect_gradients({random_matrix(7, 5, rng)}, [](Tape& t, std::vector<Var>& v) { return net::max_over_rows(t, v[0]); }, 17);
  expect_gradients({random_matrix(7, 5, rng)}, [](Tape& t, std::vector<Var>& v) { return net::mean(t, v[0]); }, 18);
  expect_gradients({random_matrix(6, 3, rng)}, [](Tape& t, std::vector<Var>& v) { return net::normalize_rows(t, v[0]); }, 19);
}

TEST(Autograd, BatchNormBothModes) {
  ps::Rng rng(20);
  net::Tensor rm({4}), rv({4}, 1.0);
  for (std::size_t j = 0; j < 4; ++j) {
    rm.data[j] = ps::uniform(rng, -0.5, 0.5);
    rv.data[j] = ps::uniform(rng, 0.5, 2.0);
  }
  for (bool training : {true, false}) {
    net::BatchNormSpec spec;
    spec.running_mean = &rm;
    spec.running_var = &rv;
    spec.training = training;
    expect_gradients({random_matrix(6, 4, rng), random_matrix(1, 4, rng, 0.5, 1.5), random_matrix(1, 4, rng)},
                     [spec](Tape& t, std::vector<Var>& v) { return net::batch_norm(t, v[0], v[1], v[2], spec); },
                     21, 1e-5);
  }
}

TEST(Autograd, DropoutWithFixedMask) {
  ps::Rng rng(22);
  expect_gradients({random_matrix(5, 5, rng)},
                   [](Tape& t, std::vector<Var>& v) {
                     ps::Rng mask_rng(99);
                     return net::dropout(t, v[0], 0.3, mask_rng);
                   },
                   23);
}

TEST(Autograd, EdgeConvolution) {
  ps::Rng rng(24);
  expect_gradients({random_matrix(6, 3, rng), random_matrix(3, 5, rng), random_matrix(3, 5, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::edge_conv(t, v[0], v[1], v[2], 3, false); }, 25);
  expect_gradients({random_matrix(6, 4, rng), random_matrix(4, 4, rng), random_matrix(4, 4, rng)},
                   [](Tape& t, std::vector<Var>& v) { return net::edge_conv(t, v[0], v[1], v[2], 3, true); }, 26);
}

TEST(Autograd, QuaternionToRotation) {
  ps::Rng rng(27);
  for (int trial = 0; trial < 5; ++trial)
    expect_gradients({random_matrix(1, 4, rng)},
                     [](Tape& t, std::vector<Var>& v) { return net::quaternion_to_rotation(t, v[0]); }, 28 + trial);
}

TEST(Autograd, ExpertLoss) {
  ps::Rng rng(33);
  const Matrix gt = random_matrix(5, 3, rng);
  expect_gradients({random_matrix(5, 3, rng, 0.1, 1.0), random_matrix(5, 3, rng), random_matrix(5, 3, rng),
                    random_matrix(5, 3, rng)},
                   [gt](Tape& t, std::vector<Var>& v) {
                     const std::array<Var, 3> b{v[1], v[2], v[3]};
                     return net::expert_loss(t, v[0], b, gt);
                   },
                   34);
}

TEST(Autograd, ConstantLossHasZeroGradient) {
  net::Tensor w({3, 3}, 0.5);
  Tape t;
  Var p = t.parameter(w);
  Var c = t.constant(Matrix::Ones(2, 3));
  Var loss = net::mean(t, c);
  net::matmul(t, c, p);  // unrelated branch
  t.backward(loss);
  EXPECT_EQ(t.grad(p).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(w.grad.empty());
}

TEST(Autograd, LinearLayerClosedForm) {
  ps::Rng rng(35);
  const Matrix x = random_matrix(6, 3, rng), y = random_matrix(6, 2, rng);
  net::Tensor w = tensor_of(random_matrix(3, 2, rng));
  Tape t;
  Var wv = t.parameter(w);
  Var e = net::sub(t, net::matmul(t, t.constant(x), wv), t.constant(y));
  // mean(E E^T) = |sum_i e_i|^2 / n^2
  Var loss = net::mean(t, net::matmul(t, e, e, true));
  t.backward(loss);
  const Matrix ev = x * Tape::as_matrix(w) - y;
  const Matrix s = ev.colwise().sum();
  const Matrix expected = x.transpose() * Matrix::Ones(6, 1) * s * (2.0 / 36.0);
  EXPECT_NEAR(t.value(loss)(0, 0), s.squaredNorm() / 36.0, 1e-12);
  EXPECT_LT((t.grad(wv) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autograd, FullNetworkAgreesWithSmallStepDifferences) {
  auto c = ps::testing::make_gradcheck_case(16, 4, 8, 1, 11);
  const auto samples = ps::testing::run_gradcheck(c, 200, 1e-6, 12);
  for (const auto& s : samples)
    EXPECT_NEAR(s.analytic, s.numeric, 1e-7 + 1e-4 * std::abs(s.numeric)) << s.tensor << "[" << s.index << "]";
}

TEST(Autograd, LeafGradientsAccumulateAcrossBackwardCalls) {
  net::Tensor w({1, 2}, 1.0);
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(net::mean(t, t.parameter(w)));
  }
  EXPECT_EQ(w.grad, (std::vector<double>{1.0, 1.0}));
}
