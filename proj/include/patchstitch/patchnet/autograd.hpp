// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate value in creation order together with a
// closure that pushes the node's gradient to its inputs. Tape::backward walks
// the nodes in reverse, so no explicit topological sort is needed. Leaves
// created with Tape::parameter add their gradient into the bound Tensor.

#ifndef PATCHSTITCH_PATCHNET_AUTOGRAD_HPP
#define PATCHSTITCH_PATCHNET_AUTOGRAD_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "patchstitch/patchnet/tensor.hpp"
#include "patchstitch/random.hpp"

namespace patchstitch::net {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

class Tape {
 public:
  /// Receives the node's output gradient and its own value.
  using Backward = std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  static Matrix as_matrix(const Tensor& tensor) {
    return Eigen::Map<const Matrix>(tensor.data.data(), static_cast<Eigen::Index>(tensor.rows()),
                                    static_cast<Eigen::Index>(tensor.cols()));
  }

  /// Leaf holding a copy of a tensor, without gradient tracking.
  Var constant(const Tensor& tensor) { return constant(as_matrix(tensor)); }

  /// Leaf bound to a parameter tensor; its gradient is added to tensor.grad.
  Var parameter(Tensor& tensor) {
    Var v = push(as_matrix(tensor), true, nullptr);
    nodes_[v.id].param = &tensor;
    return v;
  }

  /// Adds a computed node. It requires a gradient when any input does.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Adds `g` into the gradient of `v` (no-op for constants).
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Gradient of `v` accumulated so far (zeros if none reached it).
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad.size() ? n.grad : Matrix::Zero(n.value.rows(), n.value.cols());
  }

  /// Reverse sweep from a 1x1 node. Parameter tensors get their gradient
  /// buffers allocated if needed and accumulated into.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw std::invalid_argument("backward needs a scalar output");
    accumulate(loss, Matrix::Ones(1, 1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad, n.value);
      if (n.param) {
        if (n.param->grad.size() != n.param->data.size()) n.param->zero_grad();
        Eigen::Map<Matrix> dst(n.param->grad.data(), n.grad.rows(), n.grad.cols());
        dst += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Tensor* param = nullptr;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward), nullptr});
    return Var{nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

/// a * b, or a * b^T when `transpose_b`.
inline Var matmul(Tape& t, Var a, Var b, bool transpose_b = false) {
  Matrix out = transpose_b ? Matrix(t.value(a) * t.value(b).transpose()) : Matrix(t.value(a) * t.value(b));
  return t.record(std::move(out), {a, b}, [a, b, transpose_b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, transpose_b ? Matrix(g * t.value(b)) : Matrix(g * t.value(b).transpose()));
    if (t.requires_grad(b))
      t.accumulate(b, transpose_b ? Matrix(g.transpose() * t.value(a)) : Matrix(t.value(a).transpose() * g));
  });
}

inline Var add(Tape& t, Var a, Var b) {
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

/// Adds a 1 x C row to every row of `a`.
inline Var add_row(Tape& t, Var a, Var row) {
  Matrix out = t.value(a).rowwise() + t.value(row).row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, {a}, [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * s); });
}

inline Var relu(Tape& t, Var a) {
  return t.record(t.value(a).cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0));
  });
}

inline Var leaky_relu(Tape& t, Var a, double slope) {
  Matrix out = (t.value(a).array() > 0.0).select(t.value(a), slope * t.value(a));
  return t.record(std::move(out), {a}, [a, slope](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (t.value(a).array() > 0.0).select(g, slope * g));
  });
}

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

inline Var softmax_rows(Tape& t, Var a) {
  return t.record(softmax_rows_value(t.value(a)), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
    t.accumulate(a, (y.array() * (g.colwise() - dot).array()).matrix());
  });
}

inline Var slice_cols(Tape& t, Var a, Eigen::Index begin, Eigen::Index count) {
  Matrix out = t.value(a).middleCols(begin, count);
  return t.record(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleCols(begin, count) = g;
    t.accumulate(a, full);
  });
}

inline Var slice_rows(Tape& t, Var a, Eigen::Index begin, Eigen::Index count) {
  Matrix out = t.value(a).middleRows(begin, count);
  return t.record(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleRows(begin, count) = g;
    t.accumulate(a, full);
  });
}

namespace detail {
template <bool Columns>
Var concat(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  const Matrix& first = t.value(parts[0]);
  Eigen::Index rows = Columns ? first.rows() : 0, cols = Columns ? 0 : first.cols();
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    if (Columns ? v.rows() != rows : v.cols() != cols) throw std::invalid_argument("concat of mismatched shapes");
    (Columns ? cols : rows) += Columns ? v.cols() : v.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    if constexpr (Columns) {
      out.middleCols(at, v.cols()) = v;
      at += v.cols();
    } else {
      out.middleRows(at, v.rows()) = v;
      at += v.rows();
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index at = 0;
    for (Var p : inputs) {
      const Matrix& v = t.value(p);
      if constexpr (Columns) {
        t.accumulate(p, g.middleCols(at, v.cols()));
        at += v.cols();
      } else {
        t.accumulate(p, g.middleRows(at, v.rows()));
        at += v.rows();
      }
    }
  });
}
}  // namespace detail

inline Var concat_cols(Tape& t, std::span<const Var> parts) { return detail::concat<true>(t, parts); }
inline Var concat_rows(Tape& t, std::span<const Var> parts) { return detail::concat<false>(t, parts); }

/// Column-wise maximum over rows -> 1 x C. Ties go to the first row.
inline Var max_over_rows(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out(1, x.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < x.rows(); ++r)
      if (x(r, c) > x(best, c)) best = r;
    arg[static_cast<std::size_t>(c)] = best;
    out(0, c) = x(best, c);
  }
  return t.record(std::move(out), {a}, [a, arg = std::move(arg)](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    for (Eigen::Index c = 0; c < full.cols(); ++c) full(arg[static_cast<std::size_t>(c)], c) = g(0, c);
    t.accumulate(a, full);
  });
}

/// Each row scaled to unit length.
inline Var normalize_rows(Tape& t, Var a, double eps = 1e-12) {
  const Matrix& x = t.value(a);
  Eigen::VectorXd len = x.rowwise().norm().cwiseMax(eps);
  Matrix out = x.array().colwise() / len.array();
  return t.record(std::move(out), {a}, [a, len = std::move(len)](Tape& t, const Matrix& g, const Matrix& yv) {
    const Eigen::VectorXd proj = (g.array() * yv.array()).rowwise().sum();
    Matrix dx = (g - (yv.array().colwise() * proj.array()).matrix()).array().colwise() / len.array();
    t.accumulate(a, dx);
  });
}

/// Mean of all entries -> 1x1.
inline Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum() / n;
  return t.record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0) / n));
  });
}

struct BatchNormSpec {
  const Tensor* running_mean = nullptr;
  const Tensor* running_var = nullptr;
  Tensor* update_mean = nullptr;  // training only; null leaves the statistics alone
  Tensor* update_var = nullptr;
  bool training = false;
  double momentum = 0.9;
  double eps = 1e-5;
};

/// Batch normalization over rows.
///
/// Training mode normalizes with the batch mean and biased variance and, when
/// update tensors are given, moves the running averages
///   running = momentum * running + (1 - momentum) * batch
/// (unbiased variance for the running estimate). Inference mode uses the
/// running averages and is an affine map.
inline Var batch_norm(Tape& t, Var x, Var gamma, Var beta, const BatchNormSpec& spec) {
  const Matrix& xv = t.value(x);
  const Eigen::Index n = xv.rows(), c = xv.cols();
  const bool training = spec.training;
  RowVector mu(c), var(c);
  if (training) {
    mu = xv.colwise().mean();
    var = (xv.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n);
    if (spec.update_mean && spec.update_var) {
      const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
      for (Eigen::Index j = 0; j < c; ++j) {
        auto& rm = spec.update_mean->data[static_cast<std::size_t>(j)];
        auto& rv = spec.update_var->data[static_cast<std::size_t>(j)];
        rm = spec.momentum * rm + (1.0 - spec.momentum) * mu(j);
        rv = spec.momentum * rv + (1.0 - spec.momentum) * var(j) * unbias;
      }
    }
  } else {
    for (Eigen::Index j = 0; j < c; ++j) {
      mu(j) = spec.running_mean->data[static_cast<std::size_t>(j)];
      var(j) = spec.running_var->data[static_cast<std::size_t>(j)];
    }
  }
  const double eps = spec.eps;
  const RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = ((xv.rowwise() - mu).array().rowwise() * inv_std.array()).matrix();
  Matrix out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).rowwise() + t.value(beta).row(0).array();

  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, training, xhat = std::move(xhat), inv_std](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.requires_grad(gamma)) t.accumulate(gamma, (g.array() * xhat.array()).colwise().sum());
                    if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
                    if (!t.requires_grad(x)) return;
                    const Matrix dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
                    if (!training) {
                      t.accumulate(x, (dxhat.array().rowwise() * inv_std.array()).matrix());
                      return;
                    }
                    const double n = static_cast<double>(g.rows());
                    const RowVector sum_d = dxhat.colwise().sum();
                    const RowVector sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
                    Matrix dx = (n * dxhat.array()).matrix();
                    dx.rowwise() -= sum_d;
                    dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
                    dx = (dx.array().rowwise() * (inv_std.array() / n)).matrix();
                    t.accumulate(x, dx);
                  });
}

/// Inverted dropout with keep-scaling 1/(1-p).
inline Var dropout(Tape& t, Var a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  const Matrix& x = t.value(a);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < p ? 0.0 : 1.0 / (1.0 - p);
  Matrix out = x.cwiseProduct(mask);
  return t.record(std::move(out), {a},
                  [a, mask = std::move(mask)](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g.cwiseProduct(mask)); });
}

/// Fused edge convolution aggregation:
///   out(i, c) = max_{j in graph(i)} ReLU(a(j, c) + b(i, c))
/// with graph given as rows x k neighbour ids. Since ReLU is monotone this is
/// ReLU(b(i, c) + max_j a(j, c)); the gradient goes to the first maximizing
/// neighbour only.
inline Var edge_max_relu(Tape& t, Var a, Var b, std::vector<std::uint32_t> graph, std::size_t k) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  const Eigen::Index rows = bv.rows(), cols = bv.cols();
  Matrix out(rows, cols);
  std::vector<std::uint32_t> arg(static_cast<std::size_t>(rows * cols));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::uint32_t* nb = graph.data() + static_cast<std::size_t>(i) * k;
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint32_t best = nb[0];
      double m = av(best, c);
      for (std::size_t q = 1; q < k; ++q) {
        const double v = av(nb[q], c);
        if (v > m) {
          m = v;
          best = nb[q];
        }
      }
      arg[static_cast<std::size_t>(i * cols + c)] = best;
      out(i, c) = std::max(0.0, m + bv(i, c));
    }
  }
  return t.record(std::move(out), {a, b}, [a, b, arg = std::move(arg)](Tape& t, const Matrix& g, const Matrix& ov) {
    Matrix da = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    Matrix db = Matrix::Zero(ov.rows(), ov.cols());
    for (Eigen::Index i = 0; i < ov.rows(); ++i)
      for (Eigen::Index c = 0; c < ov.cols(); ++c) {
        if (ov(i, c) <= 0.0) continue;
        const double gi = g(i, c);
        db(i, c) += gi;
        da(arg[static_cast<std::size_t>(i * ov.cols() + c)], c) += gi;
      }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

/// 1x4 quaternion (w, x, y, z) -> 3x3 rotation of the normalized quaternion.
/// Quaternions shorter than 1e-8 map to the identity with zero gradient;
/// `fallback` reports when that happened.
inline Var quaternion_to_rotation(Tape& t, Var q, bool* fallback = nullptr) {
  const Matrix& qv = t.value(q);
  const double len = qv.norm();
  if (fallback) *fallback = !(len >= 1e-8);
  if (!(len >= 1e-8)) return t.constant(Matrix::Identity(3, 3));
  const double w = qv(0, 0) / len, x = qv(0, 1) / len, y = qv(0, 2) / len, z = qv(0, 3) / len;
  Matrix r(3, 3);
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return t.record(std::move(r), {q}, [q, len, w, x, y, z](Tape& t, const Matrix& g, const Matrix&) {
    // d/dw, d/dx, d/dy, d/dz of each entry for the unit quaternion.
    const double dw = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    const double dx = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                           w * g(2, 1) - 2 * x * g(2, 2));
    const double dy = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                           z * g(2, 1) - 2 * y * g(2, 2));
    const double dz = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                           y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    Eigen::Vector4d dunit(dw, dx, dy, dz), unit(w, x, y, z);
    // Through the normalization q / |q|.
    const Eigen::Vector4d dq = (dunit - unit * unit.dot(dunit)) / len;
    t.accumulate(q, Matrix(dq.transpose()));
  });
}

/// Weighted unoriented multi-branch loss
///   L = 1/n sum_i sum_j w(i, j) * min(|N_j[i] + N[i]|, |N_j[i] - N[i]|)
/// over n rows. `branches` are n x 3 predictions, `weights` n x 3, `gt` n x 3.
inline Var expert_loss(Tape& t, Var weights, std::span<const Var> branches, const Matrix& gt) {
  const Matrix& w = t.value(weights);
  const Eigen::Index n = gt.rows();
  const std::size_t nb = branches.size();
  Matrix dist(n, static_cast<Eigen::Index>(nb));
  Matrix sign(n, static_cast<Eigen::Index>(nb));
  double total = 0.0;
  for (std::size_t j = 0; j < nb; ++j) {
    const Matrix& p = t.value(branches[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double plus = (p.row(i) + gt.row(i)).norm();
      const double minus = (p.row(i) - gt.row(i)).norm();
      const auto jj = static_cast<Eigen::Index>(j);
      dist(i, jj) = std::min(plus, minus);
      sign(i, jj) = plus < minus ? 1.0 : -1.0;
      total += w(i, jj) * dist(i, jj);
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);

  std::vector<Var> br(branches.begin(), branches.end());
  std::vector<Var> inputs = br;
  inputs.push_back(weights);
  return t.record(std::move(out), inputs,
                  [weights, br, gt, dist, sign](Tape& t, const Matrix& g, const Matrix&) {
                    const double s = g(0, 0) / static_cast<double>(gt.rows());
                    t.accumulate(weights, dist * s);
                    const Matrix& w = t.value(weights);
                    for (std::size_t j = 0; j < br.size(); ++j) {
                      if (!t.requires_grad(br[j])) continue;
                      const auto jj = static_cast<Eigen::Index>(j);
                      const Matrix& p = t.value(br[j]);
                      Matrix d(p.rows(), 3);
                      for (Eigen::Index i = 0; i < p.rows(); ++i) {
                        const Eigen::RowVector3d diff = p.row(i) + sign(i, jj) * gt.row(i);
                        const double len = dist(i, jj);
                        d.row(i) = len > 0.0 ? Eigen::RowVector3d(diff * (w(i, jj) * s / len))
                                             : Eigen::RowVector3d::Zero();
                      }
                      t.accumulate(br[j], d);
                    }
                  });
}

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_AUTOGRAD_HPP
