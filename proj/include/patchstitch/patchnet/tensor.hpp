// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_PATCHNET_TENSOR_HPP
#define PATCHSTITCH_PATCHNET_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace patchstitch::net {

/// Dense row-major parameter tensor with an optional gradient buffer.
///
/// Values are held in double precision so the same network can be checked
/// against finite differences; the weights file stores them as float32.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until gradients are requested

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  /// Matrix view: rank-1 tensors are a single row.
  std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

  void zero_grad() { grad.assign(data.size(), 0.0); }
};

}  // namespace patchstitch::net

#endif  // PATCHSTITCH_PATCHNET_TENSOR_HPP
