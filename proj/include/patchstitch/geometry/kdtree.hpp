// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Exact k-nearest-neighbour search over 3D points.
//
// Results are ordered by (squared distance, point id), so equidistant points
// come back in ascending id order. Pruning only discards a subtree when its
// splitting plane is strictly farther than the current k-th candidate, which
// keeps that tie rule exact.

#ifndef PATCHSTITCH_GEOMETRY_KDTREE_HPP
#define PATCHSTITCH_GEOMETRY_KDTREE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/point_cloud.hpp"
#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch {

struct Neighbor {
  double squared_distance;
  PointId id;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.id < b.id);
  }
};

/// Immutable kd-tree. Safe to query from several threads once built.
class KdTree {
 public:
  static constexpr std::size_t kLeafSize = 16;

  explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw ConfigError("cannot build a spatial index over an empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), PointId{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(PointId id) const { return points_[id]; }

  /// The k nearest points to `query`, nearest first. k is clamped to size().
  std::vector<Neighbor> knn_with_distances(const Vec3& query, std::size_t k) const {
    k = std::min(k, points_.size());
    std::vector<Neighbor> heap;  // max-heap on (d2, id)
    heap.reserve(k + 1);
    if (k > 0) search(0, query, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

  std::vector<PointId> knn(const Vec3& query, std::size_t k) const {
    const auto found = knn_with_distances(query, k);
    std::vector<PointId> ids(found.size());
    std::transform(found.begin(), found.end(), ids.begin(), [](const Neighbor& n) { return n.id; });
    return ids;
  }

 private:
  struct Node {
    std::uint32_t begin;
    std::uint32_t end;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= kLeafSize) return index;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& p = points_[order_[i]];
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](PointId a, PointId b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[index].axis = axis;
    nodes_[index].split = split;
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor cand) const {
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end());
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(std::int32_t node_index, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_index)];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const PointId id = order_[i];
        offer(heap, k, {squared_distance(q, points_[id]), id});
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // Points equal to the split value may sit on either side, so only a
    // strictly larger plane distance allows skipping the far side.
    if (heap.size() < k || diff * diff <= heap.front().squared_distance) search(far, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<PointId> order_;
  std::vector<Node> nodes_;
};

using SpatialIndex = KdTree;

inline SpatialIndex build_spatial_index(const PointCloud& cloud) {
  if (cloud.empty()) throw ConfigError("cannot build a spatial index over an empty point cloud");
  return SpatialIndex(cloud.positions());
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_GEOMETRY_KDTREE_HPP
