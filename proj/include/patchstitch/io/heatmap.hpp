// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_IO_HEATMAP_HPP
#define PATCHSTITCH_IO_HEATMAP_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/metrics.hpp"
#include "patchstitch/geometry/vec3.hpp"

namespace patchstitch::io {

using Rgb = std::array<std::uint8_t, 3>;

/// Linear blue to red ramp over 0..90 degrees: t = err / 90,
/// (r, g, b) = (round(255 t), 0, round(255 (1 - t))).
inline Rgb error_color(double degrees) {
  const double t = std::clamp(degrees / 90.0, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255.0 * t)), 0,
          static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)))};
}

/// ASCII PLY with one coloured vertex per point.
inline std::string heatmap_ply(std::span<const Vec3> positions, std::span<const Vec3> predicted,
                               std::span<const Vec3> truth) {
  if (positions.size() != predicted.size() || positions.size() != truth.size())
    throw DataError("heatmap inputs differ in length: " + std::to_string(positions.size()) + " points, " +
                    std::to_string(predicted.size()) + " predictions, " + std::to_string(truth.size()) +
                    " reference normals");
  std::string out = "ply\nformat ascii 1.0\ncomment unoriented normal error, 0-90 degrees, blue to red\n";
  out += "element vertex " + std::to_string(positions.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "property float error_deg\nend_header\n";
  char buf[160];
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double err = angle_error_unoriented(predicted[i], truth[i]);
    const Rgb c = error_color(err);
    const int len = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %u %u %u %.6g\n", positions[i].x, positions[i].y,
                                  positions[i].z, c[0], c[1], c[2], err);
    out.append(buf, static_cast<std::size_t>(len));
  }
  return out;
}

}  // namespace patchstitch::io

#endif  // PATCHSTITCH_IO_HEATMAP_HPP
