// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT

#ifndef PATCHSTITCH_IO_DATASET_HPP
#define PATCHSTITCH_IO_DATASET_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "patchstitch/io/text_formats.hpp"

namespace patchstitch::io {

struct Shape {
  std::string name;
  PointCloud cloud;
  std::vector<PointId> subset;  // evaluation ids; empty when the shape has no .pidx
};

/// `<dir>/<name>.xyz` with `.normals` and, when present, `.pidx`.
inline Shape load_shape(const std::filesystem::path& dir, const std::string& name, bool require_subset = false) {
  const auto base = dir / name;
  auto xyz = base, nrm = base, pidx = base;
  xyz += ".xyz";
  nrm += ".normals";
  pidx += ".pidx";
  if (!std::filesystem::exists(xyz)) throw DataError("missing point file " + xyz.string());
  if (!std::filesystem::exists(nrm)) throw DataError("missing normals file " + nrm.string());
  Shape s{name, read_cloud(xyz, nrm), {}};
  if (std::filesystem::exists(pidx)) {
    s.subset = read_indices(pidx, s.cloud.size());
  } else if (require_subset) {
    throw DataError("missing evaluation subset " + pidx.string());
  }
  return s;
}

/// Shape names listed one per line in a split file, in file order.
inline std::vector<std::string> read_split(const std::filesystem::path& split_file) {
  auto in = detail::open_input(split_file);
  std::vector<std::string> names;
  detail::for_each_row(in, split_file.string(), [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 1) throw DataError(detail::where(split_file.string(), line) + ": expected one shape name");
    names.emplace_back(f[0]);
  });
  return names;
}

inline std::vector<Shape> load_dataset(const std::filesystem::path& dir, const std::filesystem::path& split_file,
                                       bool require_subset = false) {
  std::vector<Shape> shapes;
  for (const auto& name : read_split(split_file)) shapes.push_back(load_shape(dir, name, require_subset));
  return shapes;
}

}  // namespace patchstitch::io

#endif  // PATCHSTITCH_IO_DATASET_HPP
