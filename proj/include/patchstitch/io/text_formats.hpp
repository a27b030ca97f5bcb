// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Plain-text point formats:
//   .xyz      one "x y z" triple per line
//   .normals  one "nx ny nz" triple per line, row-aligned with .xyz
//   .pidx     one point index per line
// Fields may be separated by any whitespace; blank lines are ignored.

#ifndef PATCHSTITCH_IO_TEXT_FORMATS_HPP
#define PATCHSTITCH_IO_TEXT_FORMATS_HPP

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/point_cloud.hpp"

namespace patchstitch::io {

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

template <typename T>
T parse_number(std::string_view field, const std::string& source, std::size_t line) {
  // from_chars rejects a leading '+', which some writers emit.
  if (field.size() > 1 && field.front() == '+') field.remove_prefix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError(where(source, line) + ": cannot parse '" + std::string(field) + "' as a number");
  return value;
}

/// Calls `row(fields, line_number)` for every non-blank line.
template <typename RowFn>
void for_each_row(std::istream& in, const std::string& source, RowFn&& row) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    row(fields, number);
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline std::vector<Vec3> read_vectors(std::istream& in, const std::string& source) {
  std::vector<Vec3> out;
  detail::for_each_row(in, source, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 3)
      throw DataError(detail::where(source, line) + ": expected 3 values, found " + std::to_string(f.size()));
    Vec3 v{detail::parse_number<double>(f[0], source, line), detail::parse_number<double>(f[1], source, line),
           detail::parse_number<double>(f[2], source, line)};
    if (!is_finite(v)) throw DataError(detail::where(source, line) + ": non-finite value");
    out.push_back(v);
  });
  return out;
}

inline std::vector<Vec3> read_vectors(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_vectors(in, path.string());
}

/// Subset ids; each must be below `n`.
inline std::vector<PointId> read_indices(std::istream& in, const std::string& source, std::size_t n) {
  std::vector<PointId> out;
  detail::for_each_row(in, source, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 1)
      throw DataError(detail::where(source, line) + ": expected one index, found " + std::to_string(f.size()));
    const auto id = detail::parse_number<std::uint64_t>(f[0], source, line);
    if (id >= n)
      throw DataError(detail::where(source, line) + ": index " + std::to_string(id) + " out of range for " +
                      std::to_string(n) + " points");
    out.push_back(static_cast<PointId>(id));
  });
  return out;
}

inline std::vector<PointId> read_indices(const std::filesystem::path& path, std::size_t n) {
  auto in = detail::open_input(path);
  return read_indices(in, path.string(), n);
}

/// Point cloud from an .xyz file and, optionally, its .normals file.
inline PointCloud read_cloud(const std::filesystem::path& xyz, const std::optional<std::filesystem::path>& normals = {}) {
  auto positions = read_vectors(xyz);
  if (positions.empty()) throw DataError(xyz.string() + ": no points");
  std::optional<std::vector<Vec3>> gt;
  if (normals) {
    gt = read_vectors(*normals);
    if (gt->size() != positions.size())
      throw DataError(normals->string() + ": " + std::to_string(gt->size()) + " normals for " +
                      std::to_string(positions.size()) + " points in " + xyz.string());
  }
  try {
    return PointCloud(std::move(positions), std::move(gt));
  } catch (const DataError& e) {
    throw DataError((normals ? normals->string() : xyz.string()) + ": " + e.what());
  }
}

/// One triple per line with 9 significant digits.
inline std::string format_vectors(std::span<const Vec3> v) {
  std::string out;
  out.reserve(v.size() * 40);
  char buf[96];
  for (const auto& p : v) {
    const int len = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    out.append(buf, static_cast<std::size_t>(len));
  }
  return out;
}

/// Writes through a temporary file in the same directory and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place at " + path.string());
  }
}

inline void write_vectors(const std::filesystem::path& path, std::span<const Vec3> v) {
  write_file_atomic(path, format_vectors(v));
}

}  // namespace patchstitch::io

#endif  // PATCHSTITCH_IO_TEXT_FORMATS_HPP
