// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// CSR map from cloud point id to every (patch, slot) occurrence.
//
// Built with one counting pass and one scatter pass over the patch members.
// Scattering patches in order leaves each row sorted by patch id.

#ifndef PATCHSTITCH_STITCHING_SPARSE_INDEX_HPP
#define PATCHSTITCH_STITCHING_SPARSE_INDEX_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchstitch/error.hpp"
#include "patchstitch/geometry/patch.hpp"

namespace patchstitch {

struct IndexEntry {
  std::uint32_t patch_id;
  std::uint32_t slot;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

class SparseIndexMatrix {
 public:
  SparseIndexMatrix() = default;
  SparseIndexMatrix(std::vector<std::size_t> row_offsets, std::vector<IndexEntry> entries)
      : row_offsets_(std::move(row_offsets)), entries_(std::move(entries)) {}

  std::size_t num_points() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t total_entries() const { return entries_.size(); }

  /// Occurrences of point `i`, ascending patch id.
  std::span<const IndexEntry> row(std::size_t i) const {
    return std::span<const IndexEntry>(entries_).subspan(row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]);
  }
  std::size_t candidate_count(std::size_t i) const { return row_offsets_[i + 1] - row_offsets_[i]; }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const IndexEntry> entries() const { return entries_; }

  std::vector<PointId> uncovered() const {
    std::vector<PointId> out;
    for (std::size_t i = 0; i < num_points(); ++i)
      if (candidate_count(i) == 0) out.push_back(static_cast<PointId>(i));
    return out;
  }

  std::size_t peak_overlap() const {
    std::size_t peak = 0;
    for (std::size_t i = 0; i < num_points(); ++i) peak = std::max(peak, candidate_count(i));
    return peak;
  }

 private:
  std::vector<std::size_t> row_offsets_;
  std::vector<IndexEntry> entries_;
};

inline SparseIndexMatrix build_sparse_index(std::span<const Patch> patches, std::size_t n_points) {
  std::vector<std::size_t> offsets(n_points + 1, 0);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    for (PointId id : patches[p].member_ids) {
      if (id >= n_points)
        throw ConfigError("patch " + std::to_string(p) + " references point " + std::to_string(id) +
                          " outside a cloud of " + std::to_string(n_points));
      ++offsets[id + 1];
    }
  }
  for (std::size_t i = 0; i < n_points; ++i) offsets[i + 1] += offsets[i];

  std::vector<IndexEntry> entries(offsets[n_points]);
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const auto& members = patches[p].member_ids;
    for (std::size_t s = 0; s < members.size(); ++s)
      entries[cursor[members[s]]++] = {static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(s)};
  }
  return SparseIndexMatrix(std::move(offsets), std::move(entries));
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_STITCHING_SPARSE_INDEX_HPP
