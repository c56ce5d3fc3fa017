#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahsl/anatomy.hpp"
#include "ahsl/error.hpp"
#include "ahsl/parallel.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

struct MappedDiceReport {
  std::map<int, double> per_class;  // segment id -> Dice
  double mean = 0.0;
  std::vector<int> classes_evaluated;  // ascending ids present in the structure GT
};

/// Dice between a structure mask relabeled by the predicted partition and
/// the structure's ground-truth segment labels. The mapped mask M copies
/// pred on structure voxels and is 0 elsewhere, so the metric isolates how
/// well the structures themselves are classified.
inline MappedDiceReport mapped_dice(const LabelVolume& pred_segments,
                                    const LabelVolume& structure_gt) {
  pred_segments.validate();
  structure_gt.validate();
  if (!pred_segments.shape.same_grid(structure_gt.shape)) {
    fail(errc::bad_argument, "prediction and structure grids differ");
  }
  if (pred_segments.semantics == LabelSemantics::lobe_labels ||
      structure_gt.semantics == LabelSemantics::lobe_labels) {
    fail(errc::bad_argument, "mapped dice expects segment-level labels");
  }

  std::array<std::int64_t, 19> gt_count{};
  std::array<std::int64_t, 19> mapped_count{};
  std::array<std::int64_t, 19> inter_count{};
  for (std::size_t v = 0; v < structure_gt.data.size(); ++v) {
    const int s = structure_gt.data[v];
    if (s == 0) continue;
    const int m = pred_segments.data[v];
    ++gt_count[static_cast<std::size_t>(s)];
    ++mapped_count[static_cast<std::size_t>(m)];
    if (m == s) ++inter_count[static_cast<std::size_t>(s)];
  }

  MappedDiceReport report;
  double sum = 0.0;
  for (int c = 1; c <= AnatomyHierarchy::kSegmentCount; ++c) {
    if (gt_count[static_cast<std::size_t>(c)] == 0) continue;
    const double dice = 2.0 * static_cast<double>(inter_count[static_cast<std::size_t>(c)]) /
                        static_cast<double>(gt_count[static_cast<std::size_t>(c)] +
                                            mapped_count[static_cast<std::size_t>(c)]);
    report.per_class[c] = dice;
    report.classes_evaluated.push_back(c);
    sum += dice;
  }
  if (report.classes_evaluated.empty()) {
    fail(errc::empty_region, "structure ground truth labels no voxels");
  }
  report.mean = sum / static_cast<double>(report.classes_evaluated.size());
  return report;
}

struct HolesReport {
  std::int64_t total = 0;
  std::array<std::int64_t, 3> per_axis{};  // z, y, x slice stacks
  std::map<int, std::int64_t> per_class;   // segment id -> count
};

namespace detail {

/// Counts 4-connected components of the slice complement that do not touch
/// the slice border, for every class present, via two-pass union-find.
/// counts[c] accumulates per class.
inline void slice_holes(const std::uint8_t* slice, int rows, int cols,
                        std::array<std::int64_t, 19>& counts) {
  std::array<bool, 19> present{};
  const int n = rows * cols;
  for (int i = 0; i < n; ++i) present[slice[i]] = true;

  std::vector<std::int32_t> parent(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> border(static_cast<std::size_t>(n));

  auto find = [&](std::int32_t i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };

  for (int cls = 1; cls <= AnatomyHierarchy::kSegmentCount; ++cls) {
    if (!present[static_cast<std::size_t>(cls)]) continue;
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
    std::fill(border.begin(), border.end(), 0);

    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const int i = r * cols + c;
        if (slice[i] == cls) continue;  // foreground
        if (c > 0 && slice[i - 1] != cls) {
          const std::int32_t a = find(i), b = find(i - 1);
          if (a != b) parent[static_cast<std::size_t>(a)] = b;
        }
        if (r > 0 && slice[i - cols] != cls) {
          const std::int32_t a = find(i), b = find(i - cols);
          if (a != b) parent[static_cast<std::size_t>(a)] = b;
        }
      }
    }
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const int i = r * cols + c;
        if (slice[i] == cls) continue;
        if (r == 0 || r == rows - 1 || c == 0 || c == cols - 1) {
          border[static_cast<std::size_t>(find(i))] = 1;
        }
      }
    }
    std::int64_t holes = 0;
    for (int i = 0; i < n; ++i) {
      if (slice[i] == cls) continue;
      if (find(i) == i && !border[static_cast<std::size_t>(i)]) ++holes;
    }
    counts[static_cast<std::size_t>(cls)] += holes;
  }
}

}  // namespace detail

/// Topological smoothness score: for every segment class and every axial,
/// sagittal and coronal slice, the number of enclosed complement components
/// (4-connected, border-touching components excluded), summed.
inline HolesReport count_holes(const LabelVolume& pred_segments) {
  pred_segments.validate();
  if (pred_segments.semantics == LabelSemantics::lobe_labels) {
    fail(errc::bad_argument, "hole counting expects segment-level labels");
  }
  const GridShape& s = pred_segments.shape;
  HolesReport report;
  std::array<std::array<std::int64_t, 19>, 3> axis_class{};

  for (int axis = 0; axis < 3; ++axis) {
    const int n_slices = axis == 0 ? s.depth : axis == 1 ? s.height : s.width;
    const int rows = axis == 0 ? s.height : s.depth;
    const int cols = axis == 2 ? s.height : s.width;
    std::vector<std::array<std::int64_t, 19>> per_slice(static_cast<std::size_t>(n_slices));

    parallel_for(n_slices, [&](std::int64_t i0, std::int64_t i1) {
      std::vector<std::uint8_t> slice(static_cast<std::size_t>(rows) * cols);
      for (std::int64_t idx = i0; idx < i1; ++idx) {
        const int k = static_cast<int>(idx);
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            std::uint8_t val;
            if (axis == 0) val = pred_segments.at(k, r, c);
            else if (axis == 1) val = pred_segments.at(r, k, c);
            else val = pred_segments.at(r, c, k);
            slice[static_cast<std::size_t>(r) * cols + c] = val;
          }
        }
        per_slice[static_cast<std::size_t>(idx)] = {};
        detail::slice_holes(slice.data(), rows, cols, per_slice[static_cast<std::size_t>(idx)]);
      }
    });

    for (const auto& counts : per_slice) {
      for (int cls = 1; cls <= 18; ++cls) {
        axis_class[static_cast<std::size_t>(axis)][static_cast<std::size_t>(cls)] +=
            counts[static_cast<std::size_t>(cls)];
      }
    }
  }

  for (int axis = 0; axis < 3; ++axis) {
    for (int cls = 1; cls <= 18; ++cls) {
      const std::int64_t c = axis_class[static_cast<std::size_t>(axis)][static_cast<std::size_t>(cls)];
      report.per_axis[static_cast<std::size_t>(axis)] += c;
      if (c != 0) report.per_class[cls] += c;
      report.total += c;
    }
  }
  return report;
}

/// Fraction of L-tagged voxels whose predicted segment belongs to their
/// lobe target. 1.0 when there are no L voxels.
inline double lobe_consistency(const LabelVolume& pred_segments, const RegionPartition& r,
                               const AnatomyHierarchy& h) {
  if (!pred_segments.shape.same_grid(r.shape)) {
    fail(errc::bad_argument, "prediction and region grids differ");
  }
  std::int64_t consistent = 0;
  std::int64_t total = 0;
  for (std::size_t v = 0; v < pred_segments.data.size(); ++v) {
    if (r.tag[v] != RegionTag::lobe) continue;
    ++total;
    const int seg = pred_segments.data[v];
    if (seg > 0 && h.lobe_of(seg) == r.lobe_target[v]) ++consistent;
  }
  return total == 0 ? 1.0 : static_cast<double>(consistent) / static_cast<double>(total);
}

inline nlohmann::json mapped_dice_json(const MappedDiceReport& report, const AnatomyHierarchy& h) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [id, dice] : report.per_class) per_class[h.segment_name(id)] = dice;
  return {{"per_class", per_class}, {"mean", report.mean},
          {"classes_evaluated", report.classes_evaluated}};
}

inline nlohmann::json holes_json(const HolesReport& report, const AnatomyHierarchy& h) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [id, count] : report.per_class) per_class[h.segment_name(id)] = count;
  return {{"total", report.total},
          {"per_axis", {{"z", report.per_axis[0]}, {"y", report.per_axis[1]}, {"x", report.per_axis[2]}}},
          {"per_class", per_class}};
}

}  // namespace ahsl
