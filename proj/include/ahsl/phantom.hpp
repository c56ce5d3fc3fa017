#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahsl/anatomy.hpp"
#include "ahsl/edt.hpp"
#include "ahsl/error.hpp"
#include "ahsl/rng.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

struct PhantomSpec {
  int depth = 48;
  int height = 48;
  int width = 48;
  std::uint64_t seed = 42;
  double tube_radius = 1.5;
  int branch_depth = 3;
  double branch_len_min = 4.0;
  double branch_len_max = 9.0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string lobe_recipe = "two-ellipsoids-planar-cuts";

  void validate() const {
    if (depth < 24 || height < 24 || width < 24) {
      fail(errc::bad_argument, "phantom grids need at least 24 voxels per axis");
    }
    if (tube_radius < 1.0) fail(errc::bad_argument, "tube radius must be >= 1");
    if (branch_depth < 1) fail(errc::bad_argument, "branch depth must be >= 1");
    if (!(branch_len_min > 0.0) || branch_len_max < branch_len_min) {
      fail(errc::bad_argument, "branch length range is empty");
    }
    if (lobe_recipe != "two-ellipsoids-planar-cuts") {
      fail(errc::bad_argument, "unknown lobe recipe '" + lobe_recipe + "'");
    }
  }
};

using Polyline = std::vector<std::array<double, 3>>;  // (z, y, x) points

struct PhantomBundle {
  LabelVolume bv;    // 0 or segment id on tree tubes
  LabelVolume lobe;  // 0..5
  LabelVolume gt;    // distance-synthesized segment partition
  std::map<int, std::vector<Polyline>> skeletons;
};

/// Assigns every in-lobe voxel the segment id of the nearest bronchovascular
/// voxel among that lobe's member segments (exact Euclidean distance scaled
/// by spacing, ties to the lowest segment id). BV voxels keep their own
/// label; voxels outside all lobes stay 0.
inline LabelVolume synthesize_gt_by_distance(const LabelVolume& bv, const LabelVolume& lobe,
                                             const AnatomyHierarchy& h) {
  derive_regions(bv, lobe, h);  // validates shapes and hierarchy consistency

  const GridShape& shape = bv.shape;
  const std::int64_t vox = shape.voxels();
  LabelVolume out = LabelVolume::zeros(shape, LabelSemantics::segment_partition);

  std::vector<std::uint8_t> seeds(static_cast<std::size_t>(vox));
  for (int l = 1; l <= AnatomyHierarchy::kLobeCount; ++l) {
    bool lobe_present = false;
    for (std::int64_t v = 0; v < vox && !lobe_present; ++v) {
      lobe_present = lobe.data[static_cast<std::size_t>(v)] == l;
    }
    if (!lobe_present) continue;

    const auto members = h.members_of(l);
    std::vector<std::vector<double>> dist(members.size());
    bool any_seed = false;
    for (std::size_t i = 0; i < members.size(); ++i) {
      bool has_seed = false;
      for (std::int64_t v = 0; v < vox; ++v) {
        const bool seed = bv.data[static_cast<std::size_t>(v)] == members[i];
        seeds[static_cast<std::size_t>(v)] = seed;
        has_seed |= seed;
      }
      if (has_seed) {
        dist[i] = squared_edt(seeds, shape);
        any_seed = true;
      }
    }
    if (!any_seed) {
      fail(errc::empty_region, std::string("lobe ") + h.lobe_name(l) +
                                   " contains no bronchovascular voxel of any member segment");
    }

    for (std::int64_t v = 0; v < vox; ++v) {
      if (lobe.data[static_cast<std::size_t>(v)] != l) continue;
      int best = 0;
      double best_d = kEdtUnreached;
      for (std::size_t i = 0; i < members.size(); ++i) {
        if (dist[i].empty()) continue;
        const double d = dist[i][static_cast<std::size_t>(v)];
        if (d < best_d) {
          best_d = d;
          best = members[i];
        }
      }
      out.data[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

namespace detail {

struct LungGeometry {
  double zc, yc, xc;      // ellipsoid center
  double az, ay, ax;      // semi-axes
  double lateral_sign;    // -1 for the small-x lung, +1 for the large-x lung

  bool contains(double z, double y, double x) const {
    const double fz = (z - zc) / az, fy = (y - yc) / ay, fx = (x - xc) / ax;
    return fz * fz + fy * fy + fx * fx <= 1.0;
  }
  double tilt(double z, double y) const { return (z - zc) + 0.5 * (y - yc); }
};

inline std::array<double, 3> normalize(std::array<double, 3> v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (n == 0.0) return {0.0, 0.0, 1.0};
  return {v[0] / n, v[1] / n, v[2] / n};
}

inline double point_segment_sq(const std::array<double, 3>& p, const std::array<double, 3>& a,
                               const std::array<double, 3>& b) {
  const std::array<double, 3> ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const std::array<double, 3> ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
  const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2, 0.0, 1.0);
  }
  const double dz = ap[0] - t * ab[0], dy = ap[1] - t * ab[1], dx = ap[2] - t * ab[2];
  return dz * dz + dy * dy + dx * dx;
}

}  // namespace detail

/// Builds a deterministic desk-scale phantom: two ellipsoidal lungs split
/// into 2 + 3 lobes by oblique planar cuts, one seeded branching tube tree
/// per segment rooted near its lobe's medial face and clipped to the lobe,
/// plus the distance-synthesized segment partition.
inline PhantomBundle generate_phantom(const PhantomSpec& spec, const AnatomyHierarchy& h) {
  spec.validate();
  GridShape shape;
  shape.channels = 1;
  shape.depth = spec.depth;
  shape.height = spec.height;
  shape.width = spec.width;
  shape.spacing = spec.spacing;

  const double zc = 0.5 * spec.depth, yc = 0.5 * spec.height;
  const detail::LungGeometry left{zc, yc, 0.30 * spec.width, 0.42 * spec.depth,
                                  0.32 * spec.height, 0.16 * spec.width, -1.0};
  const detail::LungGeometry right{zc, yc, 0.70 * spec.width, 0.42 * spec.depth,
                                   0.32 * spec.height, 0.16 * spec.width, +1.0};

  LabelVolume lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  const double tspan = left.az + 0.5 * left.ay;
  for (int z = 0; z < spec.depth; ++z) {
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        int id = 0;
        if (left.contains(z, y, x)) {
          id = left.tilt(z, y) < 0.0 ? 1 : 2;  // LeftUpper / LeftLower
        } else if (right.contains(z, y, x)) {
          const double t = right.tilt(z, y);
          if (t < -0.30 * tspan) id = 3;       // RightUpper
          else if (t < 0.05 * tspan) id = 4;   // RightMiddle
          else id = 5;                         // RightLower
        }
        lobe.at(z, y, x) = static_cast<std::uint8_t>(id);
      }
    }
  }

  // Per-lobe voxel lists and tilt ranges for root placement.
  const std::int64_t vox = shape.voxels();
  std::array<std::vector<std::int64_t>, 6> lobe_voxels;
  std::array<double, 6> tmin, tmax;
  tmin.fill(1e300);
  tmax.fill(-1e300);
  for (std::int64_t v = 0; v < vox; ++v) {
    const int l = lobe.data[static_cast<std::size_t>(v)];
    if (l == 0) continue;
    lobe_voxels[static_cast<std::size_t>(l)].push_back(v);
    const int z = static_cast<int>(v / (static_cast<std::int64_t>(spec.height) * spec.width));
    const int y = static_cast<int>((v / spec.width) % spec.height);
    const double t = (z - zc) + 0.5 * (y - yc);
    tmin[static_cast<std::size_t>(l)] = std::min(tmin[static_cast<std::size_t>(l)], t);
    tmax[static_cast<std::size_t>(l)] = std::max(tmax[static_cast<std::size_t>(l)], t);
  }
  for (int l = 1; l <= AnatomyHierarchy::kLobeCount; ++l) {
    if (lobe_voxels[static_cast<std::size_t>(l)].empty()) {
      fail(errc::empty_region, std::string("lobe ") + h.lobe_name(l) +
                                   " is empty; phantom grid too small for the recipe");
    }
  }

  Rng rng(spec.seed);

  auto decode = [&](std::int64_t v) {
    const int z = static_cast<int>(v / (static_cast<std::int64_t>(spec.height) * spec.width));
    const int y = static_cast<int>((v / spec.width) % spec.height);
    const int x = static_cast<int>(v % spec.width);
    return std::array<double, 3>{static_cast<double>(z), static_cast<double>(y),
                                 static_cast<double>(x)};
  };

  // Roots: spread members along the lobe tilt range, staggered in y, biased
  // toward the medial face.
  std::array<std::array<double, 3>, 19> root{};
  for (int l = 1; l <= AnatomyHierarchy::kLobeCount; ++l) {
    const auto members = h.members_of(l);
    const detail::LungGeometry& lung = l <= 2 ? left : right;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(members.size());
      const double anchor_t = tmin[static_cast<std::size_t>(l)] +
                              frac * (tmax[static_cast<std::size_t>(l)] - tmin[static_cast<std::size_t>(l)]);
      const double anchor_y =
          yc + (i % 2 == 0 ? -0.22 : 0.22) * lung.ay + rng.uniform(-1.0, 1.0);
      const double anchor_x = lung.xc - lung.lateral_sign * 0.55 * lung.ax + rng.uniform(-1.0, 1.0);
      const double anchor_z = zc + anchor_t - 0.5 * (anchor_y - yc);

      std::int64_t best_v = lobe_voxels[static_cast<std::size_t>(l)].front();
      double best_d = 1e300;
      for (std::int64_t v : lobe_voxels[static_cast<std::size_t>(l)]) {
        const auto pt = decode(v);
        const double dz = pt[0] - anchor_z, dy = pt[1] - anchor_y, dx = pt[2] - anchor_x;
        const double d = dz * dz + dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best_v = v;
        }
      }
      root[static_cast<std::size_t>(members[i])] = decode(best_v);
    }
  }

  // Trees: binary branching polylines clipped to the owning lobe.
  std::map<int, std::vector<Polyline>> skeletons;
  for (int l = 1; l <= AnatomyHierarchy::kLobeCount; ++l) {
    const auto members = h.members_of(l);
    const detail::LungGeometry& lung = l <= 2 ? left : right;
    for (std::uint8_t seg : members) {
      auto& lines = skeletons[seg];
      const std::array<double, 3> dir0 = detail::normalize(
          {rng.uniform(-0.35, 0.35), rng.uniform(-0.45, 0.45), lung.lateral_sign * 0.85});

      struct Frame {
        std::array<double, 3> pos, dir;
        int level;
      };
      auto inside_lobe = [&](const std::array<double, 3>& p) {
        const int z = static_cast<int>(std::lround(p[0]));
        const int y = static_cast<int>(std::lround(p[1]));
        const int x = static_cast<int>(std::lround(p[2]));
        if (z < 0 || y < 0 || x < 0 || z >= spec.depth || y >= spec.height || x >= spec.width) {
          return false;
        }
        return lobe.at(z, y, x) == l;
      };

      // Explicit recursion keeps the draw sequence fixed: length first, then
      // each child's direction jitter immediately before its subtree.
      auto grow = [&](auto&& self, const std::array<double, 3>& pos,
                      const std::array<double, 3>& dir, int level) -> void {
        const double length = rng.uniform(spec.branch_len_min, spec.branch_len_max);
        std::array<double, 3> end = pos;
        const int steps = static_cast<int>(std::ceil(length / 0.5));
        for (int s = 1; s <= steps; ++s) {
          const double dist = std::min(length, 0.5 * s);
          const std::array<double, 3> cand{pos[0] + dir[0] * dist, pos[1] + dir[1] * dist,
                                           pos[2] + dir[2] * dist};
          if (!inside_lobe(cand)) break;
          end = cand;
        }
        lines.push_back({pos, end});
        if (level < spec.branch_depth) {
          for (int child = 0; child < 2; ++child) {
            const std::array<double, 3> jitter{rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7),
                                               rng.uniform(-0.7, 0.7)};
            const std::array<double, 3> cdir = detail::normalize(
                {dir[0] + jitter[0], dir[1] + jitter[1], dir[2] + jitter[2]});
            self(self, end, cdir, level + 1);
          }
        }
      };
      grow(grow, root[seg], dir0, 1);
    }
  }

  // Rasterize tubes in ascending segment order; first claim wins, and a
  // voxel is only claimed inside the segment's own lobe.
  LabelVolume bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  const double r2 = spec.tube_radius * spec.tube_radius;
  for (const auto& [seg, lines] : skeletons) {
    const int seg_lobe = h.lobe_of(seg);
    for (const Polyline& line : lines) {
      const auto& a = line[0];
      const auto& b = line[1];
      const int z0 = std::max(0, static_cast<int>(std::floor(std::min(a[0], b[0]) - spec.tube_radius)) - 1);
      const int z1 = std::min(spec.depth - 1, static_cast<int>(std::ceil(std::max(a[0], b[0]) + spec.tube_radius)) + 1);
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a[1], b[1]) - spec.tube_radius)) - 1);
      const int y1 = std::min(spec.height - 1, static_cast<int>(std::ceil(std::max(a[1], b[1]) + spec.tube_radius)) + 1);
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a[2], b[2]) - spec.tube_radius)) - 1);
      const int x1 = std::min(spec.width - 1, static_cast<int>(std::ceil(std::max(a[2], b[2]) + spec.tube_radius)) + 1);
      for (int z = z0; z <= z1; ++z) {
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            if (lobe.at(z, y, x) != seg_lobe || bv.at(z, y, x) != 0) continue;
            const std::array<double, 3> p{static_cast<double>(z), static_cast<double>(y),
                                          static_cast<double>(x)};
            if (detail::point_segment_sq(p, a, b) <= r2) {
              bv.at(z, y, x) = static_cast<std::uint8_t>(seg);
            }
          }
        }
      }
    }
  }

  std::array<std::int64_t, 19> tube_count{};
  for (std::uint8_t id : bv.data) ++tube_count[id];
  for (int s = 1; s <= AnatomyHierarchy::kSegmentCount; ++s) {
    if (tube_count[static_cast<std::size_t>(s)] == 0) {
      fail(errc::empty_region, std::string("segment ") + h.segment_name(s) +
                                   " rasterized to zero voxels; phantom spec too small");
    }
  }

  PhantomBundle bundle;
  bundle.bv = std::move(bv);
  bundle.lobe = std::move(lobe);
  bundle.gt = synthesize_gt_by_distance(bundle.bv, bundle.lobe, h);
  bundle.skeletons = std::move(skeletons);
  return bundle;
}

inline nlohmann::json skeletons_json(const PhantomBundle& bundle, const AnatomyHierarchy& h) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& [seg, lines] : bundle.skeletons) {
    nlohmann::json polylines = nlohmann::json::array();
    for (const Polyline& line : lines) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : line) pts.push_back({p[0], p[1], p[2]});
      polylines.push_back(pts);
    }
    segments.push_back({{"id", seg}, {"name", h.segment_name(seg)}, {"polylines", polylines}});
  }
  return {{"segments", segments}};
}

}  // namespace ahsl
