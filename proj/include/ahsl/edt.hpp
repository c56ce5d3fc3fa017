#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "ahsl/parallel.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

// Squared distances of "no seed anywhere" rows stay above this and real
// distances stay far below it at desk scale, so the two never mix.
constexpr double kEdtUnreached = 1e30;

namespace detail {

/// 1D squared-distance transform over sample positions i*step via the
/// lower-envelope-of-parabolas method. f holds per-sample source costs
/// (0 at seeds, kEdtUnreached elsewhere); d receives the transform.
inline void edt_1d(const double* f, int n, double step, double* d, int* hull, double* boundary) {
  int k = 0;
  hull[0] = 0;
  boundary[0] = -std::numeric_limits<double>::infinity();
  boundary[1] = std::numeric_limits<double>::infinity();
  const double step2 = step * step;

  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = hull[k];
      s = ((f[q] + step2 * q * q) - (f[p] + step2 * p * p)) / (2.0 * step2 * (q - p));
      if (s <= boundary[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    hull[k] = q;
    boundary[k] = s;
    boundary[k + 1] = std::numeric_limits<double>::infinity();
  }

  k = 0;
  for (int q = 0; q < n; ++q) {
    while (boundary[k + 1] < q) ++k;
    const double dq = step * (q - hull[k]);
    d[q] = dq * dq + f[hull[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance (in spacing-scaled units) from every
/// voxel to the nearest seed, via three separable 1D passes. Voxels in
/// rows with no reachable seed end up >= kEdtUnreached.
inline std::vector<double> squared_edt(const std::vector<std::uint8_t>& seeds, const GridShape& shape) {
  const int depth = shape.depth, height = shape.height, width = shape.width;
  const std::int64_t vox = shape.voxels();
  std::vector<double> dist(static_cast<std::size_t>(vox));
  for (std::int64_t v = 0; v < vox; ++v) {
    dist[static_cast<std::size_t>(v)] = seeds[static_cast<std::size_t>(v)] ? 0.0 : kEdtUnreached;
  }

  const int max_dim = std::max({depth, height, width});
  const std::int64_t zstride = static_cast<std::int64_t>(height) * width;

  auto run_lines = [&](std::int64_t n_lines, auto&& line_op) {
    parallel_for(n_lines, [&](std::int64_t i0, std::int64_t i1) {
      std::vector<double> f(static_cast<std::size_t>(max_dim));
      std::vector<double> d(static_cast<std::size_t>(max_dim));
      std::vector<int> hull(static_cast<std::size_t>(max_dim));
      std::vector<double> boundary(static_cast<std::size_t>(max_dim) + 1);
      for (std::int64_t line = i0; line < i1; ++line) {
        line_op(line, f.data(), d.data(), hull.data(), boundary.data());
      }
    });
  };

  // x pass
  run_lines(static_cast<std::int64_t>(depth) * height,
            [&](std::int64_t line, double* f, double* d, int* hull, double* boundary) {
              double* row = dist.data() + line * width;
              for (int x = 0; x < width; ++x) f[x] = row[x];
              detail::edt_1d(f, width, shape.spacing[2], d, hull, boundary);
              for (int x = 0; x < width; ++x) row[x] = d[x];
            });

  // y pass
  run_lines(static_cast<std::int64_t>(depth) * width,
            [&](std::int64_t line, double* f, double* d, int* hull, double* boundary) {
              const int z = static_cast<int>(line / width);
              const int x = static_cast<int>(line % width);
              double* base = dist.data() + static_cast<std::int64_t>(z) * zstride + x;
              for (int y = 0; y < height; ++y) f[y] = base[static_cast<std::int64_t>(y) * width];
              detail::edt_1d(f, height, shape.spacing[1], d, hull, boundary);
              for (int y = 0; y < height; ++y) base[static_cast<std::int64_t>(y) * width] = d[y];
            });

  // z pass
  run_lines(static_cast<std::int64_t>(height) * width,
            [&](std::int64_t line, double* f, double* d, int* hull, double* boundary) {
              double* base = dist.data() + line;
              for (int z = 0; z < depth; ++z) f[z] = base[static_cast<std::int64_t>(z) * zstride];
              detail::edt_1d(f, depth, shape.spacing[0], d, hull, boundary);
              for (int z = 0; z < depth; ++z) base[static_cast<std::int64_t>(z) * zstride] = d[z];
            });

  return dist;
}

}  // namespace ahsl
