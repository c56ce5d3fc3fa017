#pragma once

// Shared generators for tests: seeded random fields and random-but-consistent
// region label volumes.

#include <cstdint>
#include <vector>

#include "ahsl/ahsl.hpp"

namespace testsupport {

inline ahsl::GridShape grid(int channels, int d, int h, int w) {
  ahsl::GridShape s;
  s.channels = channels;
  s.depth = d;
  s.height = h;
  s.width = w;
  return s;
}

inline ahsl::ScalarField4D random_logits(const ahsl::GridShape& shape, std::uint64_t seed,
                                         double sigma = 1.0) {
  ahsl::ScalarField4D f = ahsl::ScalarField4D::zeros(shape);
  ahsl::Rng rng(seed);
  for (double& v : f.data) v = sigma * rng.normal();
  return f;
}

inline ahsl::ProbabilityField random_probs(const ahsl::GridShape& shape, std::uint64_t seed,
                                           double sigma = 1.0) {
  return ahsl::softmax_channels(random_logits(shape, seed, sigma));
}

struct RegionVolumes {
  ahsl::LabelVolume bv;
  ahsl::LabelVolume lobe;
};

/// Random consistent (bv, lobe) pair: five overlapping random ellipsoids
/// painted in lobe order, then a few bronchovascular voxels sprinkled per
/// member segment inside each surviving lobe region.
inline RegionVolumes random_region(std::uint64_t seed, int d, int h, int w,
                                   int seeds_per_segment = 2) {
  const auto& hier = ahsl::hierarchy();
  ahsl::Rng rng(seed);
  ahsl::GridShape shape = grid(1, d, h, w);
  ahsl::LabelVolume lobe = ahsl::LabelVolume::zeros(shape, ahsl::LabelSemantics::lobe_labels);
  ahsl::LabelVolume bv = ahsl::LabelVolume::zeros(shape, ahsl::LabelSemantics::bv_labels);

  for (int l = 1; l <= 5; ++l) {
    const double cz = rng.uniform(0.2 * d, 0.8 * d);
    const double cy = rng.uniform(0.2 * h, 0.8 * h);
    const double cx = rng.uniform(0.2 * w, 0.8 * w);
    const double az = rng.uniform(0.2 * d, 0.45 * d);
    const double ay = rng.uniform(0.2 * h, 0.45 * h);
    const double ax = rng.uniform(0.2 * w, 0.45 * w);
    for (int z = 0; z < d; ++z) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double fz = (z - cz) / az, fy = (y - cy) / ay, fx = (x - cx) / ax;
          if (fz * fz + fy * fy + fx * fx <= 1.0) {
            lobe.at(z, y, x) = static_cast<std::uint8_t>(l);
          }
        }
      }
    }
  }

  std::array<std::vector<std::int64_t>, 6> lobe_voxels;
  for (std::int64_t v = 0; v < shape.voxels(); ++v) {
    lobe_voxels[lobe.data[static_cast<std::size_t>(v)]].push_back(v);
  }
  for (int l = 1; l <= 5; ++l) {
    const auto& voxels = lobe_voxels[static_cast<std::size_t>(l)];
    if (voxels.empty()) continue;
    for (std::uint8_t seg : hier.members_of(l)) {
      for (int k = 0; k < seeds_per_segment; ++k) {
        const std::int64_t v = voxels[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(voxels.size()) - 1))];
        if (bv.data[static_cast<std::size_t>(v)] == 0) {
          bv.data[static_cast<std::size_t>(v)] = seg;
        }
      }
    }
  }
  return {std::move(bv), std::move(lobe)};
}

}  // namespace testsupport
