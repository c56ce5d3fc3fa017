#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ahsl/error.hpp"
#include "ahsl/parallel.hpp"

namespace ahsl {

/// Dense grid geometry. Spacing is millimeters per voxel along z, y, x and
/// is carried as metadata only; no resampling happens anywhere.
struct GridShape {
  int channels = 1;
  int depth = 1;
  int height = 1;
  int width = 1;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(depth) * height * width;
  }
  std::int64_t values() const { return voxels() * channels; }

  bool same_grid(const GridShape& o) const {
    return depth == o.depth && height == o.height && width == o.width;
  }

  void validate() const {
    if (channels < 1 || depth < 1 || height < 1 || width < 1) {
      fail(errc::bad_argument, "grid dimensions must all be >= 1");
    }
    for (double s : spacing) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        fail(errc::bad_argument, "grid spacing components must be positive");
      }
    }
  }
};

/// Dense C x D x H x W real field in C-order (c, z, y, x), x fastest.
struct ScalarField4D {
  GridShape shape;
  std::vector<double> data;

  static ScalarField4D zeros(const GridShape& s) {
    s.validate();
    ScalarField4D f;
    f.shape = s;
    f.data.assign(static_cast<std::size_t>(s.values()), 0.0);
    return f;
  }

  std::int64_t voxel_index(int z, int y, int x) const {
    return (static_cast<std::int64_t>(z) * shape.height + y) * shape.width + x;
  }
  std::int64_t index(int c, int z, int y, int x) const {
    return static_cast<std::int64_t>(c) * shape.voxels() + voxel_index(z, y, x);
  }

  double& at(int c, int z, int y, int x) { return data[static_cast<std::size_t>(index(c, z, y, x))]; }
  double at(int c, int z, int y, int x) const { return data[static_cast<std::size_t>(index(c, z, y, x))]; }

  void validate() const {
    shape.validate();
    if (data.size() != static_cast<std::size_t>(shape.values())) {
      fail(errc::bad_argument, "field payload length does not match its shape");
    }
    for (double v : data) {
      if (!std::isfinite(v)) fail(errc::non_finite, "field contains a non-finite value");
    }
  }
};

enum class LabelSemantics : std::uint8_t {
  bv_labels,          // 0 background, 1..18 segment ids on bronchovascular voxels
  lobe_labels,        // 0 background, 1..5 lobe ids
  segment_partition,  // 0 background, 1..18 segment ids, dense partitions
};

inline int class_count(LabelSemantics s) { return s == LabelSemantics::lobe_labels ? 6 : 19; }

inline const char* semantics_name(LabelSemantics s) {
  switch (s) {
    case LabelSemantics::bv_labels: return "bv_labels";
    case LabelSemantics::lobe_labels: return "lobe_labels";
    case LabelSemantics::segment_partition: return "segment_partition";
  }
  return "bv_labels";
}

/// Dense D x H x W categorical grid (channels fixed to 1).
struct LabelVolume {
  GridShape shape;
  LabelSemantics semantics = LabelSemantics::segment_partition;
  std::vector<std::uint8_t> data;

  static LabelVolume zeros(GridShape s, LabelSemantics sem) {
    s.channels = 1;
    s.validate();
    LabelVolume v;
    v.shape = s;
    v.semantics = sem;
    v.data.assign(static_cast<std::size_t>(s.voxels()), 0);
    return v;
  }

  std::int64_t index(int z, int y, int x) const {
    return (static_cast<std::int64_t>(z) * shape.height + y) * shape.width + x;
  }
  std::uint8_t& at(int z, int y, int x) { return data[static_cast<std::size_t>(index(z, y, x))]; }
  std::uint8_t at(int z, int y, int x) const { return data[static_cast<std::size_t>(index(z, y, x))]; }

  void validate() const {
    shape.validate();
    if (shape.channels != 1) fail(errc::bad_argument, "label volumes have exactly one channel");
    if (data.size() != static_cast<std::size_t>(shape.voxels())) {
      fail(errc::bad_argument, "label payload length does not match its shape");
    }
    const int limit = class_count(semantics);
    for (std::uint8_t id : data) {
      if (id >= limit) {
        fail(errc::inconsistent_labels,
             "label id " + std::to_string(int(id)) + " out of range for semantics " +
                 semantics_name(semantics));
      }
    }
  }
};

class ProbabilityField;
ProbabilityField softmax_channels(const ScalarField4D& logits);

/// A ScalarField4D whose per-voxel channel values are nonnegative and sum
/// to 1 within 1e-5. Construction either validates or comes straight from
/// softmax_channels, which normalizes by construction.
class ProbabilityField {
 public:
  static ProbabilityField validated(ScalarField4D f) {
    f.validate();
    const std::int64_t vox = f.shape.voxels();
    const int ch = f.shape.channels;
    for (std::int64_t v = 0; v < vox; ++v) {
      double sum = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double p = f.data[static_cast<std::size_t>(c) * vox + v];
        if (p < 0.0) fail(errc::bad_argument, "probability field has a negative value");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-5) {
        fail(errc::bad_argument,
             "probability field voxel " + std::to_string(v) + " sums to " + std::to_string(sum));
      }
    }
    return ProbabilityField(std::move(f));
  }

  const ScalarField4D& field() const { return field_; }
  const GridShape& shape() const { return field_.shape; }

 private:
  explicit ProbabilityField(ScalarField4D f) : field_(std::move(f)) {}
  friend ProbabilityField softmax_channels(const ScalarField4D& logits);

  ScalarField4D field_;
};

/// Per-voxel softmax over channels with max subtraction.
inline ProbabilityField softmax_channels(const ScalarField4D& logits) {
  logits.shape.validate();
  if (logits.shape.channels < 2) fail(errc::bad_argument, "softmax needs at least 2 channels");
  if (logits.data.size() != static_cast<std::size_t>(logits.shape.values())) {
    fail(errc::bad_argument, "field payload length does not match its shape");
  }
  for (double v : logits.data) {
    if (!std::isfinite(v)) fail(errc::non_finite, "softmax input contains a non-finite value");
  }

  ScalarField4D out = ScalarField4D::zeros(logits.shape);
  const std::int64_t vox = logits.shape.voxels();
  const int ch = logits.shape.channels;
  const double* in = logits.data.data();
  double* dst = out.data.data();
  parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
    for (std::int64_t v = v0; v < v1; ++v) {
      double m = in[v];
      for (int c = 1; c < ch; ++c) m = std::max(m, in[static_cast<std::size_t>(c) * vox + v]);
      double denom = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double e = std::exp(in[static_cast<std::size_t>(c) * vox + v] - m);
        dst[static_cast<std::size_t>(c) * vox + v] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (int c = 0; c < ch; ++c) dst[static_cast<std::size_t>(c) * vox + v] *= inv;
    }
  });
  return ProbabilityField(std::move(out));
}

/// Per-voxel channel argmax; ties go to the lowest channel index.
inline LabelVolume argmax_labels(const ProbabilityField& probs) {
  const GridShape& s = probs.shape();
  const LabelSemantics sem =
      s.channels == 6 ? LabelSemantics::lobe_labels : LabelSemantics::segment_partition;
  if (s.channels > class_count(sem)) {
    fail(errc::bad_argument, "too many channels for a label volume");
  }
  GridShape ls = s;
  ls.channels = 1;
  LabelVolume out = LabelVolume::zeros(ls, sem);
  const std::int64_t vox = s.voxels();
  const double* p = probs.field().data.data();
  std::uint8_t* dst = out.data.data();
  parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
    for (std::int64_t v = v0; v < v1; ++v) {
      int best = 0;
      double best_p = p[v];
      for (int c = 1; c < s.channels; ++c) {
        const double val = p[static_cast<std::size_t>(c) * vox + v];
        if (val > best_p) {
          best_p = val;
          best = c;
        }
      }
      dst[v] = static_cast<std::uint8_t>(best);
    }
  });
  return out;
}

}  // namespace ahsl
