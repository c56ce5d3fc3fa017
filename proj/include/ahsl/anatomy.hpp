#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahsl/error.hpp"
#include "ahsl/parallel.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

/// The fixed lobe/segment containment map of the human lung: 5 lobes, 18
/// segments, id 0 reserved for background at both levels. Ids are stable
/// across versions.
struct AnatomyHierarchy {
  static constexpr int kSegmentCount = 18;
  static constexpr int kLobeCount = 5;

  std::array<const char*, 19> segment_names{
      "background", "LS1/2", "LS3", "LS4", "LS5", "LS6", "LS7/8", "LS9", "LS10",
      "RS1", "RS2", "RS3", "RS4", "RS5", "RS6", "RS7", "RS8", "RS9", "RS10"};
  std::array<const char*, 6> lobe_names{"background", "LeftUpper",  "LeftLower",
                                        "RightUpper", "RightMiddle", "RightLower"};
  // members[l] = ascending segment ids contained in lobe l.
  std::array<std::vector<std::uint8_t>, 6> members{{
      {},
      {1, 2, 3, 4},           // LeftUpper
      {5, 6, 7, 8},           // LeftLower
      {9, 10, 11},            // RightUpper
      {12, 13},               // RightMiddle
      {14, 15, 16, 17, 18},   // RightLower
  }};

  int lobe_of(int segment_id) const {
    if (segment_id < 1 || segment_id > kSegmentCount) return 0;
    for (int l = 1; l <= kLobeCount; ++l) {
      for (std::uint8_t s : members[static_cast<std::size_t>(l)]) {
        if (s == segment_id) return l;
      }
    }
    return 0;
  }

  std::span<const std::uint8_t> members_of(int lobe_id) const {
    if (lobe_id < 1 || lobe_id > kLobeCount) fail(errc::out_of_range, "lobe id out of range");
    return members[static_cast<std::size_t>(lobe_id)];
  }

  const char* segment_name(int id) const {
    if (id < 0 || id > kSegmentCount) fail(errc::out_of_range, "segment id out of range");
    return segment_names[static_cast<std::size_t>(id)];
  }
  const char* lobe_name(int id) const {
    if (id < 0 || id > kLobeCount) fail(errc::out_of_range, "lobe id out of range");
    return lobe_names[static_cast<std::size_t>(id)];
  }

  /// Flat class-id registry for downstream tooling.
  nlohmann::json registry_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (int s = 1; s <= kSegmentCount; ++s) {
      out.push_back({{"id", s},
                     {"name", segment_name(s)},
                     {"level", "segment"},
                     {"lobe_of", lobe_name(lobe_of(s))}});
    }
    for (int l = 1; l <= kLobeCount; ++l) {
      out.push_back({{"id", l}, {"name", lobe_name(l)}, {"level", "lobe"}});
    }
    return out;
  }

  void self_check() const {
    std::array<int, 19> seen{};
    std::size_t total = 0;
    for (int l = 1; l <= kLobeCount; ++l) {
      for (std::uint8_t s : members[static_cast<std::size_t>(l)]) {
        if (s < 1 || s > kSegmentCount || seen[s]++) {
          fail(errc::inconsistent_labels, "lobe memberships must be disjoint and in 1..18");
        }
        ++total;
      }
    }
    if (total != kSegmentCount) {
      fail(errc::inconsistent_labels, "lobe memberships must cover all 18 segments");
    }
  }
};

/// The shared hierarchy constant; membership coverage is checked on first use.
inline const AnatomyHierarchy& hierarchy() {
  static const AnatomyHierarchy h = [] {
    AnatomyHierarchy built;
    built.self_check();
    return built;
  }();
  return h;
}

enum class RegionTag : std::uint8_t {
  background = 0,       // B
  bronchovascular = 1,  // BV
  lobe = 2,             // L
};

/// Per-voxel supervision targets: every voxel carries exactly one region
/// tag; BV voxels carry a segment target consistent with their lobe target.
struct RegionPartition {
  GridShape shape;  // channels == 1
  std::vector<RegionTag> tag;
  std::vector<std::uint8_t> segment_target;  // 1..18 on BV, else 0
  std::vector<std::uint8_t> lobe_target;     // 1..5 on BV and L, 0 on B

  std::array<std::int64_t, 19> bv_class_count{};
  std::int64_t bv_total = 0;
  std::vector<int> bv_classes_present;  // ascending segment ids with >= 1 BV voxel
  std::int64_t lobe_voxels = 0;         // count of tag == lobe
};

/// Builds the B/BV/L partition from bronchovascular and lobe label volumes.
/// A BV voxel must sit inside the lobe its segment belongs to.
inline RegionPartition derive_regions(const LabelVolume& bv, const LabelVolume& lobe,
                                      const AnatomyHierarchy& h) {
  bv.validate();
  lobe.validate();
  if (bv.semantics == LabelSemantics::lobe_labels) {
    fail(errc::bad_argument, "bv volume must carry segment-level labels");
  }
  if (lobe.semantics != LabelSemantics::lobe_labels) {
    fail(errc::bad_argument, "lobe volume must carry lobe-level labels");
  }
  if (!bv.shape.same_grid(lobe.shape)) {
    fail(errc::bad_argument, "bv and lobe volumes must share one grid");
  }

  RegionPartition r;
  r.shape = bv.shape;
  const std::int64_t vox = r.shape.voxels();
  r.tag.assign(static_cast<std::size_t>(vox), RegionTag::background);
  r.segment_target.assign(static_cast<std::size_t>(vox), 0);
  r.lobe_target.assign(static_cast<std::size_t>(vox), 0);

  for (std::int64_t v = 0; v < vox; ++v) {
    const int seg = bv.data[static_cast<std::size_t>(v)];
    const int lob = lobe.data[static_cast<std::size_t>(v)];
    if (seg > 0) {
      if (lob == 0 || h.lobe_of(seg) != lob) {
        const int z = static_cast<int>(v / (static_cast<std::int64_t>(r.shape.height) * r.shape.width));
        const int rem = static_cast<int>(v % (static_cast<std::int64_t>(r.shape.height) * r.shape.width));
        fail(errc::inconsistent_labels,
             "bv voxel (" + std::to_string(z) + "," + std::to_string(rem / r.shape.width) + "," +
                 std::to_string(rem % r.shape.width) + ") labeled " + h.segment_name(seg) +
                 " lies in lobe label " + std::to_string(lob) + " but belongs to " +
                 h.lobe_name(h.lobe_of(seg)));
      }
      r.tag[static_cast<std::size_t>(v)] = RegionTag::bronchovascular;
      r.segment_target[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(seg);
      r.lobe_target[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(lob);
      ++r.bv_class_count[static_cast<std::size_t>(seg)];
      ++r.bv_total;
    } else if (lob > 0) {
      r.tag[static_cast<std::size_t>(v)] = RegionTag::lobe;
      r.lobe_target[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(lob);
      ++r.lobe_voxels;
    }
  }
  for (int s = 1; s <= AnatomyHierarchy::kSegmentCount; ++s) {
    if (r.bv_class_count[static_cast<std::size_t>(s)] > 0) r.bv_classes_present.push_back(s);
  }
  return r;
}

/// 6-channel lobe-level field: channel 0 copies the source background
/// channel, channel l is the max over lobe l's member segment channels.
/// The witness records which member attained each max (lowest id on ties)
/// so gradients can be routed back through the reduction.
struct LobeProbabilityField {
  ScalarField4D field;                 // 6 x D x H x W
  std::vector<std::uint8_t> witness;   // 5 * voxels, lobes 1..5 in order
};

inline LobeProbabilityField lobe_probability(const ScalarField4D& p, const AnatomyHierarchy& h) {
  if (p.shape.channels != 19) fail(errc::bad_argument, "lobe reduction expects 19 channels");
  GridShape qs = p.shape;
  qs.channels = 6;
  LobeProbabilityField q;
  q.field = ScalarField4D::zeros(qs);
  const std::int64_t vox = p.shape.voxels();
  q.witness.assign(static_cast<std::size_t>(5 * vox), 0);

  const double* src = p.data.data();
  double* dst = q.field.data.data();
  std::uint8_t* wit = q.witness.data();
  parallel_for(vox, [&](std::int64_t v0, std::int64_t v1) {
    for (std::int64_t v = v0; v < v1; ++v) {
      dst[v] = src[v];  // background channel
      for (int l = 1; l <= AnatomyHierarchy::kLobeCount; ++l) {
        const auto& mem = h.members[static_cast<std::size_t>(l)];
        int best = mem[0];
        double best_p = src[static_cast<std::size_t>(mem[0]) * vox + v];
        for (std::size_t i = 1; i < mem.size(); ++i) {
          const double val = src[static_cast<std::size_t>(mem[i]) * vox + v];
          if (val > best_p) {
            best_p = val;
            best = mem[i];
          }
        }
        dst[static_cast<std::size_t>(l) * vox + v] = best_p;
        wit[static_cast<std::size_t>(l - 1) * vox + v] = static_cast<std::uint8_t>(best);
      }
    }
  });
  return q;
}

inline LobeProbabilityField lobe_probability(const ProbabilityField& p, const AnatomyHierarchy& h) {
  return lobe_probability(p.field(), h);
}

/// Maps a segment partition to lobe labels (0 stays 0).
inline LabelVolume lobes_of_segments(const LabelVolume& seg, const AnatomyHierarchy& h) {
  seg.validate();
  if (seg.semantics == LabelSemantics::lobe_labels) {
    fail(errc::bad_argument, "input already carries lobe labels");
  }
  LabelVolume out = LabelVolume::zeros(seg.shape, LabelSemantics::lobe_labels);
  std::array<std::uint8_t, 19> map{};
  for (int s = 1; s <= AnatomyHierarchy::kSegmentCount; ++s) {
    map[static_cast<std::size_t>(s)] = static_cast<std::uint8_t>(h.lobe_of(s));
  }
  for (std::size_t v = 0; v < seg.data.size(); ++v) out.data[v] = map[seg.data[v]];
  return out;
}

}  // namespace ahsl
