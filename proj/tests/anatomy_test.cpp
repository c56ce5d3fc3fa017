#include <array>
#include <set>

#include <gtest/gtest.h>

#include "ahsl/ahsl.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ahsl;

TEST(Hierarchy, MatchesTheAnatomyTable) {
  const auto& h = hierarchy();
  EXPECT_EQ(AnatomyHierarchy::kSegmentCount, 18);
  EXPECT_EQ(AnatomyHierarchy::kLobeCount, 5);

  auto names = [&](int lobe) {
    std::vector<std::string> out;
    for (auto s : h.members_of(lobe)) out.push_back(h.segment_name(s));
    return out;
  };
  EXPECT_EQ(names(1), (std::vector<std::string>{"LS1/2", "LS3", "LS4", "LS5"}));
  EXPECT_EQ(names(2), (std::vector<std::string>{"LS6", "LS7/8", "LS9", "LS10"}));
  EXPECT_EQ(names(3), (std::vector<std::string>{"RS1", "RS2", "RS3"}));
  EXPECT_EQ(names(4), (std::vector<std::string>{"RS4", "RS5"}));
  EXPECT_EQ(names(5), (std::vector<std::string>{"RS6", "RS7", "RS8", "RS9", "RS10"}));

  EXPECT_STREQ(h.lobe_name(1), "LeftUpper");
  EXPECT_STREQ(h.lobe_name(4), "RightMiddle");
  EXPECT_STREQ(h.lobe_name(h.lobe_of(5)), "LeftLower");  // LS6

  // disjointness + coverage
  std::set<int> all;
  for (int l = 1; l <= 5; ++l) {
    for (auto s : h.members_of(l)) EXPECT_TRUE(all.insert(s).second);
  }
  EXPECT_EQ(all.size(), 18u);
  EXPECT_EQ(*all.begin(), 1);
  EXPECT_EQ(*all.rbegin(), 18);
}

TEST(Hierarchy, RegistryJsonListsEveryClass) {
  const auto registry = hierarchy().registry_json();
  ASSERT_TRUE(registry.is_array());
  EXPECT_EQ(registry.size(), 23u);
  int segments = 0, lobes = 0;
  for (const auto& entry : registry) {
    ASSERT_TRUE(entry.contains("id"));
    ASSERT_TRUE(entry.contains("name"));
    if (entry["level"] == "segment") {
      ++segments;
      EXPECT_TRUE(entry.contains("lobe_of"));
    } else {
      EXPECT_EQ(entry["level"], "lobe");
      ++lobes;
    }
  }
  EXPECT_EQ(segments, 18);
  EXPECT_EQ(lobes, 5);
}

TEST(DeriveRegions, EmptyInputsAreAllBackground) {
  const auto shape = testsupport::grid(1, 3, 3, 3);
  const auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  const auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  const RegionPartition r = derive_regions(bv, lobe, hierarchy());
  for (auto tag : r.tag) EXPECT_EQ(tag, RegionTag::background);
  EXPECT_EQ(r.bv_total, 0);
  EXPECT_EQ(r.lobe_voxels, 0);
}

TEST(DeriveRegions, TagsTargetsAndConsistency) {
  const auto shape = testsupport::grid(1, 3, 3, 3);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  lobe.at(1, 1, 1) = 4;  // RightMiddle
  lobe.at(1, 1, 2) = 4;
  bv.at(1, 1, 1) = 12;  // RS4 belongs to RightMiddle

  const RegionPartition r = derive_regions(bv, lobe, hierarchy());
  const auto v = bv.index(1, 1, 1);
  EXPECT_EQ(r.tag[static_cast<std::size_t>(v)], RegionTag::bronchovascular);
  EXPECT_EQ(r.segment_target[static_cast<std::size_t>(v)], 12);
  EXPECT_EQ(r.lobe_target[static_cast<std::size_t>(v)], 4);
  const auto u = bv.index(1, 1, 2);
  EXPECT_EQ(r.tag[static_cast<std::size_t>(u)], RegionTag::lobe);
  EXPECT_EQ(r.lobe_target[static_cast<std::size_t>(u)], 4);
  EXPECT_EQ(r.bv_total, 1);
  EXPECT_EQ(r.bv_classes_present, std::vector<int>{12});

  // exactly one tag per voxel, and counts add up
  std::int64_t b = 0, bvc = 0, l = 0;
  for (auto tag : r.tag) {
    b += tag == RegionTag::background;
    bvc += tag == RegionTag::bronchovascular;
    l += tag == RegionTag::lobe;
  }
  EXPECT_EQ(b + bvc + l, shape.voxels());
  EXPECT_EQ(bvc, 1);
  EXPECT_EQ(l, 1);
}

TEST(DeriveRegions, RejectsHierarchyViolations) {
  const auto shape = testsupport::grid(1, 2, 2, 2);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  lobe.at(0, 0, 1) = 1;  // LeftUpper
  bv.at(0, 0, 1) = 12;   // RS4 belongs to RightMiddle
  EXPECT_THROW(
      {
        try {
          derive_regions(bv, lobe, hierarchy());
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), errc::inconsistent_labels);
          EXPECT_NE(std::string(e.what()).find("(0,0,1)"), std::string::npos);
          throw;
        }
      },
      Error);

  // BV voxel on background lobe is just as inconsistent
  lobe.at(0, 0, 1) = 0;
  EXPECT_THROW(derive_regions(bv, lobe, hierarchy()), Error);
}

TEST(LobeProbability, UniformFieldAndWitnessTieBreak) {
  ScalarField4D logits = ScalarField4D::zeros(testsupport::grid(19, 2, 2, 2));
  const ProbabilityField p = softmax_channels(logits);
  const LobeProbabilityField q = lobe_probability(p, hierarchy());
  const std::int64_t vox = q.field.shape.voxels();
  for (std::int64_t v = 0; v < vox; ++v) {
    for (int l = 0; l <= 5; ++l) {
      EXPECT_NEAR(q.field.data[static_cast<std::size_t>(l) * vox + v], 1.0 / 19.0, 1e-15);
    }
    for (int l = 1; l <= 5; ++l) {
      EXPECT_EQ(q.witness[static_cast<std::size_t>(l - 1) * vox + v],
                hierarchy().members_of(l).front());
    }
  }
}

TEST(LobeProbability, DominantMemberWins) {
  ScalarField4D f = ScalarField4D::zeros(testsupport::grid(19, 1, 1, 1));
  f.data[12] = 0.7;  // RS4
  f.data[13] = 0.1;  // RS5
  const LobeProbabilityField q = lobe_probability(f, hierarchy());
  EXPECT_DOUBLE_EQ(q.field.data[4], 0.7);  // RightMiddle channel
  EXPECT_EQ(q.witness[3], 12);
}

TEST(LobeProbability, MatchesBruteForceMaxEverywhere) {
  const GridShape s = testsupport::grid(19, 4, 4, 4);
  const ProbabilityField p = testsupport::random_probs(s, 33);
  const LobeProbabilityField q = lobe_probability(p, hierarchy());
  const std::int64_t vox = s.voxels();
  for (std::int64_t v = 0; v < vox; ++v) {
    EXPECT_EQ(q.field.data[static_cast<std::size_t>(v)], p.field().data[static_cast<std::size_t>(v)]);
    double sum6 = 0.0;
    for (int l = 1; l <= 5; ++l) {
      const double expect = oracle::lobe_max(p.field(), l, v, hierarchy());
      const double got = q.field.data[static_cast<std::size_t>(l) * vox + v];
      EXPECT_EQ(got, expect);
      // witness channel attains the max exactly
      const int w = q.witness[static_cast<std::size_t>(l - 1) * vox + v];
      EXPECT_EQ(p.field().data[static_cast<std::size_t>(w) * vox + v], got);
      sum6 += got;
    }
    sum6 += q.field.data[static_cast<std::size_t>(v)];
    EXPECT_LE(sum6, 1.0 + 1e-5);
  }
}

TEST(LobesOfSegments, MapsIdsThroughTheHierarchy) {
  auto seg = LabelVolume::zeros(testsupport::grid(1, 1, 1, 4), LabelSemantics::segment_partition);
  seg.data = {0, 15, 1, 13};  // background, RS7, LS1/2, RS5
  const LabelVolume lobes = lobes_of_segments(seg, hierarchy());
  EXPECT_EQ(lobes.semantics, LabelSemantics::lobe_labels);
  EXPECT_EQ(lobes.data[0], 0);
  EXPECT_EQ(lobes.data[1], 5);  // RightLower
  EXPECT_EQ(lobes.data[2], 1);  // LeftUpper
  EXPECT_EQ(lobes.data[3], 4);  // RightMiddle
}

TEST(LobesOfSegments, DefinesLobeConsistencyOnRandomRegions) {
  const auto region = testsupport::random_region(5, 10, 10, 10);
  const RegionPartition r = derive_regions(region.bv, region.lobe, hierarchy());

  // a partition that assigns every in-lobe voxel a member of its lobe
  LabelVolume pred = LabelVolume::zeros(r.shape, LabelSemantics::segment_partition);
  for (std::size_t v = 0; v < pred.data.size(); ++v) {
    const int l = r.lobe_target[v];
    if (l != 0) pred.data[v] = hierarchy().members_of(l).back();
  }
  EXPECT_EQ(lobe_consistency(pred, r, hierarchy()), 1.0);

  // lobes_of_segments(pred) restricted to tagged voxels equals the targets
  const LabelVolume mapped = lobes_of_segments(pred, hierarchy());
  for (std::size_t v = 0; v < mapped.data.size(); ++v) {
    if (r.tag[v] != RegionTag::background) EXPECT_EQ(mapped.data[v], r.lobe_target[v]);
  }
}
