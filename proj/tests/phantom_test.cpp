#include <gtest/gtest.h>

#include "ahsl/ahsl.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ahsl;

TEST(Phantom, DefaultBundleSatisfiesItsInvariants) {
  const auto& h = hierarchy();
  const PhantomBundle bundle = generate_phantom(PhantomSpec{}, h);

  // every tube voxel lies inside its segment's lobe
  for (std::size_t v = 0; v < bundle.bv.data.size(); ++v) {
    const int seg = bundle.bv.data[v];
    if (seg == 0) continue;
    EXPECT_EQ(h.lobe_of(seg), bundle.lobe.data[v]);
  }

  // derive_regions succeeds and every member segment has tube voxels
  const RegionPartition r = derive_regions(bundle.bv, bundle.lobe, h);
  EXPECT_EQ(r.bv_classes_present.size(), 18u);

  // GT is zero exactly outside the lobes and lobe-consistent inside
  for (std::size_t v = 0; v < bundle.gt.data.size(); ++v) {
    const int lobe_id = bundle.lobe.data[v];
    const int gt = bundle.gt.data[v];
    if (lobe_id == 0) {
      EXPECT_EQ(gt, 0);
    } else {
      ASSERT_GT(gt, 0);
      EXPECT_EQ(h.lobe_of(gt), lobe_id);
    }
  }

  // GT covers the bronchovascular voxels with their own labels
  for (std::size_t v = 0; v < bundle.bv.data.size(); ++v) {
    if (bundle.bv.data[v] != 0) EXPECT_EQ(bundle.gt.data[v], bundle.bv.data[v]);
  }
  EXPECT_EQ(mapped_dice(bundle.gt, bundle.bv).mean, 1.0);
  EXPECT_EQ(lobe_consistency(bundle.gt, r, h), 1.0);

  // skeletons exist for all 18 segments
  EXPECT_EQ(bundle.skeletons.size(), 18u);
}

TEST(Phantom, SmallestAllowedGridStillFitsAllSegments) {
  PhantomSpec spec;
  spec.depth = spec.height = spec.width = 24;
  for (std::uint64_t seed : {1ull, 7ull, 42ull, 1234ull}) {
    spec.seed = seed;
    const PhantomBundle bundle = generate_phantom(spec, hierarchy());
    const RegionPartition r = derive_regions(bundle.bv, bundle.lobe, hierarchy());
    EXPECT_EQ(r.bv_classes_present.size(), 18u) << "seed " << seed;
  }
}

TEST(Phantom, DeterministicPerSeedAndDistinctAcrossSeeds) {
  PhantomSpec spec;
  spec.depth = spec.height = spec.width = 24;
  const PhantomBundle a = generate_phantom(spec, hierarchy());
  const PhantomBundle b = generate_phantom(spec, hierarchy());
  EXPECT_EQ(a.bv.data, b.bv.data);
  EXPECT_EQ(a.lobe.data, b.lobe.data);
  EXPECT_EQ(a.gt.data, b.gt.data);
  ASSERT_EQ(a.skeletons.size(), b.skeletons.size());
  for (const auto& [seg, lines] : a.skeletons) {
    EXPECT_EQ(lines, b.skeletons.at(seg));
  }

  spec.seed = 43;
  const PhantomBundle c = generate_phantom(spec, hierarchy());
  EXPECT_NE(a.bv.data, c.bv.data);
}

TEST(Phantom, RejectsUndersizedSpecs) {
  PhantomSpec spec;
  spec.depth = 16;
  EXPECT_THROW(generate_phantom(spec, hierarchy()), Error);
  spec = PhantomSpec{};
  spec.tube_radius = 0.5;
  EXPECT_THROW(generate_phantom(spec, hierarchy()), Error);
  spec = PhantomSpec{};
  spec.lobe_recipe = "one-big-box";
  EXPECT_THROW(generate_phantom(spec, hierarchy()), Error);
}

TEST(SynthesizeGt, SingleTreeClaimsTheWholeLobe) {
  const auto shape = testsupport::grid(1, 8, 8, 8);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  for (int z = 2; z < 6; ++z) {
    for (int y = 2; y < 6; ++y) {
      for (int x = 2; x < 6; ++x) lobe.at(z, y, x) = 4;
    }
  }
  bv.at(3, 3, 3) = 12;  // lone RS4 voxel
  const LabelVolume gt = synthesize_gt_by_distance(bv, lobe, hierarchy());
  for (int z = 0; z < 8; ++z) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        EXPECT_EQ(gt.at(z, y, x), lobe.at(z, y, x) == 4 ? 12 : 0);
      }
    }
  }
}

TEST(SynthesizeGt, TwoSeedsSplitOnTheMidplaneWithLowIdTieBreak) {
  const auto shape = testsupport::grid(1, 9, 9, 9);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  for (int z = 0; z < 9; ++z) {
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 9; ++x) lobe.at(z, y, x) = 4;
    }
  }
  bv.at(4, 4, 2) = 12;  // RS4
  bv.at(4, 4, 6) = 13;  // RS5
  const LabelVolume gt = synthesize_gt_by_distance(bv, lobe, hierarchy());
  const LabelVolume expect = oracle::nearest_seed_partition(bv, lobe, hierarchy());
  EXPECT_EQ(gt.data, expect.data);
  EXPECT_EQ(gt.at(4, 4, 4), 12);  // equidistant midplane goes to the lower id
  EXPECT_EQ(gt.at(0, 0, 4), 12);
  EXPECT_EQ(gt.at(4, 4, 5), 13);
}

TEST(SynthesizeGt, MatchesBruteForceOracleOnRandomRegions) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto vols = testsupport::random_region(900 + seed, 16, 16, 16, 3);
    const LabelVolume gt = synthesize_gt_by_distance(vols.bv, vols.lobe, hierarchy());
    const LabelVolume expect = oracle::nearest_seed_partition(vols.bv, vols.lobe, hierarchy());
    EXPECT_EQ(gt.data, expect.data) << "seed " << seed;
  }
}

TEST(SynthesizeGt, MatchesBruteForceOracleOnAPhantom) {
  PhantomSpec spec;
  spec.depth = spec.height = spec.width = 24;
  const PhantomBundle bundle = generate_phantom(spec, hierarchy());
  const LabelVolume expect = oracle::nearest_seed_partition(bundle.bv, bundle.lobe, hierarchy());
  EXPECT_EQ(bundle.gt.data, expect.data);
}

TEST(SynthesizeGt, AnisotropicSpacingChangesTheWinner) {
  ahsl::GridShape shape = testsupport::grid(1, 5, 5, 9);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  for (auto& v : lobe.data) v = 4;
  bv.at(2, 2, 1) = 12;
  bv.at(2, 2, 7) = 13;
  // with unit spacing, x = 3 is closer to the RS4 seed
  LabelVolume gt = synthesize_gt_by_distance(bv, lobe, hierarchy());
  EXPECT_EQ(gt.at(2, 2, 3), 12);

  // squeeze x so that a z-offset seed competes differently; spacing-squared
  // values stay integers, which keeps the comparison exact
  ahsl::GridShape aniso = shape;
  aniso.spacing = {2.0, 1.0, 1.0};
  auto lobe2 = LabelVolume::zeros(aniso, LabelSemantics::lobe_labels);
  auto bv2 = LabelVolume::zeros(aniso, LabelSemantics::bv_labels);
  for (auto& v : lobe2.data) v = 4;
  bv2.at(2, 2, 1) = 12;
  bv2.at(0, 2, 4) = 13;  // 2 z-steps from the midrow
  const LabelVolume gt2 = synthesize_gt_by_distance(bv2, lobe2, hierarchy());
  const LabelVolume expect2 = oracle::nearest_seed_partition(bv2, lobe2, hierarchy());
  EXPECT_EQ(gt2.data, expect2.data);
  // at (2,2,4): RS4 distance 3^2 = 9, RS5 distance (2*2)^2 = 16 -> RS4 wins
  EXPECT_EQ(gt2.at(2, 2, 4), 12);
}

TEST(SynthesizeGt, TranslationInsideTheGridInteriorCommutes) {
  const auto shape = testsupport::grid(1, 12, 12, 12);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  for (int z = 2; z < 7; ++z) {
    for (int y = 2; y < 7; ++y) {
      for (int x = 2; x < 7; ++x) lobe.at(z, y, x) = 5;
    }
  }
  bv.at(3, 3, 3) = 14;
  bv.at(5, 5, 5) = 16;
  const LabelVolume gt = synthesize_gt_by_distance(bv, lobe, hierarchy());

  const int dz = 1, dy = 2, dx = 1;
  auto lobe_t = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  auto bv_t = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  for (int z = 0; z < 12; ++z) {
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) {
        if (z + dz < 12 && y + dy < 12 && x + dx < 12) {
          lobe_t.at(z + dz, y + dy, x + dx) = lobe.at(z, y, x);
          bv_t.at(z + dz, y + dy, x + dx) = bv.at(z, y, x);
        }
      }
    }
  }
  const LabelVolume gt_t = synthesize_gt_by_distance(bv_t, lobe_t, hierarchy());
  for (int z = 0; z < 11; ++z) {
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 11; ++x) {
        EXPECT_EQ(gt_t.at(z + dz, y + dy, x + dx), gt.at(z, y, x));
      }
    }
  }
}

TEST(SynthesizeGt, LobeWithoutSeedsIsAnError) {
  const auto shape = testsupport::grid(1, 6, 6, 6);
  auto lobe = LabelVolume::zeros(shape, LabelSemantics::lobe_labels);
  auto bv = LabelVolume::zeros(shape, LabelSemantics::bv_labels);
  for (int x = 0; x < 3; ++x) lobe.at(2, 2, x) = 4;
  for (int x = 3; x < 6; ++x) lobe.at(2, 2, x) = 5;
  bv.at(2, 2, 4) = 14;  // RS6 seeds RightLower; RightMiddle has none
  try {
    synthesize_gt_by_distance(bv, lobe, hierarchy());
    FAIL() << "expected empty_region";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::empty_region);
    EXPECT_NE(std::string(e.what()).find("RightMiddle"), std::string::npos);
  }
}
