#include <gtest/gtest.h>

#include "sisr3d/degrade.hpp"
#include "support.hpp"

using namespace sisr3d;

TEST(Degrade, DecimateKeepsEveryScaleThSlice) {
  const auto v = testing_support::random_normalized({8, 3, 3}, 5);
  const auto lr = axial_decimate(v, 4);
  EXPECT_EQ(lr.dims(), (Dims3{2, 3, 3}));
  EXPECT_DOUBLE_EQ(lr.spacing().z, 4.0 * v.spacing().z);
  EXPECT_EQ(lr.at(1, 2, 1), v.at(4, 2, 1));
  EXPECT_THROW(axial_decimate(v, 3), ArgumentError);
}

TEST(Degrade, DecimateAfterSameInsertionIsIdentity) {
  const auto v = testing_support::random_normalized({5, 4, 3}, 6);
  for (std::int64_t s : {2, 4, 8}) {
    const auto up = upsample_same_insertion(v, s);
    EXPECT_EQ(up.dims().d, 5 * s);
    EXPECT_EQ(up.at(s + 1, 2, 2), v.at(1, 2, 2));
    EXPECT_EQ(axial_decimate(up, s), v);
  }
}

TEST(Degrade, TrilinearUpsamplePreservesConstantsAndInterpolates) {
  const auto c = upsample_trilinear_axial(Volume::filled({3, 2, 2}, 0.37f, IntensityDomain::Normalized), 4);
  for (float x : c.voxels()) EXPECT_EQ(x, 0.37f);

  auto ramp = Volume::filled({2, 1, 1}, 0.0f, IntensityDomain::Normalized);
  ramp.voxels() = {0.0f, 1.0f};
  const auto up = upsample_trilinear_axial(ramp, 2);
  ASSERT_EQ(up.dims().d, 4);
  EXPECT_NEAR(up.voxels()[0], 0.0f, 1e-7);
  EXPECT_NEAR(up.voxels()[1], 0.25f, 1e-7);
  EXPECT_NEAR(up.voxels()[2], 0.75f, 1e-7);
  EXPECT_NEAR(up.voxels()[3], 1.0f, 1e-7);
  EXPECT_THROW(upsample_trilinear_axial(Volume::filled({1, 2, 2}, 0.0f), 2), ArgumentError);
}

TEST(Degrade, PairShapesAndDomains) {
  const auto hu = generate_phantom(3, {21, 16, 16}, PhantomKind::spheres);
  for (auto mode : {UpsampleMode::same_insertion, UpsampleMode::trilinear}) {
    const auto p = make_lr_hr_pair(hu, {4, mode, 8});
    EXPECT_EQ(p.lr.dims(), p.hr.dims());
    EXPECT_EQ(p.hr.dims().d, 16);
    EXPECT_EQ(p.lr.domain(), IntensityDomain::Normalized);
    EXPECT_EQ(p.hr.domain(), IntensityDomain::Normalized);
    EXPECT_EQ(p.hr, clip_normalize(truncate_slices(hu, 8)));
  }
  const auto ins = make_lr_hr_pair(hu, {2, UpsampleMode::same_insertion, 2});
  EXPECT_EQ(axial_decimate(ins.lr, 2), axial_decimate(ins.hr, 2));
}

TEST(Degrade, ConstantsAreFixedPoints) {
  for (float hu : {-1024.0f, -300.0f, 0.0f, 40.0f, 1476.0f}) {
    const auto v = Volume::filled({16, 4, 4}, hu);
    for (int s : {2, 4, 8})
      for (auto mode : {UpsampleMode::same_insertion, UpsampleMode::trilinear}) {
        const auto p = make_lr_hr_pair(v, {s, mode, 4});
        EXPECT_EQ(p.lr, p.hr) << "hu " << hu << " scale " << s;
      }
  }
}

TEST(Degrade, Errors) {
  const auto v = Volume::filled({8, 4, 4}, 0.0f);
  EXPECT_THROW(make_lr_hr_pair(v, {3, UpsampleMode::trilinear, 1}), ArgumentError);
  EXPECT_THROW(make_lr_hr_pair(clip_normalize(v), {2, UpsampleMode::trilinear, 1}), StateError);
  EXPECT_THROW(make_lr_hr_pair(Volume::filled({4, 4, 4}, 0.0f), {8, UpsampleMode::trilinear, 1}), ArgumentError);
  EXPECT_NO_THROW(make_lr_hr_pair(v, {8, UpsampleMode::same_insertion, 1}));
  EXPECT_EQ(to_string(UpsampleMode::trilinear), "trilinear");
  EXPECT_EQ(to_string(UpsampleMode::same_insertion), "insert");
}
