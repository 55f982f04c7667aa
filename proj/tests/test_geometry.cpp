#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"

using namespace stripdet;

TEST(RotatedIou, HandCases) {
  const Box3D a{0, 0, 0, 2, 2, 1, 0};
  EXPECT_NEAR(rotated_iou_bev(a, a), 1.0, 1e-9);
  EXPECT_EQ(rotated_iou_bev(a, Box3D{10, 0, 0, 2, 2, 1, 0}), 0.0);
  EXPECT_NEAR(rotated_iou_bev(a, Box3D{1, 0, 0, 2, 2, 1, 0}), 1.0 / 3.0, 1e-9);
  // A square turned by 90 degrees has the same footprint.
  EXPECT_NEAR(rotated_iou_bev(a, Box3D{0, 0, 0, 2, 2, 1, std::numbers::pi / 2}), 1.0, 1e-9);
  // Square rotated 45 degrees inside a square: octagon of area 8(sqrt2 - 1).
  const double oct = 8.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(rotated_iou_bev(a, Box3D{0, 0, 0, 2, 2, 1, std::numbers::pi / 4}), oct / (8.0 - oct), 1e-9);
}

TEST(RotatedIou, DegenerateBoxIsZero) {
  const Box3D a{0, 0, 0, 2, 2, 1, 0};
  EXPECT_EQ(rotated_iou_bev(a, Box3D{0, 0, 0, 0, 2, 1, 0}), 0.0);
  EXPECT_EQ(rotated_iou_bev(Box3D{0, 0, 0, 2, 0, 1, 0}, a), 0.0);
}

TEST(RotatedIou, SymmetricBoundedAndMatchesRaster) {
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    const Box3D a = oracle::random_box(rng, 2.0), b = oracle::random_box(rng, 2.0);
    const double ab = rotated_iou_bev(a, b), ba = rotated_iou_bev(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    if (i < 40) EXPECT_NEAR(ab, oracle::iou_by_raster(a, b, 0.01), 0.01);
  }
}

TEST(RotatedIou, InvariantUnderHalfTurn) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Box3D a = oracle::random_box(rng, 1.0);
    Box3D b = oracle::random_box(rng, 1.0);
    const double before = rotated_iou_bev(a, b);
    b.yaw += std::numbers::pi;
    EXPECT_NEAR(rotated_iou_bev(a, b), before, 1e-9);
  }
}

TEST(WrapAngle, Range) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(0.25 + 8 * std::numbers::pi), 0.25, 1e-12);
}

TEST(Nms, IdenticalBoxesKeepTheBest) {
  const Box3D b{0, 0, 0, 1.6, 3.9, 1.5, 0.3};
  const auto kept = nms_bev({{b, 0, 0.8}, {b, 0, 0.9}}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);
}

TEST(Nms, DisjointBoxesAllKept) {
  std::vector<Detection> d;
  for (int i = 0; i < 5; ++i) d.push_back({Box3D{10.0 * i, 0, 0, 1, 2, 1, 0.1 * i}, 0, 0.1 * (i + 1)});
  EXPECT_EQ(nms_bev(d, 0.5).size(), 5u);
}

TEST(Nms, TiesKeepEarlierIndex) {
  const Box3D b{0, 0, 0, 1, 1, 1, 0};
  const auto kept = nms_bev({{b, 7, 0.5}, {b, 3, 0.5}}, 0.1);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].label, 7u);
}

TEST(Nms, MatchesExhaustiveOracle) {
  Rng rng(3);
  for (int scene = 0; scene < 200; ++scene) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<Detection> d;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties occur.
      d.push_back({oracle::random_box(rng, 1.5), i, std::round(rng.uniform() * 5) / 5});
    }
    const double thr = rng.uniform(0.05, 0.7);
    const auto kept = nms_bev(d, thr);
    const auto expect = oracle::greedy_nms_subset(d, thr);
    ASSERT_EQ(kept.size(), expect.size()) << "scene " << scene;
    for (std::size_t k = 0; k < kept.size(); ++k) EXPECT_EQ(kept[k].label, expect[k]);
    for (std::size_t k = 1; k < kept.size(); ++k) EXPECT_GE(kept[k - 1].score, kept[k].score);
  }
}
