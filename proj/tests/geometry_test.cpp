#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aphid/geometry.hpp"
#include "oracles.hpp"

using aphid::BBox;
using aphid::Detection;

namespace {

BBox random_box(std::mt19937& rng, int grid, int max_side) {
  std::uniform_int_distribution<int> side(1, max_side);
  const int w = side(rng), h = side(rng);
  std::uniform_int_distribution<int> px(0, grid - w), py(0, grid - h);
  const int x = px(rng), y = py(rng);
  return BBox(x, y, x + w, y + h);
}

}  // namespace

TEST(BBox, RejectsInvalidCoordinates) {
  EXPECT_THROW(BBox(5, 0, 5, 10), aphid::InvalidArgument);
  EXPECT_THROW(BBox(0, 7, 10, 3), aphid::InvalidArgument);
  EXPECT_THROW(BBox(-1, 0, 10, 10), aphid::InvalidArgument);
  EXPECT_EQ(BBox(2, 3, 7, 11).area(), 40);
}

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(aphid::bbox_iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(aphid::bbox_iou({0, 0, 10, 10}, {50, 50, 60, 60}), 0.0);
  EXPECT_DOUBLE_EQ(aphid::bbox_iou({0, 0, 10, 10}, {5, 5, 15, 15}), 25.0 / 175.0);
  EXPECT_NEAR(aphid::bbox_iou({0, 0, 10, 10}, {5, 5, 15, 15}), 0.142857, 1e-6);
}

TEST(Iou, MatchesRasterOracleAndIsSymmetric) {
  std::mt19937 rng(11);
  for (int i = 0; i < 400; ++i) {
    const BBox a = random_box(rng, 60, 40), b = random_box(rng, 60, 40);
    EXPECT_EQ(aphid::bbox_iou(a, b), oracle::raster_iou(a, b, 60));
    EXPECT_EQ(aphid::bbox_iou(a, b), aphid::bbox_iou(b, a));
  }
}

TEST(Gap, Examples) {
  EXPECT_EQ(aphid::bbox_gap({0, 0, 10, 10}, {5, 5, 15, 15}).value, 0.0);
  EXPECT_DOUBLE_EQ(aphid::bbox_gap({0, 0, 10, 10}, {20, 0, 30, 10}).value, 10.0);
  EXPECT_DOUBLE_EQ(aphid::bbox_gap({0, 0, 10, 10}, {16, 18, 20, 22}).value, 10.0);
  // Touching edges count as distance zero.
  EXPECT_EQ(aphid::bbox_gap({0, 0, 10, 10}, {10, 0, 20, 10}).value, 0.0);
}

TEST(Gap, MatchesBoundarySamplingAndIsSymmetric) {
  std::mt19937 rng(12);
  for (int i = 0; i < 300; ++i) {
    const BBox a = random_box(rng, 100, 30), b = random_box(rng, 100, 30);
    const double g = aphid::bbox_gap(a, b).value;
    EXPECT_NEAR(g, oracle::sampled_gap(a, b), 1e-6) << i;
    EXPECT_EQ(g, aphid::bbox_gap(b, a).value);
    EXPECT_EQ(g == 0.0, oracle::overlaps_closed(a, b));
  }
}

TEST(Gap, HalfPixelSamplingAgrees) {
  std::mt19937 rng(13);
  for (int i = 0; i < 50; ++i) {
    const BBox a = random_box(rng, 60, 20), b = random_box(rng, 60, 20);
    EXPECT_NEAR(aphid::bbox_gap(a, b).value, oracle::sampled_gap(a, b, 0.5), 1e-6);
  }
}

TEST(Merge, Examples) {
  const std::vector<BBox> one{{0, 0, 10, 10}};
  EXPECT_EQ(aphid::merge_close_boxes(one, 10), one);

  const std::vector<BBox> two{{0, 0, 10, 10}, {20, 0, 30, 10}};
  EXPECT_EQ(aphid::merge_close_boxes(two, 10), (std::vector<BBox>{{0, 0, 30, 10}}));

  const std::vector<BBox> three{{0, 0, 10, 10}, {21, 0, 31, 10}, {42, 0, 52, 10}};
  EXPECT_EQ(aphid::merge_close_boxes(three, 10), three);

  EXPECT_TRUE(aphid::merge_close_boxes(std::vector<BBox>{}, 10).empty());
}

TEST(Merge, IteratesToFixpoint) {
  // The outer two merge; only their union is close enough to the middle one.
  const std::vector<BBox> boxes{{0, 0, 10, 10}, {12, 30, 18, 40}, {20, 0, 30, 10}};
  EXPECT_GT(aphid::bbox_gap(boxes[0], boxes[1]).value, 20.0);
  EXPECT_GT(aphid::bbox_gap(boxes[2], boxes[1]).value, 20.0);
  const auto out = aphid::merge_close_boxes(boxes, 20);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], BBox(0, 0, 30, 40));
}

TEST(Merge, GroupsRecordMembers) {
  const std::vector<BBox> boxes{{100, 100, 110, 110}, {0, 0, 10, 10}, {12, 0, 20, 10}};
  const auto groups = aphid::merge_close_groups(boxes, 5);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].box, BBox(0, 0, 20, 10));
  EXPECT_EQ(groups[0].members, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(groups[1].members, (std::vector<std::size_t>{0}));
}

TEST(Merge, Properties) {
  std::mt19937 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<BBox> boxes;
    const int n = std::uniform_int_distribution<int>(0, 30)(rng);
    for (int i = 0; i < n; ++i) boxes.push_back(random_box(rng, 400, 40));
    const double thr = std::uniform_int_distribution<int>(0, 25)(rng);
    const auto out = aphid::merge_close_boxes(boxes, thr);
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = i + 1; j < out.size(); ++j) EXPECT_GT(aphid::bbox_gap(out[i], out[j]).value, thr);
      if (i > 0) EXPECT_TRUE(aphid::row_major_less(out[i - 1], out[i]));
    }
    EXPECT_EQ(aphid::merge_close_boxes(out, thr), out);
    for (const auto& b : boxes) {
      EXPECT_EQ(std::count_if(out.begin(), out.end(), [&](const BBox& o) { return o.contains(b); }), 1);
    }
    EXPECT_LE(out.size(), boxes.size());
  }
}

TEST(Nms, Examples) {
  const std::vector<Detection> single{{"p", {0, 0, 10, 10}, 0.5}};
  EXPECT_EQ(aphid::nms(single, 0.6), single);

  const std::vector<Detection> same{{"p", {0, 0, 10, 10}, 0.8}, {"p", {0, 0, 10, 10}, 0.9}};
  const auto kept = aphid::nms(same, 0.6);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);

  const std::vector<Detection> apart{{"p", {0, 0, 10, 10}, 0.9}, {"p", {5, 5, 15, 15}, 0.8}};
  EXPECT_EQ(aphid::nms(apart, 0.6).size(), 2u);
}

TEST(Nms, TiesBreakByBoxOrder) {
  const std::vector<Detection> dets{{"p", {1, 0, 11, 10}, 0.7}, {"p", {0, 0, 10, 10}, 0.7}};
  const auto kept = aphid::nms(dets, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box, BBox(0, 0, 10, 10));
}

TEST(Nms, KeptBoxesRespectThreshold) {
  std::mt19937 rng(15);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 25; ++i) dets.push_back({"p", random_box(rng, 80, 30), score(rng)});
    const double thr = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto kept = aphid::nms(dets, thr);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LE(aphid::bbox_iou(kept[i].box, kept[j].box), thr);
      if (i > 0) EXPECT_GE(kept[i - 1].score, kept[i].score);
    }
  }
  EXPECT_THROW(aphid::nms(std::vector<Detection>{}, 1.5), aphid::InvalidArgument);
}

TEST(MaskToBBox, Examples) {
  aphid::InstanceMask m(12, 12);
  m.set(3, 7, 1);
  EXPECT_EQ(aphid::mask_to_bbox(m, 1), BBox(3, 7, 4, 8));

  aphid::InstanceMask r(10, 10);
  for (int y = 1; y <= 3; ++y) {
    for (int x = 2; x <= 5; ++x) r.set(x, y, 2);
  }
  EXPECT_EQ(aphid::mask_to_bbox(r, 2), BBox(2, 1, 6, 4));

  aphid::InstanceMask l(10, 10);
  l.set(0, 0, 4);
  l.set(9, 9, 4);
  EXPECT_EQ(aphid::mask_to_bbox(l, 4), BBox(0, 0, 10, 10));

  EXPECT_THROW(aphid::mask_to_bbox(l, 5), aphid::MissingInstance);
}
