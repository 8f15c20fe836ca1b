#include <gtest/gtest.h>

#include "aphid/synth.hpp"

using aphid::Condition;
using aphid::DetectorNoise;
using aphid::SceneConfig;

namespace {

SceneConfig small_scene(std::uint64_t seed) {
  SceneConfig c;
  c.seed = seed;
  c.width = 1200;
  c.height = 800;
  c.min_clusters = 20;
  c.max_clusters = 30;
  return c;
}

std::vector<aphid::Patch> patches_for(const SceneConfig& c, Condition cond) {
  return aphid::pipeline(aphid::gen_scene(c), aphid::config_for(cond));
}

aphid::ThresholdResult score(const std::vector<aphid::Patch>& patches, const DetectorNoise& noise, double iou) {
  const auto dets = aphid::simulate_detector(patches, noise);
  return aphid::evaluate_at(dets, aphid::ground_truth_of(patches), iou);
}

}  // namespace

TEST(GenScene, ZeroClusters) {
  SceneConfig c;
  c.min_clusters = c.max_clusters = 0;
  const auto img = aphid::gen_scene(c);
  EXPECT_TRUE(img.instances.empty());
  EXPECT_EQ(img.mask->max_label(), 0);
}

TEST(GenScene, DeterministicPerSeed) {
  const auto a = aphid::gen_scene(small_scene(3));
  const auto b = aphid::gen_scene(small_scene(3));
  EXPECT_TRUE(std::ranges::equal(a.mask->labels(), b.mask->labels()));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.instances, aphid::gen_scene(small_scene(4)).instances);
}

TEST(GenScene, ConsistentMaskAndBoxes) {
  const auto img = aphid::gen_scene(small_scene(5));
  ASSERT_GE(img.instances.size(), 20u);
  EXPECT_NO_THROW(aphid::validate(img));
  for (const auto& inst : img.instances) {
    EXPECT_EQ(aphid::mask_to_bbox(*img.mask, inst.id), inst.box);
    EXPECT_EQ(inst.area, img.mask->area(inst.id));
    EXPECT_GE(*inst.area, 6);
  }
  for (std::size_t i = 0; i < img.instances.size(); ++i) {
    for (std::size_t j = i + 1; j < img.instances.size(); ++j) {
      EXPECT_GE(aphid::detail::squared_gap(img.instances[i].box, img.instances[j].box), 1);
    }
  }
}

TEST(GenScene, NeighborsMergeWhenAllAreClose) {
  SceneConfig c = small_scene(6);
  c.neighbor_fraction = 1.0;
  c.straddle_fraction = 0.0;
  c.min_clusters = c.max_clusters = 10;
  const auto img = aphid::gen_scene(c);
  ASSERT_EQ(img.instances.size(), 10u);
  std::vector<aphid::BBox> boxes;
  for (const auto& inst : img.instances) boxes.push_back(inst.box);
  EXPECT_LT(aphid::merge_close_boxes(boxes, 10).size(), boxes.size());
  // Every cluster after the first was placed within 10 px of an earlier one.
  EXPECT_EQ(aphid::merge_close_boxes(boxes, 10).size(), 1u);
}

TEST(GenScene, AreaDistributionIsRightSkewed) {
  std::vector<std::int64_t> areas;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    for (const auto& inst : aphid::gen_scene(small_scene(s)).instances) areas.push_back(*inst.area);
  }
  const auto st = aphid::area_stats(areas);
  EXPECT_LT(st.median, st.mean);
}

TEST(GenScene, ErrorsWhenItCannotPlace) {
  SceneConfig c;
  c.width = c.height = 100;
  c.min_clusters = c.max_clusters = 500;
  EXPECT_THROW(aphid::gen_scene(c), aphid::InvalidArgument);
  c.min_clusters = 3;
  c.max_clusters = 2;
  EXPECT_THROW(aphid::gen_scene(c), aphid::InvalidArgument);
}

TEST(RenderScene, SizeAndDeterminism) {
  SceneConfig c = small_scene(7);
  const auto img = aphid::gen_scene(c);
  const auto a = aphid::render_scene(img, c);
  EXPECT_EQ(a.pixels.size(), static_cast<std::size_t>(c.width) * c.height * 3);
  EXPECT_EQ(a.pixels, aphid::render_scene(img, c).pixels);
}

TEST(SimulateDetector, ZeroNoiseIsPerfect) {
  const auto patches = patches_for(small_scene(8), Condition::original);
  const auto dets = aphid::simulate_detector(patches, DetectorNoise::none());
  EXPECT_EQ(dets.size(), aphid::count_boxes(aphid::ground_truth_of(patches)));
  const auto r = score(patches, DetectorNoise::none(), 0.95);
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.recall, 1.0);
}

TEST(SimulateDetector, MissEverything) {
  const auto patches = patches_for(small_scene(9), Condition::original);
  DetectorNoise n = DetectorNoise::none();
  n.miss_prob = 1.0;
  EXPECT_TRUE(aphid::simulate_detector(patches, n).empty());
  EXPECT_EQ(score(patches, n, 0.5).recall, 0.0);
}

TEST(SimulateDetector, JitterHurtsStrictThresholdsMore) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    SceneConfig c = small_scene(seed);
    c.min_clusters = 40;
    c.max_clusters = 50;
    const auto patches = patches_for(c, Condition::original);
    ASSERT_GE(aphid::count_boxes(aphid::ground_truth_of(patches)), 100u);
    DetectorNoise n = DetectorNoise::none();
    n.jitter_px = 2.0;
    n.seed = seed;
    const double ap50 = score(patches, n, 0.5).ap;
    const double ap75 = score(patches, n, 0.75).ap;
    EXPECT_GT(ap75, 0.0);
    EXPECT_LT(ap75, ap50);
  }
}

TEST(SimulateDetector, DeterministicAndInsidePatch) {
  const auto patches = patches_for(small_scene(16), Condition::merged);
  const DetectorNoise n;
  const auto a = aphid::simulate_detector(patches, n);
  EXPECT_EQ(a, aphid::simulate_detector(patches, n));
  for (const auto& d : a) {
    EXPECT_LE(d.box.max_x(), 400);
    EXPECT_LE(d.box.max_y(), 400);
    EXPECT_GE(d.score, 0.0);
    EXPECT_LE(d.score, 1.0);
  }
  DetectorNoise other = n;
  other.seed = 8;
  EXPECT_NE(a, aphid::simulate_detector(patches, other));
}

TEST(SimulateDetector, RejectsBadNoise) {
  DetectorNoise n;
  n.miss_prob = 1.5;
  EXPECT_THROW(aphid::simulate_detector({}, n), aphid::InvalidArgument);
  n = DetectorNoise{};
  n.jitter_px = -1;
  EXPECT_THROW(aphid::simulate_detector({}, n), aphid::InvalidArgument);
}

TEST(SimulateDetector, TinyRemovalRaisesRecallOnFragmentedBorders) {
  SceneConfig c = small_scene(17);
  c.straddle_fraction = 0.8;
  c.neighbor_fraction = 0.0;
  const auto merged = patches_for(c, Condition::merged);
  const auto trimmed = patches_for(c, Condition::merged_and_trimmed);
  const DetectorNoise n;
  EXPECT_LT(score(merged, n, 0.5).recall, score(trimmed, n, 0.5).recall);
}

TEST(Benchmark, TrendOnAFewSeeds) {
  aphid::BenchmarkConfig cfg;
  cfg.seeds = {1, 2, 3, 4, 5};
  const auto rows = aphid::run_condition_benchmark(cfg);
  ASSERT_EQ(rows.size(), 3u);
  using S = aphid::ConditionSummary;
  EXPECT_LT(S::mean(rows[0].ap), S::mean(rows[1].ap));
  EXPECT_LT(S::mean(rows[1].ap), S::mean(rows[2].ap));
  EXPECT_LT(S::mean(rows[0].recall), S::mean(rows[1].recall));
  EXPECT_LT(S::mean(rows[1].recall), S::mean(rows[2].recall));
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.ap.size(); ++i) {
      EXPECT_GE(r.ap_low[i], r.ap[i]);
      EXPECT_GE(r.ap[i], r.ap_high[i]);
    }
  }
}

TEST(Configs, JsonRoundTrip) {
  SceneConfig c = small_scene(99);
  c.view = aphid::View::view3;
  const nlohmann::json j = c;
  const auto back = j.get<SceneConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  DetectorNoise n;
  n.miss_prob = 0.25;
  const nlohmann::json k = n;
  EXPECT_EQ(nlohmann::json(k.get<DetectorNoise>()), k);
  EXPECT_EQ(nlohmann::json::parse(R"({"jitter_px":3})").get<DetectorNoise>().jitter_px, 3.0);
}
