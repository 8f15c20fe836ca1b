#pragma once

// Synthetic aphid-cluster scenes and a simulated detector. Together they
// stand in for the field dataset and trained CNNs so that the annotation
// pipeline and the evaluator can be exercised end to end.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "aphid/annotation.hpp"
#include "aphid/error.hpp"
#include "aphid/eval.hpp"
#include "aphid/geometry.hpp"
#include "aphid/patch.hpp"
#include "aphid/png_io.hpp"
#include "aphid/random.hpp"

namespace aphid {

struct SceneConfig {
  std::string id = "scene";
  View view = View::view1;
  int width = 1600;
  int height = 1200;
  int min_clusters = 30;
  int max_clusters = 60;
  // Log-normal mask area: median in pixels and sigma of log(area).
  double area_median = 1442.0;
  double area_sigma = 1.0;
  double min_area = 60.0;
  double max_area = 30000.0;
  double neighbor_fraction = 0.35;  // placed 1..neighbor_gap px from an existing cluster
  int neighbor_gap = 10;
  double straddle_fraction = 0.3;   // centered across a window edge of the tiling
  int grid_step = 200;              // spacing of the window edges, i.e. the stride
  int min_dots = 6;                 // aphids drawn per cluster, at least
  std::uint64_t seed = 1;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (width <= 0 || height <= 0) throw InvalidArgument("scene size must be positive");
    if (min_clusters < 0 || max_clusters < min_clusters) throw InvalidArgument("invalid cluster count range");
    if (!(area_median > 0 && area_sigma >= 0 && min_area > 0 && max_area >= min_area)) {
      throw InvalidArgument("invalid blob size distribution");
    }
    if (!prob(neighbor_fraction) || !prob(straddle_fraction)) throw InvalidArgument("fractions must be in [0,1]");
    if (neighbor_gap < 1 || grid_step < 1 || min_dots < 1) throw InvalidArgument("invalid scene spacing");
  }
};

struct DetectorNoise {
  double jitter_px = 2.0;          // stddev of each corner coordinate
  double miss_prob = 0.03;         // base probability of missing a target
  double small_miss_prob = 0.45;   // extra miss probability for tiny targets...
  double small_area = 500.0;       // ...decaying as exp(-area / small_area)
  double group_px = 10.0;          // targets this close look like one cluster
  double group_prob = 0.5;         // chance such a group is reported as one box
  double fragment_prob = 0.5;      // chance a small clipped target is split in two
  double fragment_area = 1600.0;
  double duplicate_prob = 0.3;
  double spurious_rate = 1.0;      // Poisson mean of false boxes per patch
  double true_score_mean = 0.8;
  double true_score_sd = 0.1;
  double spurious_score_mean = 0.5;
  double spurious_score_sd = 0.2;
  std::uint64_t seed = 7;

  /// Every prediction is an exact copy of its ground truth, scored 1.
  static DetectorNoise none() {
    DetectorNoise n;
    n.jitter_px = 0;
    n.miss_prob = 0;
    n.small_miss_prob = 0;
    n.group_prob = 0;
    n.fragment_prob = 0;
    n.duplicate_prob = 0;
    n.spurious_rate = 0;
    n.true_score_mean = 1.0;
    n.true_score_sd = 0;
    return n;
  }

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(jitter_px >= 0) || !(true_score_sd >= 0) || !(spurious_score_sd >= 0)) {
      throw InvalidArgument("standard deviations must be >= 0");
    }
    if (!prob(miss_prob) || !prob(small_miss_prob) || !prob(group_prob) || !prob(fragment_prob) ||
        !prob(duplicate_prob)) {
      throw InvalidArgument("probabilities must be in [0,1]");
    }
    if (!(spurious_rate >= 0) || !(small_area > 0) || !(group_px >= 0)) throw InvalidArgument("invalid noise rates");
  }
};

inline void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"id", c.id},
       {"view", std::string(to_string(c.view))},
       {"width", c.width},
       {"height", c.height},
       {"min_clusters", c.min_clusters},
       {"max_clusters", c.max_clusters},
       {"area_median", c.area_median},
       {"area_sigma", c.area_sigma},
       {"min_area", c.min_area},
       {"max_area", c.max_area},
       {"neighbor_fraction", c.neighbor_fraction},
       {"neighbor_gap", c.neighbor_gap},
       {"straddle_fraction", c.straddle_fraction},
       {"grid_step", c.grid_step},
       {"min_dots", c.min_dots},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SceneConfig& c) {
  c = SceneConfig{};
  if (j.contains("id")) c.id = j["id"].get<std::string>();
  if (j.contains("view")) c.view = parse_view(j["view"].get<std::string>());
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  opt("width", c.width);
  opt("height", c.height);
  opt("min_clusters", c.min_clusters);
  opt("max_clusters", c.max_clusters);
  opt("area_median", c.area_median);
  opt("area_sigma", c.area_sigma);
  opt("min_area", c.min_area);
  opt("max_area", c.max_area);
  opt("neighbor_fraction", c.neighbor_fraction);
  opt("neighbor_gap", c.neighbor_gap);
  opt("straddle_fraction", c.straddle_fraction);
  opt("grid_step", c.grid_step);
  opt("min_dots", c.min_dots);
  opt("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const DetectorNoise& n) {
  j = {{"jitter_px", n.jitter_px},
       {"miss_prob", n.miss_prob},
       {"small_miss_prob", n.small_miss_prob},
       {"small_area", n.small_area},
       {"group_px", n.group_px},
       {"group_prob", n.group_prob},
       {"fragment_prob", n.fragment_prob},
       {"fragment_area", n.fragment_area},
       {"duplicate_prob", n.duplicate_prob},
       {"spurious_rate", n.spurious_rate},
       {"true_score_mean", n.true_score_mean},
       {"true_score_sd", n.true_score_sd},
       {"spurious_score_mean", n.spurious_score_mean},
       {"spurious_score_sd", n.spurious_score_sd},
       {"seed", n.seed}};
}

inline void from_json(const nlohmann::json& j, DetectorNoise& n) {
  n = DetectorNoise{};
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  opt("jitter_px", n.jitter_px);
  opt("miss_prob", n.miss_prob);
  opt("small_miss_prob", n.small_miss_prob);
  opt("small_area", n.small_area);
  opt("group_px", n.group_px);
  opt("group_prob", n.group_prob);
  opt("fragment_prob", n.fragment_prob);
  opt("fragment_area", n.fragment_area);
  opt("duplicate_prob", n.duplicate_prob);
  opt("spurious_rate", n.spurious_rate);
  opt("true_score_mean", n.true_score_mean);
  opt("true_score_sd", n.true_score_sd);
  opt("spurious_score_mean", n.spurious_score_mean);
  opt("spurious_score_sd", n.spurious_score_sd);
  opt("seed", n.seed);
}

namespace detail {

inline constexpr int kPlacementAttempts = 400;

// Box of a cluster of roughly `area` mask pixels; the inscribed ellipse
// touches all four sides, so the mask's tight box equals the box.
inline std::pair<int, int> blob_extent(Rng& rng, const SceneConfig& c) {
  const double area = std::clamp(rng.lognormal(std::log(c.area_median), c.area_sigma), c.min_area, c.max_area);
  const double ratio = rng.uniform(0.5, 1.0);
  int w = std::max(3, static_cast<int>(std::lround(std::sqrt(4.0 * area / (std::numbers::pi * ratio)))));
  int h = std::max(3, static_cast<int>(std::lround(w * ratio)));
  if (rng.bernoulli(0.5)) std::swap(w, h);
  return {w, h};
}

inline void rasterize_ellipse(InstanceMask& mask, const BBox& box, std::uint16_t label) {
  const double cx = (box.min_x() + box.max_x()) / 2.0;
  const double cy = (box.min_y() + box.max_y()) / 2.0;
  const double rx = box.width() / 2.0;
  const double ry = box.height() / 2.0;
  for (int y = box.min_y(); y < box.max_y(); ++y) {
    const double ny = (y + 0.5 - cy) / ry;
    for (int x = box.min_x(); x < box.max_x(); ++x) {
      const double nx = (x + 0.5 - cx) / rx;
      if (nx * nx + ny * ny <= 1.0) mask.set(x, y, label);
    }
  }
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Places elliptical cluster blobs on an empty label map. Some clusters sit
/// within a few pixels of another one, some straddle window edges of the
/// tiling; blobs never touch. Returns the record with its dense mask.
inline AnnotatedImage gen_scene(const SceneConfig& config) {
  config.validate();
  Rng rng = Rng::derive(config.seed, 0x5ce4e);
  const int n = config.min_clusters + static_cast<int>(rng.below(
                                          static_cast<std::uint64_t>(config.max_clusters - config.min_clusters) + 1));
  if (n > 0xFFFF) throw InvalidArgument("too many clusters for a 16-bit label map");
  InstanceMask mask(config.width, config.height);
  std::vector<BBox> placed;

  for (int k = 0; k < n; ++k) {
    const auto [w, h] = detail::blob_extent(rng, config);
    const double mode = rng.uniform();
    const bool near_neighbor = !placed.empty() && mode < config.neighbor_fraction;
    const bool straddle = !near_neighbor && mode < config.neighbor_fraction + config.straddle_fraction;
    std::optional<BBox> chosen;
    for (int attempt = 0; attempt < detail::kPlacementAttempts && !chosen; ++attempt) {
      int x0 = 0, y0 = 0;
      if (w > config.width || h > config.height) break;
      if (near_neighbor) {
        const BBox& other = placed[rng.below(placed.size())];
        const int gap = rng.uniform_int(1, config.neighbor_gap);
        switch (rng.below(4)) {
          case 0: x0 = other.max_x() + gap; y0 = rng.uniform_int(other.min_y() - h + 1, other.max_y() - 1); break;
          case 1: x0 = other.min_x() - gap - w; y0 = rng.uniform_int(other.min_y() - h + 1, other.max_y() - 1); break;
          case 2: y0 = other.max_y() + gap; x0 = rng.uniform_int(other.min_x() - w + 1, other.max_x() - 1); break;
          default: y0 = other.min_y() - gap - h; x0 = rng.uniform_int(other.min_x() - w + 1, other.max_x() - 1); break;
        }
      } else {
        x0 = rng.uniform_int(0, config.width - w);
        y0 = rng.uniform_int(0, config.height - h);
        if (straddle) {
          // Put an edge line k * grid_step through the blob.
          const bool vertical = rng.bernoulli(0.5);
          const int extent = vertical ? config.width : config.height;
          const int lines = (extent - 1) / config.grid_step;
          if (lines >= 1) {
            const int line = config.grid_step * rng.uniform_int(1, lines);
            const int size = vertical ? w : h;
            const int start = line - rng.uniform_int(1, size - 1);
            (vertical ? x0 : y0) = start;
          }
        }
      }
      if (x0 < 0 || y0 < 0 || x0 + w > config.width || y0 + h > config.height) continue;
      const BBox box(x0, y0, x0 + w, y0 + h);
      const bool clear = std::none_of(placed.begin(), placed.end(),
                                      [&](const BBox& p) { return detail::squared_gap(p, box) < 1; });
      if (clear) chosen = box;
    }
    if (!chosen) {
      throw InvalidArgument("cannot place " + std::to_string(n) + " clusters in a " + std::to_string(config.width) +
                            "x" + std::to_string(config.height) + " scene");
    }
    placed.push_back(*chosen);
    detail::rasterize_ellipse(mask, *chosen, static_cast<std::uint16_t>(placed.size()));
  }
  return annotate_from_mask(config.id, config.view, mask);
}

/// Paints a scene: leaf-green background, each cluster a pale patch with at
/// least min_dots dark aphid dots.
inline RgbImage render_scene(const AnnotatedImage& scene, const SceneConfig& config) {
  RgbImage img{scene.width, scene.height, {}};
  img.pixels.resize(static_cast<std::size_t>(scene.width) * scene.height * 3);
  Rng bg = Rng::derive(config.seed, 0xb6);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    const int jitter = static_cast<int>(bg.below(16));
    img.pixels[i] = static_cast<std::uint8_t>(40 + jitter);
    img.pixels[i + 1] = static_cast<std::uint8_t>(120 + jitter);
    img.pixels[i + 2] = static_cast<std::uint8_t>(40);
  }
  auto paint = [&img](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    auto* p = img.pixels.data() + (static_cast<std::size_t>(y) * img.width + x) * 3;
    p[0] = r;
    p[1] = g;
    p[2] = b;
  };
  if (scene.mask) {
    const auto labels = scene.mask->labels();
    for (int y = 0; y < scene.height; ++y)
      for (int x = 0; x < scene.width; ++x)
        if (labels[static_cast<std::size_t>(y) * scene.width + x]) paint(x, y, 170, 180, 90);
  }
  for (const auto& inst : scene.instances) {
    Rng dots = Rng::derive(config.seed, 0xd075'0000ULL + static_cast<std::uint64_t>(inst.id));
    const int count = std::max<int>(config.min_dots, static_cast<int>(inst.effective_area() / 120));
    for (int d = 0; d < count; ++d) {
      const int cx = inst.box.min_x() + static_cast<int>(dots.below(static_cast<std::uint64_t>(inst.box.width())));
      const int cy = inst.box.min_y() + static_cast<int>(dots.below(static_cast<std::uint64_t>(inst.box.height())));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) paint(cx + dx, cy + dy, 30, 30, 20);
    }
  }
  return img;
}

namespace detail {

struct Target {
  BBox box;
  std::int64_t area;
  bool clipped;
};

inline BBox jitter_box(Rng& rng, const BBox& b, double sd, int limit) {
  auto j = [&](int v) {
    return sd > 0 ? std::clamp(static_cast<int>(std::lround(v + rng.normal(0.0, sd))), 0, limit) : v;
  };
  int x0 = j(b.min_x()), y0 = j(b.min_y()), x1 = j(b.max_x()), y1 = j(b.max_y());
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  if (x0 == x1) (x1 < limit) ? ++x1 : --x0;
  if (y0 == y1) (y1 < limit) ? ++y1 : --y0;
  return BBox(x0, y0, x1, y1);
}

inline double draw_score(Rng& rng, double mean, double sd) {
  return std::clamp(sd > 0 ? rng.normal(mean, sd) : mean, 0.0, 1.0);
}

}  // namespace detail

/// Simulated detector output for a set of ground-truth patches.
///
/// Targets are the ground-truth boxes, except that boxes within group_px of
/// each other may be reported as one enclosing box. Each target is missed
/// with a probability that grows for small areas; small clipped targets may
/// come back split into two partial boxes; kept boxes get corner jitter,
/// an occasional duplicate, and the patch gets Poisson spurious boxes.
inline std::vector<Detection> simulate_detector(std::span<const Patch> patches, const DetectorNoise& noise) {
  noise.validate();
  std::vector<Detection> out;
  for (const auto& patch : patches) {
    const std::string id = patch.name();
    Rng rng = Rng::derive(noise.seed, detail::fnv1a(id));
    const int size = patch.size;

    std::vector<detail::Target> targets;
    std::vector<BBox> boxes;
    for (const auto& inst : patch.instances) boxes.push_back(inst.box);
    const auto comp = noise.group_prob > 0 ? gap_components(boxes, noise.group_px) : std::vector<std::size_t>{};
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const std::size_t g = comp.empty() ? i : comp[i];
      if (groups.size() <= g) groups.resize(g + 1);
      groups[g].push_back(i);
    }
    for (const auto& g : groups) {
      if (g.empty()) continue;
      if (g.size() > 1 && rng.bernoulli(noise.group_prob)) {
        detail::Target t{patch.instances[g[0]].box, 0, false};
        for (auto i : g) {
          const auto& inst = patch.instances[i];
          t.box = enclosing(t.box, inst.box);
          t.area += inst.effective_area();
          t.clipped = t.clipped || inst.clipped;
        }
        targets.push_back(t);
      } else {
        for (auto i : g) {
          const auto& inst = patch.instances[i];
          targets.push_back({inst.box, inst.effective_area(), inst.clipped});
        }
      }
    }

    for (const auto& t : targets) {
      const double miss = noise.miss_prob + (1.0 - noise.miss_prob) * noise.small_miss_prob *
                                                 std::exp(-static_cast<double>(t.area) / noise.small_area);
      if (rng.bernoulli(miss)) continue;
      const double score = detail::draw_score(rng, noise.true_score_mean, noise.true_score_sd);
      const bool fragment = t.clipped && static_cast<double>(t.area) < noise.fragment_area &&
                            rng.bernoulli(noise.fragment_prob) && std::max(t.box.width(), t.box.height()) >= 2;
      if (fragment) {
        const BBox& b = t.box;
        std::vector<BBox> halves;
        if (b.width() >= b.height()) {
          const int mid = b.min_x() + b.width() / 2;
          halves = {BBox(b.min_x(), b.min_y(), mid, b.max_y()), BBox(mid, b.min_y(), b.max_x(), b.max_y())};
        } else {
          const int mid = b.min_y() + b.height() / 2;
          halves = {BBox(b.min_x(), b.min_y(), b.max_x(), mid), BBox(b.min_x(), mid, b.max_x(), b.max_y())};
        }
        for (const auto& h : halves) {
          out.push_back({id, detail::jitter_box(rng, h, noise.jitter_px, size), score * rng.uniform(0.6, 0.9)});
        }
        continue;
      }
      out.push_back({id, detail::jitter_box(rng, t.box, noise.jitter_px, size), score});
      if (rng.bernoulli(noise.duplicate_prob)) {
        out.push_back({id, detail::jitter_box(rng, t.box, 2.0 * noise.jitter_px + 2.0, size),
                       score * rng.uniform(0.7, 1.0)});
      }
    }

    const int spurious = rng.poisson(noise.spurious_rate);
    for (int s = 0; s < spurious; ++s) {
      const int w = rng.uniform_int(8, std::min(80, size));
      const int h = rng.uniform_int(8, std::min(80, size));
      const int x = rng.uniform_int(0, size - w);
      const int y = rng.uniform_int(0, size - h);
      out.push_back({id, BBox(x, y, x + w, y + h),
                     detail::draw_score(rng, noise.spurious_score_mean, noise.spurious_score_sd)});
    }
  }
  return out;
}

/// Per-condition means over a set of synthetic seeds.
struct ConditionSummary {
  Condition condition = Condition::original;
  std::vector<double> ap;      // per seed, at the primary IoU threshold
  std::vector<double> recall;  // per seed
  std::vector<double> ap_low;  // per seed, at iou_low
  std::vector<double> ap_high; // per seed, at iou_high

  static double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
};

struct BenchmarkConfig {
  SceneConfig scene;
  DetectorNoise noise;
  PipelineConfig pipeline;
  std::vector<std::uint64_t> seeds;
  double iou = 0.5;
  double iou_low = 0.25;
  double iou_high = 0.75;
};

/// For every seed: generate a scene, build the three dataset conditions,
/// simulate detections on each and score them.
inline std::vector<ConditionSummary> run_condition_benchmark(const BenchmarkConfig& cfg) {
  std::vector<ConditionSummary> out;
  for (auto c : {Condition::original, Condition::merged, Condition::merged_and_trimmed}) {
    out.push_back(ConditionSummary{c, {}, {}, {}, {}});
  }
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    SceneConfig sc = cfg.scene;
    sc.seed = cfg.seeds[i];
    sc.id = "synth" + std::to_string(cfg.seeds[i]);
    sc.view = kAllViews[i % kAllViews.size()];
    const AnnotatedImage scene = gen_scene(sc);
    for (auto& summary : out) {
      const auto patches = pipeline(scene, config_for(summary.condition, cfg.pipeline));
      DetectorNoise noise = cfg.noise;
      noise.seed = Rng::mix(cfg.noise.seed ^ Rng::mix(cfg.seeds[i]));
      const auto dets = simulate_detector(patches, noise);
      const auto gt = ground_truth_of(patches);
      const double thresholds[] = {cfg.iou, cfg.iou_low, cfg.iou_high};
      const auto report = evaluate_sweep(dets, gt, thresholds);
      summary.ap.push_back(report.results[0].ap);
      summary.recall.push_back(report.results[0].recall);
      summary.ap_low.push_back(report.results[1].ap);
      summary.ap_high.push_back(report.results[2].ap);
    }
  }
  return out;
}

}  // namespace aphid
