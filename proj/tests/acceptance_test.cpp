// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <unistd.h>

#include "aphid/aphid.hpp"
#include "generators.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace aphid;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failure descriptions of a criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_ << (failures_ > 1 ? "; " : "") << what;
  }
  bool ok() const { return failures_ == 0; }
  std::string notes() const {
    return failures_ == 0 ? "" : std::to_string(failures_) + " failure(s): " + notes_.str();
  }

 private:
  int failures_ = 0;
  std::ostringstream notes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string box_str(const BBox& b) {
  return "(" + std::to_string(b.min_x()) + "," + std::to_string(b.min_y()) + "," + std::to_string(b.max_x()) + "," +
         std::to_string(b.max_y()) + ")";
}

// 1. IoU and gap against pixel and boundary-sampling oracles.
Outcome geometry_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  Checker c;
  for (int i = 0; i < 10000; ++i) {
    const BBox a = gen::box(rng, 100, 100, 100), b = gen::box(rng, 100, 100, 100);
    const double iou = bbox_iou(a, b);
    c.expect(iou == oracle::raster_iou(a, b, 100), "iou " + box_str(a) + " " + box_str(b));
    const double gap = bbox_gap(a, b).value;
    c.expect(std::abs(gap - oracle::sampled_gap(a, b)) <= 1e-6, "gap " + box_str(a) + " " + box_str(b));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime " + fmt("%.2f s", secs));
  return {c.ok(), "10000 pairs in " + fmt("%.2f s", secs) + (c.ok() ? "" : "; " + c.notes())};
}

// 2. Merge postcondition, idempotence and containment.
Outcome merge_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1002);
  Checker c;
  for (int s = 0; s < 1000; ++s) {
    std::vector<BBox> boxes;
    const int n = std::uniform_int_distribution<int>(0, 50)(rng);
    for (int i = 0; i < n; ++i) boxes.push_back(gen::box(rng, 400, 400, 40));
    const double thr = std::uniform_int_distribution<int>(0, 30)(rng);
    const auto out = merge_close_boxes(boxes, thr);
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        c.expect(bbox_gap(out[i], out[j]).value > thr, "set " + std::to_string(s) + ": output pair within threshold");
      }
    }
    c.expect(merge_close_boxes(out, thr) == out, "set " + std::to_string(s) + ": not idempotent");
    for (const auto& b : boxes) {
      const auto holders = std::count_if(out.begin(), out.end(), [&](const BBox& o) { return o.contains(b); });
      c.expect(holders == 1, "set " + std::to_string(s) + ": box in " + std::to_string(holders) + " outputs");
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime " + fmt("%.2f s", secs));
  return {c.ok(), "1000 sets in " + fmt("%.2f s", secs) + (c.ok() ? "" : "; " + c.notes())};
}

// 3. AP against exhaustive cutoff enumeration, plus the worked example.
Outcome ap_oracle() {
  std::mt19937_64 rng(1003);
  Checker c;
  for (int i = 0; i < 500; ++i) {
    const auto inst = gen::ap_instance(rng);
    const double ap = average_precision(inst.dets, inst.gts, 0.5).first;
    const double ref = oracle::exhaustive_ap(inst.dets, inst.gts, 0.5);
    c.expect(ap == ref, "instance " + std::to_string(i) + ": " + fmt("%.17g", ap) + " vs " + fmt("%.17g", ref));
  }
  const GroundTruth gt{{"p", {BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)}}};
  const std::vector<Detection> dets{{"p", {0, 0, 10, 10}, 0.9}, {"p", {50, 50, 60, 60}, 0.8}, {"p", {20, 20, 30, 30}, 0.7}};
  const double worked = average_precision(dets, gt, 0.5).first;
  c.expect(std::abs(worked - 0.8333333333333333) <= 1e-9, "worked example gave " + fmt("%.12f", worked));
  return {c.ok(), "500 instances exact; worked example AP " + fmt("%.10f", worked) + (c.ok() ? "" : "; " + c.notes())};
}

// 4. Grid coverage, completeness, the 1% boundary and the window count.
Outcome pipeline_invariants() {
  std::mt19937_64 rng(1004);
  Checker c;
  std::size_t beyond_half = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int patch = std::uniform_int_distribution<int>(4, 60)(rng);
    const int stride = std::uniform_int_distribution<int>(1, patch)(rng);
    const int w = std::uniform_int_distribution<int>(patch, 240)(rng);
    const int h = std::uniform_int_distribution<int>(patch, 240)(rng);
    const auto grid = plan_grid(w, h, patch, stride);
    std::vector<char> cov(static_cast<std::size_t>(w) * h, 0);
    for (std::size_t i = 0; i < grid.offsets.size(); ++i) {
      const auto win = grid.window(i);
      c.expect(win.max_x() <= w && win.max_y() <= h, "window outside image");
      for (int y = win.min_y(); y < win.max_y(); ++y) {
        for (int x = win.min_x(); x < win.max_x(); ++x) cov[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
    c.expect(std::count(cov.begin(), cov.end(), 0) == 0, "uncovered pixel in grid " + std::to_string(trial));

    // Completeness. The stated bound (sides <= stride) is only sufficient when
    // stride <= patch / 2; in general the guarantee is sides <= patch - stride.
    const int bound = std::min(stride, patch - stride);
    AnnotatedImage img{"c", w, h, View::view1, {}, std::nullopt};
    for (int i = 0; i < 30; ++i) {
      img.instances.push_back({i + 1, gen::box(rng, w, h, stride), std::nullopt, InstanceSource::labeled, false});
    }
    const auto patches = crop_annotations(img, grid);
    for (const auto& inst : img.instances) {
      bool whole = false;
      for (const auto& p : patches) {
        for (const auto& local : p.instances) whole = whole || (local.id == inst.id && !local.clipped);
      }
      const bool covered = std::max(inst.box.width(), inst.box.height()) <= bound;
      if (covered) c.expect(whole, "instance " + box_str(inst.box) + " clipped everywhere");
      if (!whole) ++beyond_half;
      if (2 * stride <= patch) c.expect(whole, "instance " + box_str(inst.box) + " clipped with stride <= patch/2");
    }
  }
  const auto full = plan_grid(3648, 2736, 400, 200);
  std::vector<char> cov(static_cast<std::size_t>(3648) * 2736, 0);
  for (std::size_t i = 0; i < full.offsets.size(); ++i) {
    const auto win = full.window(i);
    for (int y = win.min_y(); y < win.max_y(); ++y) {
      std::fill_n(cov.begin() + static_cast<std::ptrdiff_t>(y) * 3648 + win.min_x(), 400, 1);
    }
  }
  c.expect(std::count(cov.begin(), cov.end(), 0) == 0, "full-size grid leaves pixels uncovered");
  c.expect(full.offsets.size() == 234, "full-size grid has " + std::to_string(full.offsets.size()) + " windows");

  auto one = [](std::int64_t area) {
    return Patch{"t", View::view1, 0, 0, 400, {{1, BBox(0, 0, 50, 50), area, InstanceSource::labeled, false}}};
  };
  c.expect(filter_tiny(one(1599)).instances.empty(), "area 1599 kept");
  c.expect(filter_tiny(one(1600)).instances.size() == 1, "area 1600 removed");
  return {c.ok(), "coverage, completeness (" + std::to_string(beyond_half) +
                      " stride-sized boxes clipped everywhere, all with stride > patch/2), 1599 removed / 1600 kept, " + std::to_string(full.offsets.size()) +
                      " windows for 3648x2736" + (c.ok() ? "" : "; " + c.notes())};
}

// 5. Fold partition, stratification, leak-freedom, byte-identical files.
Outcome split_invariants() {
  std::mt19937_64 rng(1005);
  Checker c;
  for (int m = 0; m < 100; ++m) {
    const int k = std::uniform_int_distribution<int>(2, 10)(rng);
    std::vector<ManifestEntry> images;
    for (int v = 0; v < 3; ++v) {
      const int n = std::uniform_int_distribution<int>(k, 60)(rng);
      for (int i = 0; i < n; ++i) {
        images.push_back({"m" + std::to_string(m) + "_" + std::to_string(rng() % 1000000) + "_" + std::to_string(v) + "_" +
                              std::to_string(i),
                          {}, {}, {}, kAllViews[v], 800, 800});
      }
    }
    std::shuffle(images.begin(), images.end(), rng);
    const std::uint64_t seed = rng();
    const auto a = assign_folds(images, k, seed);

    std::set<std::string> ids;
    for (const auto& e : images) ids.insert(e.id);
    std::set<std::string> assigned;
    for (const auto& [id, f] : a.folds) {
      assigned.insert(id);
      c.expect(f >= 0 && f < k, "fold index out of range");
    }
    c.expect(assigned == ids, "manifest " + std::to_string(m) + ": folds do not partition the images");
    c.expect(max_view_imbalance(a, images) <= 1, "manifest " + std::to_string(m) + ": per-view sizes differ by > 1");

    std::vector<Patch> patches;
    for (const auto& e : images) {
      for (int p = 0; p < 3; ++p) patches.push_back(Patch{e.id, e.view, 200 * p, 0, 400, {}});
    }
    for (int f = 0; f < k; ++f) {
      const auto s = materialize_split(a, patches, f);
      std::set<std::string> train, test;
      for (const auto& p : s.train) train.insert(p.source_id);
      for (const auto& p : s.test) test.insert(p.source_id);
      for (const auto& id : test) c.expect(!train.count(id), "image " + id + " on both sides");
      c.expect(s.train.size() + s.test.size() == patches.size(), "patches lost in split");
    }
    auto reordered = images;
    std::reverse(reordered.begin(), reordered.end());
    c.expect(assignment_file_text(a) == assignment_file_text(assign_folds(reordered, k, seed)),
             "manifest " + std::to_string(m) + ": assignment file differs on rerun");
  }
  return {c.ok(), "100 manifests" + (c.ok() ? "" : "; " + c.notes())};
}

struct TrendRun {
  std::vector<ConditionSummary> rows;
  double seconds = 0.0;
  std::size_t seeds = 0;
};

const TrendRun& trend_run() {
  static const TrendRun run = [] {
    TrendRun r;
    BenchmarkConfig cfg;
    for (std::uint64_t s = 1; s <= 20; ++s) cfg.seeds.push_back(s);
    r.seeds = cfg.seeds.size();
    const auto t0 = std::chrono::steady_clock::now();
    r.rows = run_condition_benchmark(cfg);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

// 6. Ordering of the three dataset conditions.
Outcome table_trend() {
  const auto& run = trend_run();
  Checker c;
  using S = ConditionSummary;
  std::ostringstream detail;
  detail << run.seeds << " seeds in " << fmt("%.2f s", run.seconds);
  for (const auto& r : run.rows) {
    detail << "; " << to_string(r.condition) << " AP " << fmt("%.4f", S::mean(r.ap)) << " recall "
           << fmt("%.4f", S::mean(r.recall));
  }
  for (std::size_t i = 1; i < run.rows.size(); ++i) {
    c.expect(S::mean(run.rows[i - 1].ap) < S::mean(run.rows[i].ap), "AP not strictly increasing");
    c.expect(S::mean(run.rows[i - 1].recall) < S::mean(run.rows[i].recall), "recall not strictly increasing");
  }
  c.expect(S::mean(run.rows.back().recall) > 0.9, "recall after tiny removal not above 0.9");
  c.expect(run.seconds < 120.0, "runtime over 2 min");
  return {c.ok(), detail.str() + (c.ok() ? "" : " " + c.notes())};
}

// 7. AP(0.25) >= AP(0.5) >= AP(0.75) on every synthetic run.
Outcome iou_monotonicity() {
  const auto& run = trend_run();
  Checker c;
  std::size_t runs = 0;
  for (const auto& r : run.rows) {
    for (std::size_t i = 0; i < r.ap.size(); ++i) {
      ++runs;
      c.expect(r.ap_low[i] >= r.ap[i] && r.ap[i] >= r.ap_high[i],
               std::string(to_string(r.condition)) + " seed " + std::to_string(i + 1));
    }
  }
  return {c.ok(), std::to_string(runs) + " runs" + (c.ok() ? "" : "; " + c.notes())};
}

// 8. Annotation-only patchify throughput.
Outcome throughput() {
  const fs::path dir = fs::temp_directory_path() / ("aphidkit_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  SynthOptions o;
  o.images = 100;
  o.masks = false;
  o.scene.width = 3648;
  o.scene.height = 2736;
  o.scene.min_clusters = 100;
  o.scene.max_clusters = 200;
  cmd_synth(o, dir / "syn", 4);

  const auto t0 = std::chrono::steady_clock::now();
  const auto s = cmd_patchify(dir / "syn" / "manifest.json", dir / "patches", {PipelineConfig{}, true, 4});
  const double secs = seconds_since(t0);
  fs::remove_all(dir);
  Checker c;
  c.expect(s.images == 100, "processed " + std::to_string(s.images) + " images");
  c.expect(s.counts.windows == 23400, "windows " + std::to_string(s.counts.windows));
  c.expect(secs < 60.0, "runtime over 60 s");
  return {c.ok(), "100 images, " + std::to_string(s.counts.patches_kept) + " patches written in " + fmt("%.2f s", secs) +
                      " with 4 workers (" + std::to_string(std::thread::hardware_concurrency()) + " cores)" +
                      (c.ok() ? "" : "; " + c.notes())};
}

// 9. VOC write/read identity.
Outcome voc_round_trip() {
  std::mt19937_64 rng(1009);
  Checker c;
  std::size_t objects = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto img = gen::image(rng, "image_" + std::to_string(i));
    objects += img.instances.size();
    c.expect(read_voc_xml(write_voc_xml(img)) == img, "record " + std::to_string(i));
  }
  return {c.ok(), "1000 records, " + std::to_string(objects) + " objects" + (c.ok() ? "" : "; " + c.notes())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"geometry oracles", geometry_oracles},
      {"merge properties", merge_properties},
      {"AP oracle equivalence", ap_oracle},
      {"pipeline invariants", pipeline_invariants},
      {"split invariants", split_invariants},
      {"condition trend", table_trend},
      {"IoU-threshold monotonicity", iou_monotonicity},
      {"patchify throughput", throughput},
      {"VOC round trip", voc_round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %-28s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
