#pragma once

// End-to-end commands behind the aphidkit CLI. Each takes explicit options,
// writes its outputs and returns a summary; nothing here reads argv.

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "aphid/annotation.hpp"
#include "aphid/cv_split.hpp"
#include "aphid/error.hpp"
#include "aphid/eval.hpp"
#include "aphid/manifest.hpp"
#include "aphid/patch.hpp"
#include "aphid/png_io.hpp"
#include "aphid/report.hpp"
#include "aphid/synth.hpp"
#include "aphid/voc_xml.hpp"

namespace aphid {

namespace fs = std::filesystem;

/// Runs body(i) for i in [0, n) on up to `jobs` threads. The first exception
/// thrown by any call is rethrown after all workers stop.
template <typename Body>
void parallel_for(std::size_t n, int jobs, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n || failed.load()) return;
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Removes a freshly created output directory unless commit() is called.
class OutputDirGuard {
 public:
  explicit OutputDirGuard(fs::path dir) : dir_(std::move(dir)) {
    created_ = !fs::exists(dir_);
    fs::create_directories(dir_);
  }
  OutputDirGuard(const OutputDirGuard&) = delete;
  OutputDirGuard& operator=(const OutputDirGuard&) = delete;
  ~OutputDirGuard() {
    if (!committed_ && created_) {
      std::error_code ec;
      fs::remove_all(dir_, ec);
    }
  }
  void commit() { committed_ = true; }
  const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
  bool created_ = false;
  bool committed_ = false;
};

// ---------------------------------------------------------------------------
// Patch datasets on disk: <dir>/patches.json plus one VOC file per patch
// under <dir>/annotations and, when crops were written, PNGs under <dir>/images.

struct PatchRecord {
  std::string id;
  std::string source;
  View view = View::view1;
  int x = 0;
  int y = 0;
  int size = 400;
  std::string annotation;  // relative to the dataset directory
  std::string image;       // empty when no crop was written
};

struct PatchDataset {
  fs::path root;
  PipelineConfig config;
  StageCounts counts;
  std::vector<PatchRecord> patches;
};

inline nlohmann::json counts_to_json(const StageCounts& c) {
  return {{"windows", c.windows},           {"instances_cropped", c.cropped},
          {"instances_after_merge", c.merged}, {"instances_kept", c.kept},
          {"patches_discarded", c.patches_discarded}, {"patches_kept", c.patches_kept}};
}

inline void write_patch_dataset_index(const PatchDataset& ds) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : ds.patches) {
    nlohmann::json j{{"id", p.id},   {"source", p.source}, {"view", std::string(to_string(p.view))},
                     {"x", p.x},     {"y", p.y},           {"size", p.size},
                     {"annotation", p.annotation}};
    if (!p.image.empty()) j["image"] = p.image;
    list.push_back(std::move(j));
  }
  nlohmann::json root{{"config", ds.config}, {"counts", counts_to_json(ds.counts)}, {"patches", std::move(list)}};
  write_text(ds.root / "patches.json", root.dump(2) + "\n");
}

inline PatchDataset read_patch_dataset_index(const fs::path& dir) {
  PatchDataset ds;
  ds.root = dir;
  const auto path = dir / "patches.json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
    ds.config = j.at("config").get<PipelineConfig>();
    const auto& c = j.at("counts");
    ds.counts.windows = c.at("windows").get<std::size_t>();
    ds.counts.cropped = c.at("instances_cropped").get<std::size_t>();
    ds.counts.merged = c.at("instances_after_merge").get<std::size_t>();
    ds.counts.kept = c.at("instances_kept").get<std::size_t>();
    ds.counts.patches_discarded = c.at("patches_discarded").get<std::size_t>();
    ds.counts.patches_kept = c.at("patches_kept").get<std::size_t>();
    for (const auto& p : j.at("patches")) {
      PatchRecord r;
      r.id = p.at("id").get<std::string>();
      r.source = p.at("source").get<std::string>();
      r.view = parse_view(p.at("view").get<std::string>());
      r.x = p.at("x").get<int>();
      r.y = p.at("y").get<int>();
      r.size = p.at("size").get<int>();
      r.annotation = p.at("annotation").get<std::string>();
      if (p.contains("image")) r.image = p["image"].get<std::string>();
      ds.patches.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), e.what());
  }
  return ds;
}

/// Reads every patch annotation of a patch dataset back into Patch records.
inline std::vector<Patch> load_patches(const fs::path& dir) {
  const auto ds = read_patch_dataset_index(dir);
  std::vector<Patch> out;
  out.reserve(ds.patches.size());
  for (const auto& r : ds.patches) {
    const auto img = read_voc_file(dir / r.annotation);
    if (img.width != r.size || img.height != r.size) {
      throw IoError((dir / r.annotation).string(), "annotation size does not match the patch size");
    }
    out.push_back(Patch{r.source, r.view, r.x, r.y, r.size, img.instances});
  }
  return out;
}

// ---------------------------------------------------------------------------
// patchify

struct PatchifyOptions {
  PipelineConfig config;
  bool annotation_only = false;  // ignore masks and images, use VOC annotations
  int jobs = 1;
};

struct PatchifySummary {
  std::size_t images = 0;
  StageCounts counts;
};

inline PatchifySummary cmd_patchify(const fs::path& manifest_path, const fs::path& out_dir,
                                    const PatchifyOptions& opt) {
  const auto manifest = read_manifest(manifest_path);
  OutputDirGuard guard(out_dir);
  fs::create_directories(out_dir / "annotations");

  struct ImageResult {
    std::vector<Patch> patches;
    StageCounts counts;
    bool crops = false;
  };
  std::vector<ImageResult> results(manifest.images.size());

  parallel_for(manifest.images.size(), opt.jobs, [&](std::size_t i) {
    ManifestEntry entry = manifest.images[i];
    if (opt.annotation_only) {
      entry.mask.clear();
      if (entry.annotation.empty()) {
        throw InvalidArgument("image '" + entry.id + "' has no annotation file for annotation-only mode");
      }
    }
    const AnnotatedImage image = load_image(manifest, entry);
    auto r = run_pipeline(image, opt.config);
    results[i].counts = r.counts;
    if (!opt.annotation_only && !entry.image.empty()) {
      const auto raster = read_rgb_png(resolve(manifest, entry.image));
      if (raster.width != image.width || raster.height != image.height) {
        throw IoError(resolve(manifest, entry.image).string(), "image size does not match manifest");
      }
      fs::create_directories(out_dir / "images");
      for (const auto& p : r.patches) write_rgb_png(out_dir / "images" / (p.name() + ".png"), raster.crop(p.window()));
      results[i].crops = true;
    }
    results[i].patches = std::move(r.patches);
  });

  PatchDataset ds;
  ds.root = out_dir;
  ds.config = opt.config;
  for (const auto& r : results) {
    ds.counts += r.counts;
    for (const auto& p : r.patches) {
      const std::string name = p.name();
      const std::string ann = "annotations/" + name + ".xml";
      write_voc_file(out_dir / ann, to_annotated_image(p));
      ds.patches.push_back(
          PatchRecord{name, p.source_id, p.view, p.x_offset, p.y_offset, p.size, ann, r.crops ? "images/" + name + ".png" : ""});
    }
  }
  write_patch_dataset_index(ds);
  guard.commit();
  return PatchifySummary{manifest.images.size(), ds.counts};
}

// ---------------------------------------------------------------------------
// split

struct SplitSummary {
  FoldAssignment assignment;
  int max_imbalance = 0;
};

inline SplitSummary cmd_split(const fs::path& manifest_path, int k, std::uint64_t seed, const fs::path& out_file) {
  const auto manifest = read_manifest(manifest_path);
  SplitSummary s{assign_folds(manifest.images, k, seed), 0};
  s.max_imbalance = max_view_imbalance(s.assignment, manifest.images);
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_text(out_file, assignment_file_text(s.assignment));
  return s;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateInput {
  std::string name;  // condition label
  fs::path gt_dir;
  fs::path predictions;
};

struct EvaluateOptions {
  std::vector<double> thresholds{0.5};
  std::optional<double> nms;
  bool coco_mean = false;
  bool svg = false;
  double infestation_cutoff = 0.5;
  std::optional<fs::path> cross_val;  // fold assignment file
};

struct FoldStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

inline FoldStats mean_std(const std::vector<double>& v) {
  FoldStats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct CrossValRow {
  std::string condition;
  double iou = 0.5;
  std::size_t folds = 0;
  FoldStats ap;
  FoldStats recall;
};

struct EvaluateSummary {
  std::map<std::string, EvalReport> reports;  // by condition
  std::vector<CrossValRow> cross_val;
};

namespace detail {

struct LoadedCondition {
  std::vector<Patch> patches;
  GroundTruth gt;
  std::vector<Detection> dets;
  std::optional<double> nms;
};

inline LoadedCondition load_condition(const EvaluateInput& in) {
  LoadedCondition c;
  c.patches = load_patches(in.gt_dir);
  c.gt = ground_truth_of(c.patches);
  auto preds = read_predictions(in.predictions);
  c.nms = preds.nms;
  std::map<std::string, int> sizes;
  for (const auto& p : c.patches) sizes[p.name()] = p.size;
  std::set<std::string> unknown;
  for (const auto& d : preds.detections) {
    const auto it = sizes.find(d.id);
    if (it == sizes.end()) {
      unknown.insert(d.id);
    } else if (d.box.max_x() > it->second || d.box.max_y() > it->second) {
      throw InvalidArgument(in.predictions.string() + ": detection box outside patch '" + d.id + "'");
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& id : unknown) list += "\n  " + id;
    throw InvalidArgument(in.predictions.string() + ": " + std::to_string(unknown.size()) +
                          " prediction id(s) have no ground-truth patch:" + list);
  }
  c.dets = std::move(preds.detections);
  return c;
}

inline std::string iou_tag(double t) { return format_fixed(t, 2); }

}  // namespace detail

inline EvaluateSummary cmd_evaluate(const std::vector<EvaluateInput>& inputs, const fs::path& out_dir,
                                    const EvaluateOptions& opt) {
  if (inputs.empty()) throw InvalidArgument("nothing to evaluate");
  std::set<std::string> names;
  for (const auto& in : inputs) {
    if (!names.insert(in.name).second) throw InvalidArgument("duplicate condition name '" + in.name + "'");
  }
  std::optional<FoldAssignment> folds;
  if (opt.cross_val) folds = assignment_from_json(nlohmann::json::parse(read_text(*opt.cross_val)));

  std::vector<detail::LoadedCondition> loaded;
  for (const auto& in : inputs) loaded.push_back(detail::load_condition(in));

  OutputDirGuard guard(out_dir);
  EvaluateSummary summary;
  for (std::size_t c = 0; c < inputs.size(); ++c) {
    const auto& in = inputs[c];
    const auto& cond = loaded[c];
    EvalOptions eo{opt.nms ? opt.nms : cond.nms, opt.coco_mean};
    auto report = evaluate_sweep(cond.dets, cond.gt, opt.thresholds, eo);

    std::map<std::string, std::vector<Detection>> by_patch;
    for (const auto& d : cond.dets) by_patch[d.id].push_back(d);
    for (const auto& p : cond.patches) {
      report.infestation[p.name()] = infestation_score(by_patch[p.name()], p.size, opt.infestation_cutoff);
    }

    const fs::path dir = inputs.size() == 1 ? out_dir : out_dir / in.name;
    fs::create_directories(dir);
    write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_text(dir / "report.csv", report_csv(report));
    if (opt.svg) {
      for (const auto& t : report.results) write_text(dir / ("pr_iou" + detail::iou_tag(t.iou) + ".svg"), pr_curve_svg(t));
    }

    if (folds) {
      std::map<std::string, int> patch_fold;
      for (const auto& p : cond.patches) patch_fold[p.name()] = folds->fold_of(p.source_id);
      for (double t : opt.thresholds) {
        std::vector<double> aps, recalls;
        for (int f = 0; f < folds->k; ++f) {
          GroundTruth gt;
          for (const auto& [id, boxes] : cond.gt) {
            if (patch_fold[id] == f) gt[id] = boxes;
          }
          if (count_boxes(gt) == 0) continue;
          std::vector<Detection> dets;
          for (const auto& d : cond.dets) {
            if (patch_fold[d.id] == f) dets.push_back(d);
          }
          if (eo.nms) dets = nms_per_patch(dets, *eo.nms);
          const auto r = evaluate_at(dets, gt, t);
          aps.push_back(r.ap);
          recalls.push_back(r.recall);
        }
        summary.cross_val.push_back(CrossValRow{in.name, t, aps.size(), mean_std(aps), mean_std(recalls)});
      }
    }
    summary.reports.emplace(in.name, std::move(report));
  }

  if (folds) {
    std::string csv = "condition,iou,folds,ap_mean,ap_std,recall_mean,recall_std\n";
    for (const auto& r : summary.cross_val) {
      csv += r.condition + "," + format_fixed(r.iou, 2) + "," + std::to_string(r.folds) + "," +
             format_fixed(r.ap.mean) + "," + format_fixed(r.ap.std) + "," + format_fixed(r.recall.mean) + "," +
             format_fixed(r.recall.std) + "\n";
    }
    write_text(out_dir / "crossval.csv", csv);
  }
  guard.commit();
  return summary;
}

/// "41.9±1.91" style cell: percent with one decimal, std with two.
inline std::string mean_pm_std(const FoldStats& s) {
  return format_fixed(100.0 * s.mean, 1) + "±" + format_fixed(100.0 * s.std, 2);
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SceneConfig scene;
  int images = 3;
  bool masks = true;
  bool render = false;
};

/// Writes a synthetic dataset: manifest.json, VOC annotations, 16-bit masks
/// and optionally rendered RGB images. Image i uses seed derived from
/// (scene.seed, i) and view i mod 3.
inline DatasetManifest cmd_synth(const SynthOptions& opt, const fs::path& out_dir, int jobs = 1) {
  opt.scene.validate();
  if (opt.images < 0) throw InvalidArgument("image count must be >= 0");
  OutputDirGuard guard(out_dir);
  fs::create_directories(out_dir / "annotations");
  if (opt.masks) fs::create_directories(out_dir / "masks");
  if (opt.render) fs::create_directories(out_dir / "images");

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.images.resize(static_cast<std::size_t>(opt.images));
  parallel_for(manifest.images.size(), jobs, [&](std::size_t i) {
    SceneConfig sc = opt.scene;
    sc.seed = Rng::mix(opt.scene.seed ^ Rng::mix(i + 1));
    sc.view = kAllViews[i % kAllViews.size()];
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "img%04zu", i);
    sc.id = idbuf;
    const auto scene = gen_scene(sc);
    ManifestEntry e;
    e.id = sc.id;
    e.view = sc.view;
    e.width = sc.width;
    e.height = sc.height;
    e.annotation = "annotations/" + sc.id + ".xml";
    write_voc_file(out_dir / e.annotation, scene);
    if (opt.masks) {
      e.mask = "masks/" + sc.id + ".png";
      write_label_png(out_dir / e.mask, *scene.mask);
    }
    if (opt.render) {
      e.image = "images/" + sc.id + ".png";
      write_rgb_png(out_dir / e.image, render_scene(scene, sc));
    }
    manifest.images[i] = std::move(e);
  });
  write_manifest(out_dir / "manifest.json", manifest);
  nlohmann::json cfg = opt.scene;
  cfg["images"] = opt.images;
  write_text(out_dir / "synth_config.json", cfg.dump(2) + "\n");
  guard.commit();
  return manifest;
}

/// Simulated detections for an existing patch dataset.
inline std::vector<Detection> cmd_simulate(const fs::path& gt_dir, const DetectorNoise& noise,
                                           const fs::path& out_file) {
  const auto patches = load_patches(gt_dir);
  auto dets = simulate_detector(patches, noise);
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_predictions(out_file, dets);
  return dets;
}

}  // namespace aphid
