// aphidkit: patch tiling, cross-validation splits, detection scoring and
// synthetic benchmarks for aphid-cluster annotations.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aphid/aphid.hpp"

namespace {

using namespace aphid;

struct PipelineFlags {
  std::string config_file;
  std::optional<int> patch;
  std::optional<int> stride;
  std::optional<double> merge_px;
  std::optional<double> min_fraction;
  bool no_merge = false;
  bool no_remove_tiny = false;

  PipelineConfig resolve() const {
    PipelineConfig c;
    if (!config_file.empty()) c = nlohmann::json::parse(read_text(config_file)).get<PipelineConfig>();
    if (patch) c.patch = *patch;
    if (stride) c.stride = *stride;
    if (merge_px) c.merge_px = *merge_px;
    if (min_fraction) c.min_fraction = *min_fraction;
    if (no_merge) c.merge = false;
    if (no_remove_tiny) c.remove_tiny = false;
    return c;
  }
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
  cmd->add_option("--config", f.config_file, "Pipeline config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--patch", f.patch, "Patch side in pixels (default 400)")->check(CLI::PositiveNumber);
  cmd->add_option("--stride", f.stride, "Window stride in pixels (default 200)")->check(CLI::PositiveNumber);
  auto* merge_px = cmd->add_option("--merge-px", f.merge_px, "Merge boxes this close, in pixels (default 10)")
                       ->check(CLI::NonNegativeNumber);
  auto* min_fraction = cmd->add_option("--min-fraction", f.min_fraction,
                                       "Drop instances below this fraction of the patch area (default 0.01)")
                           ->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--no-merge", f.no_merge, "Skip box merging")->excludes(merge_px);
  cmd->add_flag("--no-remove-tiny", f.no_remove_tiny, "Skip tiny-instance removal")->excludes(min_fraction);
}

void print_counts(const StageCounts& c) {
  std::printf("windows:                 %zu\n", c.windows);
  std::printf("instances after crop:    %zu\n", c.cropped);
  std::printf("instances after merge:   %zu\n", c.merged);
  std::printf("instances after removal: %zu\n", c.kept);
  std::printf("patches discarded:       %zu\n", c.patches_discarded);
  std::printf("patches kept:            %zu\n", c.patches_kept);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aphid-cluster dataset engineering and detection evaluation"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  // patchify
  auto* patchify = app.add_subcommand("patchify", "Tile a dataset into annotated patches");
  std::string patchify_manifest, patchify_out;
  PipelineFlags pipeline_flags;
  bool annotation_only = false;
  patchify->add_option("manifest", patchify_manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  patchify->add_option("--out", patchify_out, "Output directory")->required();
  patchify->add_flag("--annotation-only", annotation_only, "Use VOC annotations only; no masks or crops");
  patchify->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_pipeline_flags(patchify, pipeline_flags);

  // split
  auto* split = app.add_subcommand("split", "Assign source images to view-stratified folds");
  std::string split_manifest, split_out;
  int k = 10;
  std::uint64_t split_seed = 0;
  bool check = false;
  split->add_option("manifest", split_manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  split->add_option("--k", k, "Number of folds")->check(CLI::Range(2, 1 << 20));
  split->add_option("--seed", split_seed, "Shuffle seed")->required();
  split->add_option("--out", split_out, "Assignment JSON file")->required();
  split->add_flag("--check", check, "Verify per-view fold sizes differ by at most one");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against patch ground truth");
  std::vector<std::string> gt_dirs, pred_files, names;
  std::vector<double> ious{0.5};
  std::optional<double> nms;
  bool coco = false, svg = false;
  double infestation_cutoff = 0.5;
  std::string cross_val, eval_out;
  evaluate->add_option("--gt", gt_dirs, "Patch dataset directory (repeat per condition)")->required();
  evaluate->add_option("--pred", pred_files, "Prediction JSON-lines file (repeat per condition)")->required();
  evaluate->add_option("--name", names, "Condition names, in --gt order");
  evaluate->add_option("--iou", ious, "IoU thresholds, comma separated")->delimiter(',')->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--nms", nms, "Apply NMS at this IoU before scoring")->check(CLI::Range(0.0, 1.0));
  evaluate->add_flag("--coco", coco, "Also report mean AP over IoU 0.50:0.05:0.95");
  evaluate->add_flag("--svg", svg, "Write PR-curve plots");
  evaluate->add_option("--infestation-cutoff", infestation_cutoff, "Score cutoff for infestation coverage")
      ->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--cross-val", cross_val, "Fold assignment; report mean and std over folds")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", eval_out, "Output directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset, or simulated predictions");
  std::string synth_out, synth_config, noise_config, predict_dir;
  std::uint64_t synth_seed = 1;
  int synth_images = 3;
  std::vector<int> clusters;
  std::optional<int> synth_width, synth_height;
  bool render = false, no_masks = false;
  synth->add_option("--out", synth_out, "Output directory (dataset) or file (--predict)")->required();
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--config", synth_config, "Scene config JSON")->check(CLI::ExistingFile);
  auto* images_opt = synth->add_option("--images", synth_images, "Number of images")->check(CLI::NonNegativeNumber);
  auto* clusters_opt =
      synth->add_option("--clusters", clusters, "Clusters per image: N or MIN,MAX")->delimiter(',')->expected(1, 2);
  synth->add_option("--width", synth_width, "Image width")->check(CLI::PositiveNumber);
  synth->add_option("--height", synth_height, "Image height")->check(CLI::PositiveNumber);
  auto* render_opt = synth->add_flag("--render", render, "Also write RGB images");
  auto* no_masks_opt = synth->add_flag("--no-masks", no_masks, "Skip label-map masks");
  synth->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* predict_opt = synth->add_option("--predict", predict_dir, "Simulate a detector on this patch dataset")
                          ->check(CLI::ExistingDirectory);
  synth->add_option("--noise", noise_config, "Detector noise JSON (with --predict)")->check(CLI::ExistingFile);
  predict_opt->excludes(images_opt)->excludes(clusters_opt)->excludes(render_opt)->excludes(no_masks_opt);

  // stats
  auto* stats = app.add_subcommand("stats", "Cluster counts and mask-area statistics");
  std::string stats_manifest, stats_out;
  stats->add_option("manifest", stats_manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  stats->add_option("--out", stats_out, "Also write the statistics JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*patchify) {
      PatchifyOptions opt{pipeline_flags.resolve(), annotation_only, jobs};
      const auto s = cmd_patchify(patchify_manifest, patchify_out, opt);
      if (!quiet) {
        std::printf("images:                  %zu\n", s.images);
        print_counts(s.counts);
      }
    } else if (*split) {
      const auto s = cmd_split(split_manifest, k, split_seed, split_out);
      if (!quiet) std::printf("assigned %zu images to %d folds\n", s.assignment.folds.size(), k);
      if (check) {
        std::printf("max per-view fold size difference: %d\n", s.max_imbalance);
        if (s.max_imbalance > 1) {
          std::fprintf(stderr, "error: stratification check failed\n");
          return 1;
        }
      }
    } else if (*evaluate) {
      if (gt_dirs.size() != pred_files.size()) throw InvalidArgument("--gt and --pred must be given equally often");
      if (!names.empty() && names.size() != gt_dirs.size()) throw InvalidArgument("--name must match --gt count");
      std::vector<EvaluateInput> inputs;
      for (std::size_t i = 0; i < gt_dirs.size(); ++i) {
        const std::string name = names.empty() ? (gt_dirs.size() == 1 ? "default" : "c" + std::to_string(i)) : names[i];
        inputs.push_back({name, gt_dirs[i], pred_files[i]});
      }
      EvaluateOptions opt;
      opt.thresholds = ious;
      opt.nms = nms;
      opt.coco_mean = coco;
      opt.svg = svg;
      opt.infestation_cutoff = infestation_cutoff;
      if (!cross_val.empty()) opt.cross_val = cross_val;
      const auto s = cmd_evaluate(inputs, eval_out, opt);
      if (!quiet) {
        for (const auto& in : inputs) {
          const auto& r = s.reports.at(in.name);
          for (const auto& t : r.results) {
            std::printf("%-12s IoU %.2f  AP %.4f  recall %.4f  TP %zu FP %zu FN %zu\n", in.name.c_str(), t.iou, t.ap,
                        t.recall, t.tp, t.fp, t.fn);
          }
          if (r.coco_map) std::printf("%-12s AP@[.50:.95] %.4f\n", in.name.c_str(), *r.coco_map);
        }
        if (!s.cross_val.empty()) {
          std::printf("\n%-12s %-6s %-14s %-14s\n", "condition", "IoU", "AP", "recall");
          for (const auto& row : s.cross_val) {
            std::printf("%-12s %-6.2f %-15s %-15s\n", row.condition.c_str(), row.iou, mean_pm_std(row.ap).c_str(),
                        mean_pm_std(row.recall).c_str());
          }
        }
      }
    } else if (*synth) {
      if (!predict_dir.empty()) {
        DetectorNoise noise;
        if (!noise_config.empty()) noise = nlohmann::json::parse(read_text(noise_config)).get<DetectorNoise>();
        noise.seed = synth_seed;
        const auto dets = cmd_simulate(predict_dir, noise, synth_out);
        if (!quiet) std::printf("wrote %zu detections\n", dets.size());
      } else {
        SynthOptions opt;
        if (!synth_config.empty()) opt.scene = nlohmann::json::parse(read_text(synth_config)).get<SceneConfig>();
        opt.scene.seed = synth_seed;
        opt.images = synth_images;
        if (clusters.size() == 1) opt.scene.min_clusters = opt.scene.max_clusters = clusters[0];
        if (clusters.size() == 2) {
          opt.scene.min_clusters = clusters[0];
          opt.scene.max_clusters = clusters[1];
        }
        if (synth_width) opt.scene.width = *synth_width;
        if (synth_height) opt.scene.height = *synth_height;
        opt.render = render;
        opt.masks = !no_masks;
        const auto m = cmd_synth(opt, synth_out, jobs);
        if (!quiet) std::printf("wrote %zu images to %s\n", m.images.size(), synth_out.c_str());
      }
    } else if (*stats) {
      const auto s = dataset_stats(read_manifest(stats_manifest));
      const auto j = stats_to_json(s);
      if (!stats_out.empty()) write_text(stats_out, j.dump(2) + "\n");
      if (!quiet) {
        std::printf("images:   %zu\n", s.images);
        std::printf("clusters: %zu\n", s.clusters);
        std::printf("views:    view1 %.1f%%  view2 %.1f%%  view3 %.1f%%\n", s.view_percent[0], s.view_percent[1],
                    s.view_percent[2]);
        std::printf("area:     median %.1f px  mean %.1f px  (%zu at or above %d px)\n", s.areas.median, s.areas.mean,
                    s.areas.above_limit, AreaStats::kHistogramLimit);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
