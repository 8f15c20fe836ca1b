#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aphid/error.hpp"
#include "aphid/geometry.hpp"
#include "aphid/patch.hpp"

namespace aphid {

/// Ground-truth boxes keyed by patch (or image) id. Patches without any
/// ground truth may be present with an empty list.
using GroundTruth = std::map<std::string, std::vector<BBox>>;

inline GroundTruth ground_truth_of(std::span<const Patch> patches) {
  GroundTruth gt;
  for (const auto& p : patches) {
    auto& boxes = gt[p.name()];
    for (const auto& inst : p.instances) boxes.push_back(inst.box);
  }
  return gt;
}

inline std::size_t count_boxes(const GroundTruth& gt) {
  std::size_t n = 0;
  for (const auto& [id, boxes] : gt) n += boxes.size();
  return n;
}

/// Global evaluation order: score descending, then box, then id.
inline bool pooled_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box != b.box) return a.box < b.box;
  return a.id < b.id;
}

struct MatchResult {
  std::vector<Detection> detections;  // in processing order
  std::vector<int> matched_gt;        // per detection: ground-truth index, or -1 (false positive)
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

namespace detail {

// Highest-IoU still-unmatched ground truth at or above the threshold; ties
// go to the lower index.
inline int best_unmatched(const BBox& box, std::span<const BBox> gts, const std::vector<bool>& taken,
                          double iou_thresh) {
  int best = -1;
  double best_iou = -1.0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (taken[g]) continue;
    const double iou = bbox_iou(box, gts[g]);
    if (iou > best_iou) {
      best_iou = iou;
      best = static_cast<int>(g);
    }
  }
  return (best >= 0 && best_iou >= iou_thresh) ? best : -1;
}

}  // namespace detail

/// Greedy matching within one patch: detections in score order each claim
/// the unmatched ground truth of highest IoU, if that IoU reaches iou_thresh.
inline MatchResult match_detections(std::span<const Detection> dets, std::span<const BBox> gts, double iou_thresh) {
  MatchResult r;
  r.detections.assign(dets.begin(), dets.end());
  for (const auto& d : r.detections) {
    if (d.id != r.detections.front().id) {
      throw InvalidArgument("match_detections: detections from patches '" + r.detections.front().id + "' and '" +
                            d.id + "' mixed");
    }
  }
  std::stable_sort(r.detections.begin(), r.detections.end(), score_order);
  std::vector<bool> taken(gts.size(), false);
  for (const auto& d : r.detections) {
    const int g = detail::best_unmatched(d.box, gts, taken, iou_thresh);
    r.matched_gt.push_back(g);
    if (g >= 0) {
      taken[static_cast<std::size_t>(g)] = true;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = gts.size() - r.tp;
  return r;
}

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;  // lowest score admitted at this point
};

/// Precision-recall samples, one per distinct detection score, in
/// decreasing score order (so recall is non-decreasing).
struct PRCurve {
  std::vector<PRPoint> points;
};

/// Replaces each precision by the maximum precision at any later point.
inline std::vector<double> precision_envelope(const PRCurve& curve) {
  std::vector<double> env(curve.points.size());
  double running = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    env[i] = running;
  }
  return env;
}

/// All-points interpolated area under the curve: sum of recall steps times
/// the enveloped precision, starting from recall 0.
inline double area_under(const PRCurve& curve) {
  const auto env = precision_envelope(curve);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    ap += (curve.points[i].recall - prev_recall) * env[i];
    prev_recall = curve.points[i].recall;
  }
  return ap;
}

struct ThresholdResult {
  double iou = 0.5;
  double ap = 0.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  PRCurve curve;
};

/// Pools detections over all patches, matches them in global score order
/// and integrates the precision-recall curve.
inline ThresholdResult evaluate_at(std::span<const Detection> dets, const GroundTruth& gts, double iou_thresh) {
  const std::size_t total_gt = count_boxes(gts);
  if (total_gt == 0) throw InvalidArgument("no ground-truth instances; AP is undefined");

  std::vector<Detection> pooled(dets.begin(), dets.end());
  std::stable_sort(pooled.begin(), pooled.end(), pooled_order);

  std::unordered_map<std::string, std::vector<bool>> taken;
  for (const auto& [id, boxes] : gts) taken[id].assign(boxes.size(), false);
  static const std::vector<BBox> kNone;

  ThresholdResult r;
  r.iou = iou_thresh;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const auto& d = pooled[i];
    const auto it = gts.find(d.id);
    const auto& boxes = it == gts.end() ? kNone : it->second;
    auto& flags = taken[d.id];
    if (flags.size() != boxes.size()) flags.assign(boxes.size(), false);
    const int g = detail::best_unmatched(d.box, boxes, flags, iou_thresh);
    if (g >= 0) {
      flags[static_cast<std::size_t>(g)] = true;
      ++tp;
    } else {
      ++fp;
    }
    const bool group_end = i + 1 == pooled.size() || pooled[i + 1].score != d.score;
    if (group_end) {
      r.curve.points.push_back({static_cast<double>(tp) / static_cast<double>(total_gt),
                                static_cast<double>(tp) / static_cast<double>(tp + fp), d.score});
    }
  }
  r.tp = tp;
  r.fp = fp;
  r.fn = total_gt - tp;
  r.recall = static_cast<double>(tp) / static_cast<double>(total_gt);
  r.ap = area_under(r.curve);
  return r;
}

inline std::pair<double, PRCurve> average_precision(std::span<const Detection> dets, const GroundTruth& gts,
                                                    double iou_thresh) {
  auto r = evaluate_at(dets, gts, iou_thresh);
  return {r.ap, std::move(r.curve)};
}

/// TP / (TP + FN) with every detection admitted.
inline double recall_overall(std::span<const Detection> dets, const GroundTruth& gts, double iou_thresh) {
  return evaluate_at(dets, gts, iou_thresh).recall;
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 9; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

struct EvalOptions {
  std::optional<double> nms;  // applied per patch before scoring when set
  bool coco_mean = false;     // also report mean AP over 0.50:0.05:0.95
};

struct EvalReport {
  std::vector<ThresholdResult> results;
  std::optional<double> coco_map;
  std::optional<double> nms;
  std::size_t ground_truth = 0;
  std::size_t detections = 0;
  std::map<std::string, double> infestation;  // per patch, filled by callers that want it
};

/// Per-patch NMS over a pooled detection list; output grouped by patch id.
inline std::vector<Detection> nms_per_patch(std::span<const Detection> dets, double iou_threshold) {
  std::map<std::string, std::vector<Detection>> by_patch;
  for (const auto& d : dets) by_patch[d.id].push_back(d);
  std::vector<Detection> out;
  for (auto& [id, list] : by_patch) {
    auto kept = nms(list, iou_threshold);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

inline EvalReport evaluate_sweep(std::span<const Detection> dets, const GroundTruth& gts,
                                 std::span<const double> thresholds, const EvalOptions& options = {}) {
  if (thresholds.empty()) throw InvalidArgument("at least one IoU threshold is required");
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("IoU thresholds must lie in (0,1]");
  }
  std::vector<Detection> scored(dets.begin(), dets.end());
  if (options.nms) scored = nms_per_patch(scored, *options.nms);

  EvalReport report;
  report.nms = options.nms;
  report.ground_truth = count_boxes(gts);
  report.detections = scored.size();
  for (double t : thresholds) report.results.push_back(evaluate_at(scored, gts, t));
  if (options.coco_mean) {
    double sum = 0.0;
    const auto coco = coco_thresholds();
    for (double t : coco) sum += evaluate_at(scored, gts, t).ap;
    report.coco_map = sum / static_cast<double>(coco.size());
  }
  return report;
}

/// Fraction of the patch covered by the union of boxes scoring at least
/// score_cutoff. Boxes are clipped to the patch.
inline double infestation_score(std::span<const Detection> patch_dets, int patch_size, double score_cutoff) {
  if (!(score_cutoff >= 0.0 && score_cutoff <= 1.0)) throw InvalidArgument("score cutoff must be in [0,1]");
  if (patch_size <= 0) throw InvalidArgument("patch size must be positive");
  const std::size_t n = static_cast<std::size_t>(patch_size);
  std::vector<std::uint8_t> covered(n * n, 0);
  std::size_t count = 0;
  for (const auto& d : patch_dets) {
    if (d.score < score_cutoff) continue;
    const int x1 = std::min(d.box.max_x(), patch_size);
    const int y1 = std::min(d.box.max_y(), patch_size);
    for (int y = d.box.min_y(); y < y1; ++y) {
      auto* row = covered.data() + static_cast<std::size_t>(y) * n;
      for (int x = d.box.min_x(); x < x1; ++x) {
        count += row[x] == 0;
        row[x] = 1;
      }
    }
  }
  return static_cast<double>(count) / static_cast<double>(n * n);
}

}  // namespace aphid
