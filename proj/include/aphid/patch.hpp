#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aphid/annotation.hpp"
#include "aphid/error.hpp"
#include "aphid/geometry.hpp"

namespace aphid {

/// Window offsets of a square sliding-window tiling.
struct PatchGrid {
  int patch = 400;
  int stride = 200;
  std::vector<std::pair<int, int>> offsets;  // (x, y), row-major

  BBox window(std::size_t i) const {
    const auto [x, y] = offsets[i];
    return BBox(x, y, x + patch, y + patch);
  }
};

namespace detail {

inline std::vector<int> axis_offsets(int dim, int patch, int stride) {
  std::vector<int> out;
  const int last = dim - patch;
  for (int o = 0; o <= last; o += stride) out.push_back(o);
  if (out.back() != last) out.push_back(last);
  return out;
}

}  // namespace detail

/// Offsets 0, stride, 2*stride, ... along each axis, plus a flush window at
/// dim - patch when the stride does not land there exactly.
inline PatchGrid plan_grid(int width, int height, int patch, int stride) {
  if (patch <= 0) throw InvalidArgument("patch size must be positive");
  if (stride < 1 || stride > patch) throw InvalidArgument("stride must be in [1, patch]");
  if (patch > width || patch > height) {
    throw InvalidArgument("image " + std::to_string(width) + "x" + std::to_string(height) +
                          " is smaller than the patch size " + std::to_string(patch));
  }
  PatchGrid grid{patch, stride, {}};
  const auto xs = detail::axis_offsets(width, patch, stride);
  const auto ys = detail::axis_offsets(height, patch, stride);
  grid.offsets.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) grid.offsets.emplace_back(x, y);
  }
  return grid;
}

/// A square crop of a source image with annotations in patch-local coordinates.
struct Patch {
  std::string source_id;
  View view = View::view1;
  int x_offset = 0;
  int y_offset = 0;
  int size = 400;
  std::vector<ClusterInstance> instances;

  /// <image_id>_x<offset>_y<offset>
  std::string name() const {
    return source_id + "_x" + std::to_string(x_offset) + "_y" + std::to_string(y_offset);
  }

  BBox window() const { return BBox(x_offset, y_offset, x_offset + size, y_offset + size); }

  bool operator==(const Patch&) const = default;
};

/// The patch as a standalone annotated image, named after the patch.
inline AnnotatedImage to_annotated_image(const Patch& p) {
  AnnotatedImage img;
  img.id = p.name();
  img.width = p.size;
  img.height = p.size;
  img.view = p.view;
  img.instances = p.instances;
  return img;
}

namespace detail {

inline void sort_instances(std::vector<ClusterInstance>& v) {
  std::stable_sort(v.begin(), v.end(), [](const ClusterInstance& a, const ClusterInstance& b) {
    if (a.box != b.box) return row_major_less(a.box, b.box);
    return a.id < b.id;
  });
}

}  // namespace detail

/// Intersects every instance with every window of the grid. Instances cut by
/// a window are flagged clipped; their area is recounted from the mask when
/// the image carries one, otherwise scaled by the kept fraction of the box.
inline std::vector<Patch> crop_annotations(const AnnotatedImage& image, const PatchGrid& grid) {
  std::vector<Patch> patches;
  patches.reserve(grid.offsets.size());
  for (std::size_t i = 0; i < grid.offsets.size(); ++i) {
    const BBox win = grid.window(i);
    if (win.max_x() > image.width || win.max_y() > image.height) {
      throw InvalidArgument("grid window exceeds image '" + image.id + "'");
    }
    Patch p{image.id, image.view, win.min_x(), win.min_y(), grid.patch, {}};
    for (const auto& inst : image.instances) {
      const auto inter = intersect(inst.box, win);
      if (!inter) continue;
      ClusterInstance local = inst;
      local.box = inter->translated(-win.min_x(), -win.min_y());
      const bool cut = *inter != inst.box;
      if (cut) {
        local.clipped = true;
        if (local.source == InstanceSource::labeled) local.source = InstanceSource::clipped;
        if (image.mask) {
          const auto a = image.mask->area_within(inst.id, *inter);
          if (a == 0) continue;  // only the box reaches into this window
          local.area = a;
        } else if (inst.area) {
          const double kept = static_cast<double>(inter->area()) / static_cast<double>(inst.box.area());
          local.area = std::max<std::int64_t>(1, std::llround(static_cast<double>(*inst.area) * kept));
        }
      }
      p.instances.push_back(std::move(local));
    }
    detail::sort_instances(p.instances);
    patches.push_back(std::move(p));
  }
  return patches;
}

/// Merges instances whose boxes are within threshold pixels of each other.
/// A merged instance takes the smallest member id and the summed member
/// areas (unset if any member lacks one).
inline Patch merge_patch_instances(Patch patch, double threshold) {
  std::vector<BBox> boxes;
  for (const auto& inst : patch.instances) boxes.push_back(inst.box);
  std::vector<ClusterInstance> out;
  for (const auto& g : merge_close_groups(boxes, threshold)) {
    if (g.members.size() == 1) {
      out.push_back(patch.instances[g.members.front()]);
      continue;
    }
    ClusterInstance m = patch.instances[g.members.front()];
    m.box = g.box;
    m.source = InstanceSource::merged;
    std::int64_t sum = 0;
    bool have_areas = true;
    for (auto idx : g.members) {
      const auto& member = patch.instances[idx];
      m.id = std::min(m.id, member.id);
      m.clipped = m.clipped || member.clipped;
      if (member.area) sum += *member.area;
      else have_areas = false;
    }
    m.area = have_areas ? std::optional<std::int64_t>(sum) : std::nullopt;
    out.push_back(std::move(m));
  }
  patch.instances = std::move(out);
  detail::sort_instances(patch.instances);
  return patch;
}

/// Drops instances whose area (mask pixels if known, else box area) is
/// strictly less than min_fraction of the patch area.
inline Patch filter_tiny(Patch patch, double min_fraction = 0.01) {
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0)) throw InvalidArgument("min_fraction must be in [0,1]");
  const double cut = min_fraction * static_cast<double>(patch.size) * static_cast<double>(patch.size);
  std::erase_if(patch.instances,
                [cut](const ClusterInstance& inst) { return static_cast<double>(inst.effective_area()) < cut; });
  return patch;
}

inline std::vector<Patch> discard_empty(std::vector<Patch> patches) {
  std::erase_if(patches, [](const Patch& p) { return p.instances.empty(); });
  return patches;
}

struct PipelineConfig {
  int patch = 400;
  int stride = 200;
  double merge_px = 10.0;
  double min_fraction = 0.01;
  bool merge = true;
  bool remove_tiny = true;

  bool operator==(const PipelineConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"patch", c.patch},       {"stride", c.stride}, {"merge_px", c.merge_px},
                     {"min_fraction", c.min_fraction}, {"merge", c.merge},   {"remove_tiny", c.remove_tiny}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  if (j.contains("patch")) c.patch = j.at("patch").get<int>();
  if (j.contains("stride")) c.stride = j.at("stride").get<int>();
  if (j.contains("merge_px")) c.merge_px = j.at("merge_px").get<double>();
  if (j.contains("min_fraction")) c.min_fraction = j.at("min_fraction").get<double>();
  if (j.contains("merge")) c.merge = j.at("merge").get<bool>();
  if (j.contains("remove_tiny")) c.remove_tiny = j.at("remove_tiny").get<bool>();
}

/// The three dataset conditions compared throughout: as labeled, with close
/// boxes merged, and additionally with tiny fragments removed.
enum class Condition { original, merged, merged_and_trimmed };

inline PipelineConfig config_for(Condition c, PipelineConfig base = {}) {
  base.merge = c != Condition::original;
  base.remove_tiny = c == Condition::merged_and_trimmed;
  return base;
}

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::original: return "original";
    case Condition::merged: return "+merge";
    case Condition::merged_and_trimmed: return "+rm";
  }
  return "original";
}

/// Instance and patch counts after each stage.
struct StageCounts {
  std::size_t windows = 0;
  std::size_t cropped = 0;   // instances after cropping
  std::size_t merged = 0;    // instances after merging
  std::size_t kept = 0;      // instances after tiny removal
  std::size_t patches_discarded = 0;
  std::size_t patches_kept = 0;

  StageCounts& operator+=(const StageCounts& o) {
    windows += o.windows;
    cropped += o.cropped;
    merged += o.merged;
    kept += o.kept;
    patches_discarded += o.patches_discarded;
    patches_kept += o.patches_kept;
    return *this;
  }
};

struct PipelineResult {
  std::vector<Patch> patches;
  StageCounts counts;
};

/// Tiles, crops, optionally merges and filters, then discards empty patches.
inline PipelineResult run_pipeline(const AnnotatedImage& image, const PipelineConfig& config) {
  PipelineResult r;
  const auto grid = plan_grid(image.width, image.height, config.patch, config.stride);
  auto patches = crop_annotations(image, grid);
  r.counts.windows = patches.size();
  for (auto& p : patches) {
    r.counts.cropped += p.instances.size();
    if (config.merge) p = merge_patch_instances(std::move(p), config.merge_px);
    r.counts.merged += p.instances.size();
    if (config.remove_tiny) p = filter_tiny(std::move(p), config.min_fraction);
    r.counts.kept += p.instances.size();
  }
  r.patches = discard_empty(std::move(patches));
  r.counts.patches_kept = r.patches.size();
  r.counts.patches_discarded = r.counts.windows - r.counts.patches_kept;
  return r;
}

inline std::vector<Patch> pipeline(const AnnotatedImage& image, const PipelineConfig& config) {
  return run_pipeline(image, config).patches;
}

}  // namespace aphid
