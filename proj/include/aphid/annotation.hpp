#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aphid/error.hpp"
#include "aphid/geometry.hpp"

namespace aphid {

/// Camera height the image was taken from; the stratification key for splits.
enum class View { view1, view2, view3 };

inline constexpr std::array<View, 3> kAllViews = {View::view1, View::view2, View::view3};

inline std::string_view to_string(View v) {
  switch (v) {
    case View::view1: return "view1";
    case View::view2: return "view2";
    case View::view3: return "view3";
  }
  return "view1";
}

inline View parse_view(std::string_view s) {
  if (s == "view1") return View::view1;
  if (s == "view2") return View::view2;
  if (s == "view3") return View::view3;
  throw InvalidArgument("unknown view tag '" + std::string(s) + "'");
}

enum class InstanceSource { labeled, merged, clipped };

inline std::string_view to_string(InstanceSource s) {
  switch (s) {
    case InstanceSource::labeled: return "labeled";
    case InstanceSource::merged: return "merged";
    case InstanceSource::clipped: return "clipped";
  }
  return "labeled";
}

inline InstanceSource parse_source(std::string_view s) {
  if (s == "labeled") return InstanceSource::labeled;
  if (s == "merged") return InstanceSource::merged;
  if (s == "clipped") return InstanceSource::clipped;
  throw InvalidArgument("unknown instance source '" + std::string(s) + "'");
}

/// One annotated aphid cluster.
struct ClusterInstance {
  int id = 0;
  BBox box;
  std::optional<std::int64_t> area;  // mask pixels, when known
  InstanceSource source = InstanceSource::labeled;
  bool clipped = false;  // box was cut by a patch window

  /// Mask area when available, box area otherwise.
  std::int64_t effective_area() const { return area.value_or(box.area()); }

  bool operator==(const ClusterInstance&) const = default;
};

struct AnnotatedImage {
  std::string id;
  int width = 0;
  int height = 0;
  View view = View::view1;
  std::vector<ClusterInstance> instances;
  // Dense label map whose ids match instances[i].id, when the raster is loaded.
  std::optional<InstanceMask> mask;

  bool operator==(const AnnotatedImage&) const = default;
};

/// Checks the record invariants: positive size and every box inside the image.
inline void validate(const AnnotatedImage& image) {
  if (image.width <= 0 || image.height <= 0) {
    throw InvalidArgument("image '" + image.id + "' has non-positive size");
  }
  const BBox frame(0, 0, image.width, image.height);
  for (const auto& inst : image.instances) {
    if (!frame.contains(inst.box)) {
      throw InvalidArgument("image '" + image.id + "': instance " + std::to_string(inst.id) +
                            " lies outside the image");
    }
    if (inst.area && *inst.area <= 0) {
      throw InvalidArgument("image '" + image.id + "': instance " + std::to_string(inst.id) +
                            " has non-positive area");
    }
  }
}

/// Sorts instances row-major by box and renumbers ids 1..n. This is the
/// form a VOC document can represent.
inline void canonicalize(AnnotatedImage& image) {
  std::stable_sort(image.instances.begin(), image.instances.end(),
                   [](const ClusterInstance& a, const ClusterInstance& b) { return row_major_less(a.box, b.box); });
  int next = 1;
  for (auto& inst : image.instances) inst.id = next++;
}

/// Connected components of a label map, with tight boxes and pixel counts.
struct LabeledComponents {
  InstanceMask mask;  // dense ids 1..K in scan order of each component's first pixel
  std::vector<ClusterInstance> instances;
};

/// Splits every nonzero label into its 8-connected components and relabels
/// them 1..K in raster-scan order of first appearance.
inline LabeledComponents label_components(const InstanceMask& input) {
  const int w = input.width();
  const int h = input.height();
  InstanceMask out(w, h);
  std::vector<ClusterInstance> instances;
  std::vector<std::pair<int, int>> stack;
  const auto src = input.labels();
  auto index = [w](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + x; };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint16_t label = src[index(x, y)];
      if (label == 0 || out.at(x, y) != 0) continue;
      if (instances.size() >= 0xFFFF) throw InvalidArgument("more than 65535 instances in one mask");
      const auto id = static_cast<std::uint16_t>(instances.size() + 1);
      int x0 = x, y0 = y, x1 = x, y1 = y;
      std::int64_t area = 0;
      stack.clear();
      stack.emplace_back(x, y);
      out.set(x, y, id);
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++area;
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          const int ny = cy + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            if (nx < 0 || nx >= w || (dx == 0 && dy == 0)) continue;
            if (src[index(nx, ny)] == label && out.at(nx, ny) == 0) {
              out.set(nx, ny, id);
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      instances.push_back(ClusterInstance{id, BBox(x0, y0, x1 + 1, y1 + 1), area,
                                          InstanceSource::labeled, false});
    }
  }
  return {std::move(out), std::move(instances)};
}

/// One instance per 8-connected component of each nonzero label.
inline std::vector<ClusterInstance> extract_clusters(const InstanceMask& mask) {
  return label_components(mask).instances;
}

/// Builds an image record from a raw label map, keeping the relabeled mask.
inline AnnotatedImage annotate_from_mask(std::string id, View view, const InstanceMask& raw) {
  auto comps = label_components(raw);
  AnnotatedImage img;
  img.id = std::move(id);
  img.width = raw.width();
  img.height = raw.height();
  img.view = view;
  img.instances = std::move(comps.instances);
  img.mask = std::move(comps.mask);
  return img;
}

/// Summary of mask areas: histogram bins of 100 px over [0, 5000) plus the
/// count of areas at or above 5000.
struct AreaStats {
  static constexpr int kBinWidth = 100;
  static constexpr int kHistogramLimit = 5000;

  std::size_t count = 0;
  double median = 0.0;
  double mean = 0.0;
  std::array<std::size_t, kHistogramLimit / kBinWidth> histogram{};
  std::size_t above_limit = 0;
};

inline AreaStats area_stats(std::span<const std::int64_t> areas) {
  AreaStats s;
  s.count = areas.size();
  if (areas.empty()) return s;
  std::vector<std::int64_t> sorted(areas.begin(), areas.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median = n % 2 ? static_cast<double>(sorted[n / 2])
                   : (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
  long double sum = 0;
  for (auto a : sorted) sum += a;
  s.mean = static_cast<double>(sum / n);
  for (auto a : sorted) {
    if (a >= AreaStats::kHistogramLimit) {
      ++s.above_limit;
    } else {
      ++s.histogram[static_cast<std::size_t>(a / AreaStats::kBinWidth)];
    }
  }
  return s;
}

}  // namespace aphid
