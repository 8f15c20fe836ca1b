#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "aphid/error.hpp"

namespace aphid {

/// Axis-aligned box in integer pixel coordinates, half-open: [min_x, max_x) x [min_y, max_y).
/// Construction rejects empty, inverted, or negative boxes.
class BBox {
 public:
  constexpr BBox(int min_x, int min_y, int max_x, int max_y)
      : min_x_(min_x), min_y_(min_y), max_x_(max_x), max_y_(max_y) {
    if (min_x < 0 || min_y < 0 || min_x >= max_x || min_y >= max_y) {
      throw InvalidArgument("invalid box (" + std::to_string(min_x) + "," + std::to_string(min_y) +
                            "," + std::to_string(max_x) + "," + std::to_string(max_y) + ")");
    }
  }

  constexpr int min_x() const { return min_x_; }
  constexpr int min_y() const { return min_y_; }
  constexpr int max_x() const { return max_x_; }
  constexpr int max_y() const { return max_y_; }
  constexpr int width() const { return max_x_ - min_x_; }
  constexpr int height() const { return max_y_ - min_y_; }
  constexpr std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * static_cast<std::int64_t>(height());
  }

  constexpr bool contains(const BBox& o) const {
    return o.min_x_ >= min_x_ && o.min_y_ >= min_y_ && o.max_x_ <= max_x_ && o.max_y_ <= max_y_;
  }

  constexpr BBox translated(int dx, int dy) const {
    return BBox(min_x_ + dx, min_y_ + dy, max_x_ + dx, max_y_ + dy);
  }

  // Lexicographic (min_x, min_y, max_x, max_y).
  constexpr auto operator<=>(const BBox&) const = default;

 private:
  int min_x_;
  int min_y_;
  int max_x_;
  int max_y_;
};

/// Tight union of two boxes.
inline BBox enclosing(const BBox& a, const BBox& b) {
  return BBox(std::min(a.min_x(), b.min_x()), std::min(a.min_y(), b.min_y()),
              std::max(a.max_x(), b.max_x()), std::max(a.max_y(), b.max_y()));
}

inline std::int64_t intersection_area(const BBox& a, const BBox& b) {
  const std::int64_t w = std::min(a.max_x(), b.max_x()) - std::max(a.min_x(), b.min_x());
  const std::int64_t h = std::min(a.max_y(), b.max_y()) - std::max(a.min_y(), b.min_y());
  return (w > 0 && h > 0) ? w * h : 0;
}

/// Intersection of two boxes, empty when they share no pixel.
inline std::optional<BBox> intersect(const BBox& a, const BBox& b) {
  const int x0 = std::max(a.min_x(), b.min_x());
  const int y0 = std::max(a.min_y(), b.min_y());
  const int x1 = std::min(a.max_x(), b.max_x());
  const int y1 = std::min(a.max_y(), b.max_y());
  if (x0 >= x1 || y0 >= y1) return std::nullopt;
  return BBox(x0, y0, x1, y1);
}

/// Intersection over union from exact integer areas.
inline double bbox_iou(const BBox& a, const BBox& b) {
  const std::int64_t inter = intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Closest Euclidean distance between two boxes, in pixels. Zero iff they
/// overlap or touch.
struct GapDistance {
  double value = 0.0;

  friend constexpr auto operator<=>(const GapDistance&, const GapDistance&) = default;
};

namespace detail {

inline std::int64_t axis_gap(int a_min, int a_max, int b_min, int b_max) {
  return std::max<std::int64_t>({0, static_cast<std::int64_t>(b_min) - a_max,
                                 static_cast<std::int64_t>(a_min) - b_max});
}

inline std::int64_t squared_gap(const BBox& a, const BBox& b) {
  const std::int64_t dx = axis_gap(a.min_x(), a.max_x(), b.min_x(), b.max_x());
  const std::int64_t dy = axis_gap(a.min_y(), a.max_y(), b.min_y(), b.max_y());
  return dx * dx + dy * dy;
}

// gap <= threshold, decided on the squared integer distance so that
// integral thresholds are compared exactly.
inline bool within_gap(const BBox& a, const BBox& b, double threshold) {
  return static_cast<double>(squared_gap(a, b)) <= threshold * threshold;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

inline GapDistance bbox_gap(const BBox& a, const BBox& b) {
  return GapDistance{std::sqrt(static_cast<double>(detail::squared_gap(a, b)))};
}

/// Row-major ordering used for deterministic output: (min_y, min_x, max_y, max_x).
inline bool row_major_less(const BBox& a, const BBox& b) {
  return std::make_tuple(a.min_y(), a.min_x(), a.max_y(), a.max_x()) <
         std::make_tuple(b.min_y(), b.min_x(), b.max_y(), b.max_x());
}

/// Groups boxes into connected components of the "gap <= threshold" relation.
/// Returns, for every input box, the index of its component; components are
/// numbered in order of their lowest member index.
inline std::vector<std::size_t> gap_components(std::span<const BBox> boxes, double threshold) {
  detail::DisjointSets sets(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (detail::within_gap(boxes[i], boxes[j], threshold)) sets.unite(i, j);
    }
  }
  std::vector<std::size_t> label(boxes.size());
  std::vector<std::size_t> root_to_label(boxes.size(), boxes.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const std::size_t r = sets.find(i);
    if (root_to_label[r] == boxes.size()) root_to_label[r] = next++;
    label[i] = root_to_label[r];
  }
  return label;
}

/// One output box of a merge and the input indices it absorbed (ascending).
struct MergedGroup {
  BBox box;
  std::vector<std::size_t> members;
};

/// Merges boxes whose closest distance is <= threshold into their tight
/// enclosing box, repeating until no such pair remains. Groups are sorted
/// row-major by box.
inline std::vector<MergedGroup> merge_close_groups(std::span<const BBox> boxes, double threshold) {
  if (!(threshold >= 0.0)) throw InvalidArgument("merge threshold must be >= 0");
  std::vector<MergedGroup> current;
  current.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) current.push_back({boxes[i], {i}});
  for (;;) {
    std::vector<BBox> current_boxes;
    for (const auto& g : current) current_boxes.push_back(g.box);
    const auto label = gap_components(current_boxes, threshold);
    const std::size_t n_components =
        label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
    if (n_components == current.size()) break;
    std::vector<std::optional<MergedGroup>> merged(n_components);
    for (std::size_t i = 0; i < current.size(); ++i) {
      auto& m = merged[label[i]];
      if (!m) {
        m = std::move(current[i]);
      } else {
        m->box = enclosing(m->box, current[i].box);
        m->members.insert(m->members.end(), current[i].members.begin(), current[i].members.end());
      }
    }
    current.clear();
    for (auto& m : merged) current.push_back(std::move(*m));
  }
  for (auto& g : current) std::sort(g.members.begin(), g.members.end());
  std::sort(current.begin(), current.end(),
            [](const MergedGroup& a, const MergedGroup& b) { return row_major_less(a.box, b.box); });
  return current;
}

inline std::vector<BBox> merge_close_boxes(std::span<const BBox> boxes, double threshold) {
  std::vector<BBox> out;
  for (auto& g : merge_close_groups(boxes, threshold)) out.push_back(g.box);
  return out;
}

/// A predicted box. id names the patch (or image) the prediction belongs to.
struct Detection {
  std::string id;
  BBox box;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

/// Score descending; equal scores fall back to lexicographic box order.
inline bool score_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.box < b.box;
}

/// Greedy non-maximum suppression. A detection is dropped when its IoU with
/// an already kept one exceeds iou_threshold. Output is in keep order.
inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw InvalidArgument("NMS IoU threshold must be in [0,1]");
  }
  std::vector<Detection> sorted(dets.begin(), dets.end());
  std::stable_sort(sorted.begin(), sorted.end(), score_order);
  std::vector<Detection> kept;
  for (auto& d : sorted) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return bbox_iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

/// Per-pixel instance label map: 0 is background, k >= 1 an instance id.
class InstanceMask {
 public:
  InstanceMask(int width, int height) : InstanceMask(width, height, std::vector<std::uint16_t>(
                                                                        checked_size(width, height), 0)) {}

  InstanceMask(int width, int height, std::vector<std::uint16_t> labels)
      : width_(width), height_(height), labels_(std::move(labels)) {
    if (labels_.size() != checked_size(width, height)) {
      throw InvalidArgument("label buffer does not match mask dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const std::uint16_t> labels() const { return labels_; }

  std::uint16_t at(int x, int y) const {
    return labels_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }
  void set(int x, int y, std::uint16_t label) {
    labels_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)] = label;
  }

  std::uint16_t max_label() const {
    return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
  }

  /// Pixel count per label, indexed by label (index 0 is background).
  std::vector<std::int64_t> areas() const {
    std::vector<std::int64_t> out(static_cast<std::size_t>(max_label()) + 1, 0);
    for (auto l : labels_) ++out[l];
    return out;
  }

  std::int64_t area(int id) const {
    return std::count(labels_.begin(), labels_.end(), static_cast<std::uint16_t>(id));
  }

  /// Pixels of `id` that fall inside `window`.
  std::int64_t area_within(int id, const BBox& window) const {
    std::int64_t n = 0;
    const int x1 = std::min(window.max_x(), width_);
    const int y1 = std::min(window.max_y(), height_);
    for (int y = window.min_y(); y < y1; ++y) {
      const auto* row = labels_.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width_);
      for (int x = window.min_x(); x < x1; ++x) n += (row[x] == id);
    }
    return n;
  }

  /// True when every label in 1..max_label has at least one pixel.
  bool is_dense() const {
    const auto a = areas();
    return std::all_of(a.begin() + 1, a.end(), [](std::int64_t v) { return v > 0; });
  }

  bool operator==(const InstanceMask&) const = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidArgument("mask dimensions must be positive");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_;
  int height_;
  std::vector<std::uint16_t> labels_;
};

/// Tight box around all pixels labeled `instance_id`.
inline BBox mask_to_bbox(const InstanceMask& mask, int instance_id) {
  if (instance_id <= 0) throw MissingInstance(instance_id);
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  const auto labels = mask.labels();
  for (int y = 0; y < mask.height(); ++y) {
    const auto* row = labels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(mask.width());
    for (int x = 0; x < mask.width(); ++x) {
      if (row[x] != instance_id) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw MissingInstance(instance_id);
  return BBox(x0, y0, x1 + 1, y1 + 1);
}

}  // namespace aphid
