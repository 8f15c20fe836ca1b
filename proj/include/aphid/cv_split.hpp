#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aphid/annotation.hpp"
#include "aphid/error.hpp"
#include "aphid/patch.hpp"
#include "aphid/random.hpp"

namespace aphid {

/// Image-level fold membership for k-fold cross validation.
struct FoldAssignment {
  int k = 10;
  std::uint64_t seed = 0;
  std::map<std::string, int> folds;  // image id -> fold in [0, k)

  int fold_of(const std::string& image_id) const {
    const auto it = folds.find(image_id);
    if (it == folds.end()) throw InvalidArgument("image '" + image_id + "' has no fold assignment");
    return it->second;
  }

  bool operator==(const FoldAssignment&) const = default;
};

/// Anything with an image id and a view tag (AnnotatedImage, ManifestEntry).
template <typename T>
concept ViewTagged = requires(const T& t) {
  { t.id } -> std::convertible_to<std::string>;
  { t.view } -> std::convertible_to<View>;
};

/// View-stratified fold assignment.
///
/// Each view's image ids are sorted, shuffled with a stream derived from
/// (seed, view), and dealt round-robin into k subgroups; fold g is the union
/// of subgroup g over the views. Views without images are skipped.
template <std::ranges::input_range R>
  requires ViewTagged<std::ranges::range_value_t<R>>
FoldAssignment assign_folds(const R& images, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k must be at least 2");
  std::array<std::vector<std::string>, 3> by_view;
  std::set<std::string> seen;
  for (const auto& img : images) {
    const std::string id = img.id;
    if (!seen.insert(id).second) throw InvalidArgument("duplicate image id '" + id + "'");
    by_view[static_cast<std::size_t>(static_cast<View>(img.view))].push_back(id);
  }

  FoldAssignment out{k, seed, {}};
  for (std::size_t v = 0; v < by_view.size(); ++v) {
    auto& ids = by_view[v];
    if (ids.empty()) continue;
    if (static_cast<std::size_t>(k) > ids.size()) {
      throw InvalidArgument(std::string(to_string(kAllViews[v])) + " has " + std::to_string(ids.size()) +
                            " images, fewer than k=" + std::to_string(k));
    }
    std::sort(ids.begin(), ids.end());
    Rng rng = Rng::derive(seed, v);
    rng.shuffle(std::span<std::string>(ids));
    for (std::size_t i = 0; i < ids.size(); ++i) out.folds[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return out;
}

/// Largest per-view spread of fold sizes; 0 or 1 for a stratified assignment.
template <std::ranges::input_range R>
  requires ViewTagged<std::ranges::range_value_t<R>>
int max_view_imbalance(const FoldAssignment& a, const R& images) {
  std::array<std::vector<int>, 3> counts;
  for (auto& c : counts) c.assign(static_cast<std::size_t>(a.k), 0);
  for (const auto& img : images) {
    ++counts[static_cast<std::size_t>(static_cast<View>(img.view))][static_cast<std::size_t>(a.fold_of(img.id))];
  }
  int worst = 0;
  for (const auto& c : counts) {
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    worst = std::max(worst, *hi - *lo);
  }
  return worst;
}

struct SplitSets {
  std::vector<Patch> train;
  std::vector<Patch> test;
};

/// Patches whose source image is in test_fold go to test, all others to train.
inline SplitSets materialize_split(const FoldAssignment& a, std::span<const Patch> patches, int test_fold) {
  if (test_fold < 0 || test_fold >= a.k) throw InvalidArgument("test fold out of range");
  SplitSets s;
  for (const auto& p : patches) {
    const auto it = a.folds.find(p.source_id);
    if (it == a.folds.end()) throw InvalidArgument("patch '" + p.name() + "' comes from unassigned image '" + p.source_id + "'");
    (it->second == test_fold ? s.test : s.train).push_back(p);
  }
  return s;
}

inline nlohmann::json assignment_to_json(const FoldAssignment& a) {
  nlohmann::json folds = nlohmann::json::object();
  for (const auto& [id, f] : a.folds) folds[id] = f;
  return {{"k", a.k}, {"seed", a.seed}, {"folds", std::move(folds)}};
}

inline FoldAssignment assignment_from_json(const nlohmann::json& j) {
  FoldAssignment a;
  try {
    a.k = j.at("k").get<int>();
    a.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [id, f] : j.at("folds").items()) a.folds[id] = f.get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("assignment: ") + e.what());
  }
  if (a.k < 2) throw InvalidArgument("assignment: k must be at least 2");
  for (const auto& [id, f] : a.folds) {
    if (f < 0 || f >= a.k) throw InvalidArgument("assignment: fold of '" + id + "' out of range");
  }
  return a;
}

/// Canonical file text: keys sorted, two-space indent, trailing newline.
inline std::string assignment_file_text(const FoldAssignment& a) { return assignment_to_json(a).dump(2) + "\n"; }

}  // namespace aphid
