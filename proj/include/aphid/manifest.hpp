#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "aphid/annotation.hpp"
#include "aphid/error.hpp"
#include "aphid/png_io.hpp"
#include "aphid/voc_xml.hpp"

namespace aphid {

/// One image entry of a dataset manifest. Paths are resolved against the
/// manifest's directory; any of them may be empty.
struct ManifestEntry {
  std::string id;
  std::filesystem::path image;       // RGB raster, optional
  std::filesystem::path mask;        // 16-bit label map, optional
  std::filesystem::path annotation;  // VOC XML, used when no mask is given
  View view = View::view1;
  int width = 0;
  int height = 0;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory the relative paths refer to
  std::vector<ManifestEntry> images;
};

inline std::filesystem::path resolve(const DatasetManifest& m, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return m.root / p;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& e : m.images) {
    nlohmann::json j;
    j["id"] = e.id;
    if (!e.image.empty()) j["image"] = e.image.generic_string();
    if (!e.mask.empty()) j["mask"] = e.mask.generic_string();
    if (!e.annotation.empty()) j["annotation"] = e.annotation.generic_string();
    j["view"] = std::string(to_string(e.view));
    j["width"] = e.width;
    j["height"] = e.height;
    images.push_back(std::move(j));
  }
  return nlohmann::json{{"images", std::move(images)}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, std::filesystem::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  if (!j.is_object() || !j.contains("images") || !j["images"].is_array()) {
    throw InvalidArgument("manifest: expected an object with an \"images\" array");
  }
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& item : j["images"]) {
    const std::string where = "manifest image " + std::to_string(index++);
    try {
      ManifestEntry e;
      e.id = item.at("id").get<std::string>();
      if (e.id.empty()) throw InvalidArgument(where + ": empty id");
      if (!seen.insert(e.id).second) throw InvalidArgument(where + ": duplicate id '" + e.id + "'");
      if (item.contains("image")) e.image = item["image"].get<std::string>();
      if (item.contains("mask")) e.mask = item["mask"].get<std::string>();
      if (item.contains("annotation")) e.annotation = item["annotation"].get<std::string>();
      e.view = parse_view(item.at("view").get<std::string>());
      e.width = item.at("width").get<int>();
      e.height = item.at("height").get<int>();
      if (e.width <= 0 || e.height <= 0) throw InvalidArgument(where + ": width/height must be positive");
      m.images.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw InvalidArgument(where + ": " + ex.what());
    }
  }
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string(), "cannot open manifest");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path.string(), std::string("invalid JSON: ") + ex.what());
  }
  auto m = manifest_from_json(j, path.parent_path());
  for (const auto& e : m.images) {
    for (const auto* p : {&e.image, &e.mask, &e.annotation}) {
      if (!p->empty() && !std::filesystem::exists(resolve(m, *p))) {
        throw IoError(resolve(m, *p).string(), "referenced by manifest but missing");
      }
    }
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  os << manifest_to_json(m).dump(2) << '\n';
  if (!os) throw IoError(path.string(), "write failed");
}

/// Loads the annotations of one manifest entry: components of the label
/// map when a mask is given (the mask is kept on the record), else the VOC
/// annotation, else an image with no instances.
inline AnnotatedImage load_image(const DatasetManifest& m, const ManifestEntry& e, bool keep_mask = true) {
  AnnotatedImage img;
  if (!e.mask.empty()) {
    const auto path = resolve(m, e.mask);
    InstanceMask raw = read_label_png(path);
    if (raw.width() != e.width || raw.height() != e.height) {
      throw IoError(path.string(), "mask size does not match manifest");
    }
    img = annotate_from_mask(e.id, e.view, raw);
    if (!keep_mask) img.mask.reset();
  } else if (!e.annotation.empty()) {
    img = read_voc_file(resolve(m, e.annotation));
    if (img.width != e.width || img.height != e.height) {
      throw IoError(resolve(m, e.annotation).string(), "annotation size does not match manifest");
    }
  } else {
    img.width = e.width;
    img.height = e.height;
  }
  img.id = e.id;
  img.view = e.view;
  validate(img);
  return img;
}

struct DatasetStats {
  std::size_t images = 0;
  std::size_t clusters = 0;
  std::array<double, 3> view_percent{};  // share of images per view, in percent
  AreaStats areas;
};

inline DatasetStats summarize(std::span<const AnnotatedImage> images) {
  DatasetStats s;
  s.images = images.size();
  std::array<std::size_t, 3> per_view{};
  std::vector<std::int64_t> areas;
  for (const auto& img : images) {
    ++per_view[static_cast<std::size_t>(img.view)];
    for (const auto& inst : img.instances) areas.push_back(inst.effective_area());
  }
  s.clusters = areas.size();
  for (std::size_t v = 0; v < 3; ++v) {
    s.view_percent[v] = images.empty() ? 0.0 : 100.0 * static_cast<double>(per_view[v]) / images.size();
  }
  s.areas = area_stats(areas);
  return s;
}

/// Cluster count, per-view image shares and mask-area statistics of a dataset.
inline DatasetStats dataset_stats(const DatasetManifest& manifest) {
  std::vector<AnnotatedImage> images;
  images.reserve(manifest.images.size());
  for (const auto& e : manifest.images) images.push_back(load_image(manifest, e, false));
  return summarize(images);
}

inline nlohmann::json stats_to_json(const DatasetStats& s) {
  nlohmann::json hist = nlohmann::json::array();
  for (std::size_t i = 0; i < s.areas.histogram.size(); ++i) {
    hist.push_back({{"lo", i * AreaStats::kBinWidth},
                    {"hi", (i + 1) * AreaStats::kBinWidth},
                    {"count", s.areas.histogram[i]}});
  }
  return {{"images", s.images},
          {"clusters", s.clusters},
          {"view_percent",
           {{"view1", s.view_percent[0]}, {"view2", s.view_percent[1]}, {"view3", s.view_percent[2]}}},
          {"area",
           {{"median", s.areas.median},
            {"mean", s.areas.mean},
            {"histogram", std::move(hist)},
            {"at_or_above_5000", s.areas.above_limit}}}};
}

}  // namespace aphid
