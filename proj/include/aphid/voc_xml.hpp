#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "aphid/annotation.hpp"
#include "aphid/error.hpp"

namespace aphid {

inline constexpr std::string_view kClassName = "aphid_cluster";

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Integer field; tolerates integral decimals such as "12.0".
inline std::optional<long long> parse_integral(std::string_view text) {
  text = trim(text);
  long long v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc() && p == text.data() + text.size()) return v;
  double d = 0;
  auto [pd, ecd] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ecd == std::errc() && pd == text.data() + text.size() && std::isfinite(d) && d == std::floor(d) &&
      std::abs(d) < 1e15) {
    return static_cast<long long>(d);
  }
  return std::nullopt;
}

}  // namespace detail

/// Serializes an image record as a PASCAL-VOC annotation. Coordinates are
/// written 1-based inclusive; objects appear in row-major box order.
///
/// Besides the standard elements, <view> and the per-object <origin> and
/// <area> carry toolkit fields. VOC readers ignore them.
inline std::string write_voc_xml(const AnnotatedImage& image) {
  std::vector<const ClusterInstance*> order;
  for (const auto& inst : image.instances) order.push_back(&inst);
  std::stable_sort(order.begin(), order.end(), [](const ClusterInstance* a, const ClusterInstance* b) {
    return row_major_less(a->box, b->box);
  });

  std::ostringstream os;
  os << "<annotation>\n";
  os << "\t<filename>" << detail::xml_escape(image.id) << "</filename>\n";
  os << "\t<view>" << to_string(image.view) << "</view>\n";
  os << "\t<size>\n";
  os << "\t\t<width>" << image.width << "</width>\n";
  os << "\t\t<height>" << image.height << "</height>\n";
  os << "\t\t<depth>3</depth>\n";
  os << "\t</size>\n";
  for (const auto* inst : order) {
    os << "\t<object>\n";
    os << "\t\t<name>" << kClassName << "</name>\n";
    os << "\t\t<origin>" << to_string(inst->source) << "</origin>\n";
    os << "\t\t<truncated>" << (inst->clipped ? 1 : 0) << "</truncated>\n";
    os << "\t\t<difficult>0</difficult>\n";
    if (inst->area) os << "\t\t<area>" << *inst->area << "</area>\n";
    os << "\t\t<bndbox>\n";
    os << "\t\t\t<xmin>" << inst->box.min_x() + 1 << "</xmin>\n";
    os << "\t\t\t<ymin>" << inst->box.min_y() + 1 << "</ymin>\n";
    os << "\t\t\t<xmax>" << inst->box.max_x() << "</xmax>\n";
    os << "\t\t\t<ymax>" << inst->box.max_y() << "</ymax>\n";
    os << "\t\t</bndbox>\n";
    os << "\t</object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

/// Parses a VOC annotation back into an image record. Instances get ids
/// 1..n in document order; boxes are converted to 0-based half-open.
inline AnnotatedImage read_voc_xml(const std::string& document) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(document);
    pt::read_xml(is, tree);
  } catch (const pt::xml_parser_error& e) {
    throw VocParseError(std::string("malformed XML: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw VocParseError("missing <annotation> root");

  AnnotatedImage image;
  image.id = std::string(detail::trim(root->get<std::string>("filename", "")));
  if (auto v = root->get_optional<std::string>("view")) {
    try {
      image.view = parse_view(detail::trim(*v));
    } catch (const InvalidArgument& e) {
      throw VocParseError(e.what());
    }
  }

  const auto size = root->get_child_optional("size");
  if (!size) throw VocParseError("missing <size>");
  const auto w = detail::parse_integral(size->get<std::string>("width", ""));
  const auto h = detail::parse_integral(size->get<std::string>("height", ""));
  if (!w || !h || *w <= 0 || *h <= 0 || *w > INT32_MAX || *h > INT32_MAX) {
    throw VocParseError("missing or invalid <size> width/height");
  }
  image.width = static_cast<int>(*w);
  image.height = static_cast<int>(*h);

  std::size_t index = 0;
  for (const auto& [tag, node] : *root) {
    if (tag != "object") continue;
    const std::size_t obj = index++;
    const auto bnd = node.get_child_optional("bndbox");
    if (!bnd) throw VocParseError("missing <bndbox>", obj);
    auto field = [&](const char* name) {
      const auto v = detail::parse_integral(bnd->get<std::string>(name, ""));
      if (!v) throw VocParseError(std::string("missing or non-integer <") + name + ">", obj);
      return *v;
    };
    const long long xmin = field("xmin"), ymin = field("ymin"), xmax = field("xmax"), ymax = field("ymax");
    if (xmax < xmin || ymax < ymin) throw VocParseError("inverted box", obj);
    if (xmin < 1 || ymin < 1 || xmax > image.width || ymax > image.height) {
      throw VocParseError("box outside the image", obj);
    }
    ClusterInstance inst{static_cast<int>(obj + 1),
                         BBox(static_cast<int>(xmin - 1), static_cast<int>(ymin - 1), static_cast<int>(xmax),
                              static_cast<int>(ymax)),
                         std::nullopt, InstanceSource::labeled, false};
    if (auto a = node.get_optional<std::string>("area")) {
      const auto v = detail::parse_integral(*a);
      if (!v || *v <= 0) throw VocParseError("invalid <area>", obj);
      inst.area = *v;
    }
    if (auto o = node.get_optional<std::string>("origin")) {
      try {
        inst.source = parse_source(detail::trim(*o));
      } catch (const InvalidArgument& e) {
        throw VocParseError(e.what(), obj);
      }
    }
    if (auto t = node.get_optional<std::string>("truncated")) {
      const auto v = detail::parse_integral(*t);
      if (!v || (*v != 0 && *v != 1)) throw VocParseError("invalid <truncated>", obj);
      inst.clipped = *v == 1;
    }
    image.instances.push_back(inst);
  }
  return image;
}

inline void write_voc_file(const std::filesystem::path& path, const AnnotatedImage& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  os << write_voc_xml(image);
  if (!os) throw IoError(path.string(), "write failed");
}

inline AnnotatedImage read_voc_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open annotation");
  std::stringstream buf;
  buf << is.rdbuf();
  try {
    return read_voc_xml(buf.str());
  } catch (const VocParseError& e) {
    throw VocParseError(path.string() + ": " + e.message(), e.object_index());
  }
}

}  // namespace aphid
