#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "aphid/error.hpp"
#include "aphid/eval.hpp"
#include "aphid/geometry.hpp"

namespace aphid {

/// Contents of a JSON-lines prediction file. A line of the form
/// {"nms": t} (no "id") asks for NMS at IoU t before scoring.
struct PredictionFile {
  std::vector<Detection> detections;
  std::optional<double> nms;
};

inline nlohmann::json detection_to_json(const Detection& d) {
  return {{"id", d.id}, {"bbox", {d.box.min_x(), d.box.min_y(), d.box.max_x(), d.box.max_y()}}, {"score", d.score}};
}

inline PredictionFile parse_predictions(std::istream& is, const std::string& source = "<predictions>") {
  PredictionFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw InvalidArgument(where + "expected a JSON object");
      if (!j.contains("id") && j.contains("nms")) {
        const double t = j["nms"].get<double>();
        if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument(where + "nms threshold must be in [0,1]");
        out.nms = t;
        continue;
      }
      const auto& bb = j.at("bbox");
      if (!bb.is_array() || bb.size() != 4) throw InvalidArgument(where + "bbox must have 4 numbers");
      int c[4];
      for (int i = 0; i < 4; ++i) {
        const double v = bb[static_cast<std::size_t>(i)].get<double>();
        if (!std::isfinite(v)) throw InvalidArgument(where + "non-finite bbox coordinate");
        c[i] = static_cast<int>(std::lround(v));
      }
      const double score = j.at("score").get<double>();
      if (!(score >= 0.0 && score <= 1.0)) throw InvalidArgument(where + "score must be in [0,1]");
      out.detections.push_back(Detection{j.at("id").get<std::string>(), BBox(c[0], c[1], c[2], c[3]), score});
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(where + e.what());
    } catch (const InvalidArgument& e) {
      const std::string msg = e.what();
      throw InvalidArgument(msg.rfind(where, 0) == 0 ? msg : where + msg);
    }
  }
  return out;
}

inline PredictionFile read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string(), "cannot open predictions");
  return parse_predictions(is, path.string());
}

inline void write_predictions(const std::filesystem::path& path, std::span<const Detection> dets,
                              std::optional<double> nms = std::nullopt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  if (nms) os << nlohmann::json{{"nms", *nms}}.dump() << '\n';
  for (const auto& d : dets) os << detection_to_json(d).dump() << '\n';
  if (!os) throw IoError(path.string(), "write failed");
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json results = nlohmann::json::array();
  nlohmann::json ious = nlohmann::json::array();
  for (const auto& t : r.results) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : t.curve.points) curve.push_back({p.recall, p.precision, p.score});
    results.push_back({{"iou", t.iou},
                       {"ap", t.ap},
                       {"recall", t.recall},
                       {"tp", t.tp},
                       {"fp", t.fp},
                       {"fn", t.fn},
                       {"pr_curve", std::move(curve)}});
    ious.push_back(t.iou);
  }
  nlohmann::json j{{"config", {{"iou", std::move(ious)}, {"nms", r.nms ? nlohmann::json(*r.nms) : nlohmann::json()}}},
                   {"ground_truth", r.ground_truth},
                   {"detections", r.detections},
                   {"results", std::move(results)}};
  if (r.coco_map) j["coco_map"] = *r.coco_map;
  if (!r.infestation.empty()) j["infestation"] = r.infestation;
  return j;
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// One row per IoU threshold.
inline std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "iou,ap,recall,tp,fp,fn\n";
  for (const auto& t : r.results) {
    os << format_fixed(t.iou, 2) << ',' << format_fixed(t.ap) << ',' << format_fixed(t.recall) << ',' << t.tp << ','
       << t.fp << ',' << t.fn << '\n';
  }
  return os.str();
}

/// Self-contained SVG of a precision-recall curve and its envelope.
inline std::string pr_curve_svg(const ThresholdResult& t) {
  constexpr int kSize = 360;
  constexpr int kMargin = 40;
  auto px = [](double r) { return kMargin + r * kSize; };
  auto py = [](double p) { return kMargin + (1.0 - p) * kSize; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kMargin << "\" height=\""
     << kSize + 2 * kMargin << "\">\n";
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kMargin << "\" y=\"" << kMargin - 12 << "\" font-size=\"13\">IoU "
     << format_fixed(t.iou, 2) << "  AP " << format_fixed(t.ap, 4) << "  recall " << format_fixed(t.recall, 4)
     << "</text>\n";
  os << "<text x=\"" << kMargin + kSize / 2 - 20 << "\" y=\"" << kSize + 2 * kMargin - 8
     << "\" font-size=\"12\">recall</text>\n";
  os << "<text x=\"4\" y=\"" << kMargin + kSize / 2 << "\" font-size=\"12\">prec.</text>\n";
  const auto env = precision_envelope(t.curve);
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
  double prev = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    os << format_fixed(px(prev), 2) << ',' << format_fixed(py(env[i]), 2) << ' ' << format_fixed(px(t.curve.points[i].recall), 2)
       << ',' << format_fixed(py(env[i]), 2) << ' ';
    prev = t.curve.points[i].recall;
  }
  os << "\"/>\n<polyline fill=\"none\" stroke=\"#ff7f0e\" stroke-dasharray=\"3,2\" points=\"";
  for (const auto& p : t.curve.points) os << format_fixed(px(p.recall), 2) << ',' << format_fixed(py(p.precision), 2) << ' ';
  os << "\"/>\n</svg>\n";
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  os << text;
  if (!os) throw IoError(path.string(), "write failed");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open");
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace aphid
