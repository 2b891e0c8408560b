#include "hierprobe/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace hierprobe {

namespace {

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                    "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string value_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
                  "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  return s;
}

std::string rect(double x, double y, double w, double h, const std::string& fill) {
  return "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" fill=\"" + fill + "\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" stroke=\"black\"/>\n";
}

constexpr double kLabelWidth = 150.0;
constexpr double kPlotWidth = 400.0;
constexpr double kRow = 24.0;
constexpr double kTop = 40.0;

}  // namespace

std::string svg_bar_chart(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                          const std::string& value_label) {
  double max_v = 0.0;
  for (const auto& [label, v] : bars) max_v = std::max(max_v, v);
  if (!(max_v > 0.0)) max_v = 1.0;
  const double h = kTop + kRow * static_cast<double>(bars.size()) + 40.0;
  const double w = kLabelWidth + kPlotWidth + 80.0;
  std::string s = header(w, h, title);
  double y = kTop;
  for (const auto& [label, v] : bars) {
    s += text(kLabelWidth - 6, y + kRow * 0.65, label, "end");
    s += rect(kLabelWidth, y + 3, kPlotWidth * std::max(v, 0.0) / max_v, kRow - 6, kPalette[0]);
    s += text(kLabelWidth + kPlotWidth * std::max(v, 0.0) / max_v + 4, y + kRow * 0.65, value_text(v));
    y += kRow;
  }
  s += line(kLabelWidth, kTop, kLabelWidth, y);
  s += line(kLabelWidth, y, kLabelWidth + kPlotWidth, y);
  s += text(kLabelWidth, y + 16, "0", "middle");
  s += text(kLabelWidth + kPlotWidth, y + 16, value_text(max_v), "middle");
  s += text(kLabelWidth + kPlotWidth / 2, y + 32, value_label, "middle");
  s += "</svg>\n";
  return s;
}

std::string svg_stage_shares(const std::vector<RescoreResult>& results, const std::string& title) {
  std::vector<std::string> stages;
  for (const auto& r : results) {
    if (r.normalized_per_stage) {
      for (const auto& [name, v] : *r.normalized_per_stage) stages.push_back(name);
      break;
    }
  }
  const double h = kTop + kRow * static_cast<double>(results.size()) + 60.0;
  const double w = kLabelWidth + kPlotWidth + 40.0;
  std::string s = header(w, h, title);
  s += "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
       "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"white\"/>"
       "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#888888\" stroke-width=\"2\"/></pattern></defs>\n";
  double y = kTop;
  for (const auto& r : results) {
    s += text(kLabelWidth - 6, y + kRow * 0.65, r.concept_id, "end");
    double total = 0.0;
    if (r.normalized_per_stage) {
      for (const auto& [name, v] : *r.normalized_per_stage) total += v;
    }
    if (!(total > 0.0)) {
      s += rect(kLabelWidth, y + 3, kPlotWidth, kRow - 6, "url(#hatch)");
      s += text(kLabelWidth + kPlotWidth / 2, y + kRow * 0.65, "none", "middle");
    } else {
      double x = kLabelWidth;
      std::size_t k = 0;
      for (const auto& [name, v] : *r.normalized_per_stage) {
        const double bw = kPlotWidth * v;
        if (bw > 0.0) s += rect(x, y + 3, bw, kRow - 6, kPalette[k % std::size(kPalette)]);
        x += bw;
        ++k;
      }
    }
    y += kRow;
  }
  s += line(kLabelWidth, kTop, kLabelWidth, y);
  double x = kLabelWidth;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    s += rect(x, y + 12, 12, 12, kPalette[k % std::size(kPalette)]);
    s += text(x + 16, y + 22, stages[k]);
    x += 100.0;
  }
  s += "</svg>\n";
  return s;
}

std::string svg_matrix(const Matrix& m, const std::vector<std::string>& labels, const std::string& title) {
  const double cell = 56.0;
  const auto n = static_cast<std::size_t>(m.rows());
  const double w = kLabelWidth + cell * static_cast<double>(n) + 20.0;
  const double h = kTop + 20.0 + cell * static_cast<double>(n) + 20.0;
  std::string s = header(w, h, title);
  const double top = kTop + 20.0;
  for (std::size_t j = 0; j < n; ++j) {
    s += text(kLabelWidth + cell * (static_cast<double>(j) + 0.5), top - 6, labels[j], "middle");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double y = top + cell * static_cast<double>(i);
    s += text(kLabelWidth - 6, y + cell * 0.55, labels[i], "end");
    const double diag = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double t = diag > 0.0 ? std::clamp(v / diag, 0.0, 1.0) : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
      const double x = kLabelWidth + cell * static_cast<double>(j);
      s += rect(x, y, cell - 2, cell - 2, fill);
      s += text(x + cell / 2, y + cell * 0.55, value_text(v), "middle");
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace hierprobe
