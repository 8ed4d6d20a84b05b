#pragma once

// Deterministic SVG 1.1 rendering of plot geometry.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "diagmeta/plots.hpp"

namespace diagmeta {

struct SvgOptions {
  int width = 520, height = 520;
  int margin = 64;
  std::string title;
};

namespace svg_detail {

inline std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  std::string s = b;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string stroke_attrs(const Style& s) {
  std::string a = " stroke=\"" + escape(s.stroke) + "\" stroke-width=\"" + num(s.width) + "\" fill=\"" + escape(s.fill) + "\"";
  if (!s.dash.empty()) a += " stroke-dasharray=\"" + escape(s.dash) + "\"";
  if (s.opacity != 1) a += " opacity=\"" + num(s.opacity) + "\"";
  return a;
}

struct Frame {
  double x0, y0, w, h;
  double px(double x) const { return x0 + x * w; }
  double py(double y) const { return y0 + (1 - y) * h; }
};

inline void header(std::ostringstream& os, int width, int height) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
}

inline void roc_axes(std::ostringstream& os, const Frame& f, const SvgOptions& o) {
  os << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  os << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.w) << "\" height=\"" << num(f.h) << "\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = i / 5.0;
    os << "<line x1=\"" << num(f.px(t)) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(f.px(t)) << "\" y2=\""
       << num(f.py(0) + 5) << "\"/>\n";
    os << "<line x1=\"" << num(f.px(0) - 5) << "\" y1=\"" << num(f.py(t)) << "\" x2=\"" << num(f.px(0)) << "\" y2=\""
       << num(f.py(t)) << "\"/>\n";
  }
  os << "</g>\n<g class=\"tick-labels\" fill=\"black\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = i / 5.0;
    char lab[8];
    std::snprintf(lab, sizeof lab, "%.1f", t);
    os << "<text x=\"" << num(f.px(t)) << "\" y=\"" << num(f.py(0) + 18) << "\" text-anchor=\"middle\">" << lab << "</text>\n";
    os << "<text x=\"" << num(f.px(0) - 8) << "\" y=\"" << num(f.py(t) + 4) << "\" text-anchor=\"end\">" << lab << "</text>\n";
  }
  os << "</g>\n";
  os << "<text class=\"xlabel\" x=\"" << num(f.px(0.5)) << "\" y=\"" << num(f.py(0) + 40)
     << "\" text-anchor=\"middle\" font-size=\"14\">1−Specificity</text>\n";
  os << "<text class=\"ylabel\" x=\"" << num(f.px(0) - 44) << "\" y=\"" << num(f.py(0.5))
     << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 " << num(f.px(0) - 44) << ' ' << num(f.py(0.5))
     << ")\">Sensitivity</text>\n";
  if (!o.title.empty())
    os << "<text class=\"title\" x=\"" << num(f.px(0.5)) << "\" y=\"" << num(f.y0 - 20)
       << "\" text-anchor=\"middle\" font-size=\"15\">" << escape(o.title) << "</text>\n";
}

inline void curve(std::ostringstream& os, const CurveGeometry& g, const Frame& f) {
  os << "<g class=\"" << to_string(g.kind) << "\"";
  if (!g.label.empty()) os << " data-label=\"" << escape(g.label) << "\"";
  os << ">\n";
  switch (g.kind) {
    case CurveKind::sroc_line:
    case CurveKind::credible_region:
    case CurveKind::prediction_region: {
      os << (g.closed ? "<polygon" : "<polyline") << " points=\"";
      for (std::size_t i = 0; i < g.points.size(); ++i)
        os << (i ? " " : "") << num(f.px(g.points[i].x)) << ',' << num(f.py(g.points[i].y));
      os << "\"" << stroke_attrs(g.style) << "/>\n";
      break;
    }
    case CurveKind::summary_point:
    case CurveKind::data_bubble:
      for (auto& p : g.points)
        os << "<circle cx=\"" << num(f.px(p.x)) << "\" cy=\"" << num(f.py(p.y)) << "\" r=\"" << num(g.style.radius) << "\""
           << stroke_attrs(g.style) << "/>\n";
      break;
    case CurveKind::crosshair: {
      if (g.points.size() != 5) break;
      const auto& p = g.points;
      os << "<line x1=\"" << num(f.px(p[1].x)) << "\" y1=\"" << num(f.py(p[1].y)) << "\" x2=\"" << num(f.px(p[2].x))
         << "\" y2=\"" << num(f.py(p[2].y)) << "\"" << stroke_attrs(g.style) << "/>\n";
      os << "<line x1=\"" << num(f.px(p[3].x)) << "\" y1=\"" << num(f.py(p[3].y)) << "\" x2=\"" << num(f.px(p[4].x))
         << "\" y2=\"" << num(f.py(p[4].y)) << "\"" << stroke_attrs(g.style) << "/>\n";
      break;
    }
  }
  os << "</g>\n";
}

}  // namespace svg_detail

/// ROC-space plot. Each inner vector is one overlay layer (one fit).
inline std::string render_svg(const std::vector<std::vector<CurveGeometry>>& layers, const SvgOptions& o = {}) {
  std::size_t n = 0;
  for (auto& l : layers) n += l.size();
  if (n == 0) throw ValidationError("nothing to plot: empty geometry");
  using namespace svg_detail;
  std::ostringstream os;
  header(os, o.width, o.height);
  const Frame f{static_cast<double>(o.margin), static_cast<double>(o.margin) - 24, static_cast<double>(o.width - o.margin - 24),
                static_cast<double>(o.height - o.margin - 24 - (o.margin - 24))};
  roc_axes(os, f, o);
  os << "<defs><clipPath id=\"plot-area\"><rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.w)
     << "\" height=\"" << num(f.h) << "\"/></clipPath></defs>\n";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    os << "<g class=\"layer\" data-layer=\"" << l << "\" clip-path=\"url(#plot-area)\">\n";
    for (auto& g : layers[l]) curve(os, g, f);
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string render_svg(const std::vector<CurveGeometry>& geometry, const SvgOptions& o = {}) {
  return render_svg(std::vector<std::vector<CurveGeometry>>{geometry}, o);
}

/// Forest plot: one row per study, summary rows as diamonds.
inline std::string render_svg(const ForestGeometry& g, const SvgOptions& o = {}) {
  using namespace svg_detail;
  std::size_t nrows = 0;
  for (auto& p : g.partitions) nrows += p.rows.size() + (g.partitions.size() > 1 ? 1 : 0);
  if (nrows == 0) throw ValidationError("nothing to plot: empty geometry");
  const double row_h = 22;
  const double left = 260, right = 150, top = 50, bottom = 60;
  const double width = std::max<double>(o.width, left + right + 300);
  const double height = top + bottom + row_h * static_cast<double>(nrows);
  const double x0 = left, w = width - left - right;
  auto px = [&](double v) { return x0 + (v - g.cut_lo) / (g.cut_hi - g.cut_lo) * w; };
  std::ostringstream os;
  header(os, static_cast<int>(width), static_cast<int>(height));
  if (!o.title.empty())
    os << "<text class=\"title\" x=\"" << num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
       << escape(o.title) << "</text>\n";
  os << "<text class=\"column-head\" x=\"10\" y=\"" << num(top - 10) << "\">Study</text>\n";
  os << "<text class=\"column-head\" x=\"" << num(left - 10) << "\" y=\"" << num(top - 10)
     << "\" text-anchor=\"end\">TP FP TN FN</text>\n";
  char head[96];
  std::snprintf(head, sizeof head, "%s [%g, %g]", g.est_type.c_str(), g.interval_lo, g.interval_hi);
  os << "<text class=\"column-head\" x=\"" << num(width - right + 10) << "\" y=\"" << num(top - 10) << "\">" << escape(head)
     << "</text>\n";
  double y = top;
  for (auto& part : g.partitions) {
    if (g.partitions.size() > 1) {
      os << "<text class=\"partition\" x=\"10\" y=\"" << num(y + 15) << "\" font-weight=\"bold\">" << escape(part.level)
         << "</text>\n";
      y += row_h;
    }
    for (auto& r : part.rows) {
      const double cy = y + row_h / 2;
      os << "<g class=\"" << (r.summary ? "forest-summary" : "forest-row") << "\" data-label=\"" << escape(r.label) << "\">\n";
      os << "<text x=\"10\" y=\"" << num(cy + 4) << "\"" << (r.summary ? " font-weight=\"bold\"" : "") << ">" << escape(r.label)
         << "</text>\n";
      if (!r.counts.empty())
        os << "<text x=\"" << num(left - 10) << "\" y=\"" << num(cy + 4) << "\" text-anchor=\"end\">" << escape(r.counts) << "</text>\n";
      os << "<line x1=\"" << num(px(r.lo)) << "\" y1=\"" << num(cy) << "\" x2=\"" << num(px(r.hi)) << "\" y2=\"" << num(cy)
         << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
      if (r.clipped_lo)
        os << "<polygon points=\"" << num(px(r.lo)) << ',' << num(cy) << ' ' << num(px(r.lo) + 6) << ',' << num(cy - 4) << ' '
           << num(px(r.lo) + 6) << ',' << num(cy + 4) << "\" fill=\"black\"/>\n";
      if (r.clipped_hi)
        os << "<polygon points=\"" << num(px(r.hi)) << ',' << num(cy) << ' ' << num(px(r.hi) - 6) << ',' << num(cy - 4) << ' '
           << num(px(r.hi) - 6) << ',' << num(cy + 4) << "\" fill=\"black\"/>\n";
      const double s = 3 * r.marker;
      if (r.summary)
        os << "<polygon points=\"" << num(px(r.lo)) << ',' << num(cy) << ' ' << num(px(r.estimate)) << ',' << num(cy - 6) << ' '
           << num(px(r.hi)) << ',' << num(cy) << ' ' << num(px(r.estimate)) << ',' << num(cy + 6)
           << "\" fill=\"gray\" stroke=\"black\"/>\n";
      else
        os << "<rect x=\"" << num(px(r.estimate) - s) << "\" y=\"" << num(cy - s) << "\" width=\"" << num(2 * s) << "\" height=\""
           << num(2 * s) << "\" fill=\"black\"/>\n";
      char txt[96];
      std::snprintf(txt, sizeof txt, "%.3f [%.3f, %.3f]", r.estimate, r.raw_lo, r.raw_hi);
      os << "<text x=\"" << num(width - right + 10) << "\" y=\"" << num(cy + 4) << "\">" << txt << "</text>\n";
      os << "</g>\n";
      y += row_h;
    }
  }
  const double ay = y + 8;
  os << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  os << "<line x1=\"" << num(px(g.cut_lo)) << "\" y1=\"" << num(ay) << "\" x2=\"" << num(px(g.cut_hi)) << "\" y2=\"" << num(ay) << "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = g.cut_lo + (g.cut_hi - g.cut_lo) * i / 4.0;
    os << "<line x1=\"" << num(px(v)) << "\" y1=\"" << num(ay) << "\" x2=\"" << num(px(v)) << "\" y2=\"" << num(ay + 5) << "\"/>\n";
  }
  os << "</g>\n<g class=\"tick-labels\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = g.cut_lo + (g.cut_hi - g.cut_lo) * i / 4.0;
    char lab[32];
    std::snprintf(lab, sizeof lab, "%.3g", v);
    os << "<text x=\"" << num(px(v)) << "\" y=\"" << num(ay + 18) << "\" text-anchor=\"middle\">" << lab << "</text>\n";
  }
  os << "</g>\n<text class=\"xlabel\" x=\"" << num(px(0.5 * (g.cut_lo + g.cut_hi))) << "\" y=\"" << num(ay + 38)
     << "\" text-anchor=\"middle\" font-size=\"14\">" << escape(to_string(g.type)) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace diagmeta
