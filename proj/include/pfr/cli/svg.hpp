// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace pfr::cli::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

class Document {
 public:
  Document(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
             "\" fill=\"" + fill + "\" stroke=\"#ffffff\"/>\n";
  }
  void text(double x, double y, const std::string& s, double size = 11, const char* anchor = "middle") {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) + "\" text-anchor=\"" +
             anchor + "\" font-family=\"sans-serif\">" + escape(s) + "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#000000") {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
             "\" stroke=\"" + stroke + "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" + fill + "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + stroke + "\" points=\"";
    for (const auto& [x, y] : pts) body_ += num(x) + "," + num(y) + " ";
    body_ += "\"/>\n";
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
           "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n<rect width=\"100%\" height=\"100%\" "
           "fill=\"#ffffff\"/>\n" + body_ + "</svg>\n";
  }

 private:
  double width_, height_;
  std::string body_;
};

/// Blue scale for values in [0, 1].
inline std::string heat(double v) {
  if (!std::isfinite(v)) return "#dddddd";
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(247 - v * (247 - 8));
  const int g = static_cast<int>(251 - v * (251 - 48));
  const int b = static_cast<int>(255 - v * (255 - 107));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

/// Linear map of [lo, hi] onto [a, b]; degenerate ranges map to the middle.
inline double scale(double v, double lo, double hi, double a, double b) {
  if (!(hi > lo)) return 0.5 * (a + b);
  return a + (v - lo) / (hi - lo) * (b - a);
}

/// Axes box with min/max tick labels.
inline void axes(Document& doc, double x0, double y0, double x1, double y1, double xlo, double xhi, double ylo,
                 double yhi, const std::string& xlabel, const std::string& ylabel) {
  doc.line(x0, y1, x1, y1);
  doc.line(x0, y0, x0, y1);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", xlo);
  doc.text(x0, y1 + 14, buf, 10);
  std::snprintf(buf, sizeof buf, "%.3g", xhi);
  doc.text(x1, y1 + 14, buf, 10);
  std::snprintf(buf, sizeof buf, "%.3g", ylo);
  doc.text(x0 - 4, y1, buf, 10, "end");
  std::snprintf(buf, sizeof buf, "%.3g", yhi);
  doc.text(x0 - 4, y0 + 4, buf, 10, "end");
  doc.text(0.5 * (x0 + x1), y1 + 30, xlabel);
  doc.text(x0 - 40, 0.5 * (y0 + y1), ylabel, 11, "middle");
}

}  // namespace pfr::cli::svg
