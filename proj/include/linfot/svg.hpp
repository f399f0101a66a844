#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace linfot {

/// Minimal SVG emitter for the figure outputs; deterministic formatting.
class SvgWriter {
 public:
  SvgWriter(double width, double height) : width_(width), height_(height) {
    buf_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << int(width)
         << "\" height=\"" << int(height) << "\" viewBox=\"0 0 " << int(width) << " "
         << int(height) << "\">\n";
    buf_ << "<rect width=\"" << int(width) << "\" height=\"" << int(height)
         << "\" fill=\"white\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double strokeWidth = 1.0, const std::string& extra = "") {
    buf_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
         << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
         << fmt(strokeWidth) << "\"" << extra << "/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    buf_ << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r)
         << "\" fill=\"" << fill << "\"/>\n";
  }

  void polylineStart(const std::string& stroke, double strokeWidth = 1.5) {
    buf_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
         << fmt(strokeWidth) << "\" points=\"";
  }
  void polylinePoint(double x, double y) { buf_ << fmt(x) << "," << fmt(y) << " "; }
  void polylineEnd() { buf_ << "\"/>\n"; }

  void text(double x, double y, const std::string& s, int size = 12) {
    buf_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }

  std::string str() const { return buf_.str() + "</svg>\n"; }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("SvgWriter: cannot open " + path);
    out << str();
    if (!out) throw std::runtime_error("SvgWriter: write failed for " + path);
  }

  double width() const { return width_; }
  double height() const { return height_; }

 private:
  static std::string fmt(double v) {
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%.2f", v);
    return tmp;
  }

  double width_, height_;
  std::ostringstream buf_;
};

}  // namespace linfot
