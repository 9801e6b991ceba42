#include "blo/svg.hpp"

#include <cstdio>
#include <fstream>

#include "blo/error.hpp"

namespace blo {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

}  // namespace

SvgScene::SvgScene(double xmin, double xmax, double ymin, double ymax, int width_px, int height_px)
    : xmin_(xmin), xmax_(xmax), ymin_(ymin), ymax_(ymax), w_(width_px), h_(height_px) {
  if (!(xmax > xmin) || !(ymax > ymin) || width_px <= 0 || height_px <= 0)
    throw Error(ErrorKind::InvalidConfig, "degenerate SVG viewport");
}

double SvgScene::px(double x) const { return (x - xmin_) / (xmax_ - xmin_) * w_; }
double SvgScene::py(double y) const { return (ymax_ - y) / (ymax_ - ymin_) * h_; }

void SvgScene::rect(double x, double y, double w, double h, const std::string& fill, double opacity) {
  const double x0 = px(x), x1 = px(x + w), y0 = py(y + h), y1 = py(y);
  items_.push_back("<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
                   num(y1 - y0) + "\" fill=\"" + escape(fill) + "\" fill-opacity=\"" + num(opacity) + "\"/>");
}

void SvgScene::circle(double x, double y, double r_px, const std::string& fill, const std::string& stroke) {
  items_.push_back("<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" + num(r_px) + "\" fill=\"" +
                   escape(fill) + "\" stroke=\"" + escape(stroke) + "\"/>");
}

void SvgScene::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                        double width_px) {
  std::string p;
  for (const auto& [x, y] : pts) p += num(px(x)) + "," + num(py(y)) + " ";
  items_.push_back("<polyline points=\"" + p + "\" fill=\"none\" stroke=\"" + escape(stroke) + "\" stroke-width=\"" +
                   num(width_px) + "\"/>");
}

void SvgScene::line(double x0, double y0, double x1, double y1, const std::string& stroke, double width_px) {
  items_.push_back("<line x1=\"" + num(px(x0)) + "\" y1=\"" + num(py(y0)) + "\" x2=\"" + num(px(x1)) + "\" y2=\"" +
                   num(py(y1)) + "\" stroke=\"" + escape(stroke) + "\" stroke-width=\"" + num(width_px) + "\"/>");
}

void SvgScene::text(double x, double y, const std::string& s, int size_px) {
  items_.push_back("<text x=\"" + num(px(x)) + "\" y=\"" + num(py(y)) + "\" font-size=\"" + std::to_string(size_px) +
                   "\" font-family=\"sans-serif\">" + escape(s) + "</text>");
}

std::string SvgScene::str() const {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  std::to_string(w_) + "\" height=\"" + std::to_string(h_) + "\" viewBox=\"0 0 " + std::to_string(w_) +
                  " " + std::to_string(h_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& it : items_) s += it + "\n";
  return s + "</svg>\n";
}

void SvgScene::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << str();
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

std::string palette(std::size_t i) {
  static const char* colors[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

}  // namespace blo
