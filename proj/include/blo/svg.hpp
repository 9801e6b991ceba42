#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace blo {

// Static SVG in data coordinates; y points up.
class SvgScene {
 public:
  SvgScene(double xmin, double xmax, double ymin, double ymax, int width_px = 600, int height_px = 600);

  void rect(double x, double y, double w, double h, const std::string& fill, double opacity = 1.0);
  void circle(double x, double y, double r_px, const std::string& fill, const std::string& stroke = "none");
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width_px = 1.5);
  void line(double x0, double y0, double x1, double y1, const std::string& stroke, double width_px = 1.0);
  void text(double x, double y, const std::string& s, int size_px = 12);

  std::string str() const;
  void write(const std::filesystem::path& path) const;  // IoError

 private:
  double px(double x) const;
  double py(double y) const;

  double xmin_, xmax_, ymin_, ymax_;
  int w_, h_;
  std::vector<std::string> items_;
};

// Fixed palette, cycled by index.
std::string palette(std::size_t i);

}  // namespace blo
