#pragma once
// Minimal SVG output: scatter and curve layers on a manifold chart.
// S2 uses the Mollweide projection, S1 a circle chart, T2 the flat angle
// square. Curves are split where they wrap around a chart seam.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"

namespace mvqr {

struct SvgLayer {
  std::vector<Point> points;
  std::string color = "#1f77b4";
  double radius = 2.0;  // marker radius for scatter layers
  bool path = false;    // polyline instead of markers
};

namespace svg_detail {

struct XY {
  double x, y;
};

// Mollweide: 2t + sin 2t = pi sin(lat), x = 2 sqrt2/pi lon cos t, y = sqrt2 sin t
inline XY mollweide(double lon, double lat) {
  double t = lat;
  for (int i = 0; i < 12; ++i) {
    double f = 2.0 * t + std::sin(2.0 * t) - kPi * std::sin(lat);
    double fp = 2.0 + 2.0 * std::cos(2.0 * t);
    if (std::abs(fp) < 1e-12) break;
    t -= f / fp;
  }
  return {2.0 * std::sqrt(2.0) / kPi * lon * std::cos(t), std::sqrt(2.0) * std::sin(t)};
}

// chart coordinates in [-1, 1]^2-ish boxes
inline XY chart(Manifold m, const Point& p) {
  switch (m) {
    case Manifold::S1: {
      return {p[0], p[1]};
    }
    case Manifold::S2: {
      double lon = std::atan2(p[1], p[0]);
      double lat = std::asin(std::max(-1.0, std::min(1.0, p[2])));
      XY xy = mollweide(lon, lat);
      return {xy.x / (2.0 * std::sqrt(2.0)), xy.y / std::sqrt(2.0)};
    }
    case Manifold::T2: {
      auto a = t2_angles(p);
      return {a[0] / kPi, a[1] / kPi};
    }
  }
  throw Error("chart: bad manifold");
}

}  // namespace svg_detail

inline void write_svg(const std::string& file, Manifold m,
                      const std::vector<SvgLayer>& layers, int width = 720) {
  const double w = static_cast<double>(width);
  const double half = w / 2.0;
  const double scale = 0.46 * w;
  auto place = [&](const Point& p) {
    svg_detail::XY c = svg_detail::chart(m, p);
    return svg_detail::XY{half + scale * c.x, half - scale * c.y};
  };

  std::ostringstream out;
  out.precision(2);
  out << std::fixed;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << width << "\" viewBox=\"0 0 " << width << " " << width
      << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << width
      << "\" fill=\"white\"/>\n";
  // chart outline
  switch (m) {
    case Manifold::S1:
      out << "<circle cx=\"" << half << "\" cy=\"" << half << "\" r=\"" << scale
          << "\" fill=\"none\" stroke=\"#999\"/>\n";
      break;
    case Manifold::S2:
      out << "<ellipse cx=\"" << half << "\" cy=\"" << half << "\" rx=\"" << scale
          << "\" ry=\"" << scale / 2.0 << "\" fill=\"none\" stroke=\"#999\"/>\n";
      break;
    case Manifold::T2:
      out << "<rect x=\"" << half - scale << "\" y=\"" << half - scale
          << "\" width=\"" << 2.0 * scale << "\" height=\"" << 2.0 * scale
          << "\" fill=\"none\" stroke=\"#999\"/>\n";
      break;
  }
  for (const SvgLayer& layer : layers) {
    if (layer.path && layer.points.size() > 1) {
      // split the polyline where it jumps across a seam
      std::vector<std::vector<svg_detail::XY>> runs(1);
      svg_detail::XY prev = place(layer.points[0]);
      runs.back().push_back(prev);
      for (std::size_t i = 1; i < layer.points.size(); ++i) {
        svg_detail::XY cur = place(layer.points[i]);
        if (std::abs(cur.x - prev.x) > 0.5 * scale ||
            std::abs(cur.y - prev.y) > 0.5 * scale)
          runs.emplace_back();
        runs.back().push_back(cur);
        prev = cur;
      }
      for (const auto& run : runs) {
        if (run.size() < 2) continue;
        out << "<polyline fill=\"none\" stroke=\"" << layer.color
            << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& c : run) out << c.x << "," << c.y << " ";
        out << "\"/>\n";
      }
    } else {
      for (const Point& p : layer.points) {
        svg_detail::XY c = place(p);
        out << "<circle cx=\"" << c.x << "\" cy=\"" << c.y << "\" r=\""
            << layer.radius << "\" fill=\"" << layer.color
            << "\" fill-opacity=\"0.7\"/>\n";
      }
    }
  }
  out << "</svg>\n";

  std::ofstream f(file);
  if (!f) throw Error("cannot open for writing: " + file);
  f << out.str();
}

}  // namespace mvqr
