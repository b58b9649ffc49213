#pragma once

#include "spherecal/conic.hpp"
#include "spherecal/image.hpp"
#include "spherecal/projection.hpp"
#include "spherecal/types.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace spherecal::testing {

inline CameraIntrinsics vga_camera() { return {500, 500, 320, 240, 640, 480}; }

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 axis(g(rng), g(rng), g(rng));
  axis.normalize();
  std::uniform_real_distribution<double> angle(0.0, 3.1);
  return so3_exp(angle(rng) * axis);
}

// Andrew monotone chain; returns hull vertices in counter-clockwise order.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  const auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) -
           (a.y() - o.y()) * (b.x() - o.x());
  };
  const int n = static_cast<int>(pts.size());
  std::vector<Vec2> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (int i = n - 2, lower = k + 1; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline ImageU8 rasterize_ellipse(const Ellipse& e, int w, int h) {
  ImageU8 m(w, h, 0);
  const int x0 = std::max(0, static_cast<int>(e.center.x() - e.a) - 2);
  const int x1 = std::min(w - 1, static_cast<int>(e.center.x() + e.a) + 2);
  const int y0 = std::max(0, static_cast<int>(e.center.y() - e.a) - 2);
  const int y1 = std::min(h - 1, static_cast<int>(e.center.y() + e.a) + 2);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (ellipse_scaled_radius(e, Vec2(x, y)) <= 1.0) m.at(x, y) = kForeground;
  return m;
}

// Convex polygon fill (vertices in order).
inline ImageU8 rasterize_polygon(const std::vector<Vec2>& poly, int w, int h) {
  ImageU8 m(w, h, 0);
  const int n = static_cast<int>(poly.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool inside = true;
      for (int i = 0; i < n && inside; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        const double c = (b.x() - a.x()) * (y - a.y()) -
                         (b.y() - a.y()) * (x - a.x());
        inside = c <= 0;
      }
      if (inside) m.at(x, y) = kForeground;
    }
  }
  return m;
}

}  // namespace spherecal::testing
