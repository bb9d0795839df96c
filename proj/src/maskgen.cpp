#include "lfd/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lfd/errors.hpp"

namespace lfd {
namespace {

// > 0 when o→a→b turns left (counter-clockwise).
double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

void check_extent(std::int64_t h, std::int64_t w) {
  if (h <= 0 || w <= 0) {
    throw DimensionError("mask extent must be positive, got " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
}

}  // namespace

Mask::Mask(std::int64_t h, std::int64_t w, std::uint8_t fill)
    : height(h), width(w), values(static_cast<std::size_t>(h * w), fill) {
  check_extent(h, w);
}

std::int64_t Mask::count() const {
  return std::accumulate(values.begin(), values.end(), std::int64_t{0});
}

Mask zeros_mask(std::int64_t height, std::int64_t width) { return Mask(height, width, 0); }
Mask ones_mask(std::int64_t height, std::int64_t width) { return Mask(height, width, 1); }

std::vector<Point> convex_hull(std::span<const Point> points) {
  if (points.size() < 3) {
    throw DegenerateHullError("convex hull needs at least 3 points, got " +
                              std::to_string(points.size()));
  }
  std::vector<Point> p(points.begin(), points.end());
  std::sort(p.begin(), p.end(),
            [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  p.erase(std::unique(p.begin(), p.end()), p.end());

  std::vector<Point> hull(2 * p.size());
  std::size_t k = 0;
  for (const auto& q : p) {  // lower chain
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], q) <= 0) --k;
    hull[k++] = q;
  }
  for (std::size_t i = p.size() - 1, lower = k + 1; i-- > 0;) {  // upper chain
    while (k >= lower && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
    hull[k++] = p[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);  // last point repeats the first
  if (hull.size() < 3) throw DegenerateHullError("all landmark points are collinear");
  return hull;
}

bool inside_convex_polygon(std::span<const Point> polygon, double x, double y) {
  const Point q{x, y};
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % polygon.size()];
    if (cross(a, b, q) < 0) return false;
  }
  return true;
}

Mask rasterize_hull(std::span<const Point> polygon, std::int64_t height, std::int64_t width) {
  if (polygon.size() < 3) {
    throw ContractError("rasterize_hull needs a polygon with at least 3 vertices");
  }
  Mask mask = zeros_mask(height, width);
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  for (const auto& v : polygon) {
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  const auto r0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(ymin - 0.5)));
  const auto r1 =
      std::min<std::int64_t>(height - 1, static_cast<std::int64_t>(std::floor(ymax - 0.5)));

  auto inside = [&](std::int64_t r, std::int64_t c) {
    return inside_convex_polygon(polygon, static_cast<double>(c) + 0.5,
                                 static_cast<double>(r) + 0.5);
  };

  for (std::int64_t r = r0; r <= r1; ++r) {
    const double y = static_cast<double>(r) + 0.5;
    double xl = std::numeric_limits<double>::infinity();
    double xr = -xl;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
      const auto& a = polygon[i];
      const auto& b = polygon[(i + 1) % polygon.size()];
      if (y < std::min(a.y, b.y) || y > std::max(a.y, b.y)) continue;
      if (a.y == b.y) {
        xl = std::min({xl, a.x, b.x});
        xr = std::max({xr, a.x, b.x});
      } else {
        const double x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
        xl = std::min(xl, x);
        xr = std::max(xr, x);
      }
    }
    if (xl > xr) continue;

    // The span estimate can be off by one pixel through rounding; settle both
    // ends with the exact predicate. Inside pixels on a row form one interval.
    auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(xl - 0.5)) - 1);
    auto hi = std::min<std::int64_t>(width - 1,
                                     static_cast<std::int64_t>(std::floor(xr - 0.5)) + 1);
    while (lo <= hi && !inside(r, lo)) ++lo;
    while (hi >= lo && !inside(r, hi)) --hi;
    if (lo > hi) continue;
    while (lo > 0 && inside(r, lo - 1)) --lo;
    while (hi < width - 1 && inside(r, hi + 1)) ++hi;
    std::fill_n(mask.values.begin() + r * width + lo, hi - lo + 1, std::uint8_t{1});
  }
  return mask;
}

Mask convex_hull_mask(std::span<const Point> landmarks, std::int64_t height, std::int64_t width) {
  const auto hull = convex_hull(landmarks);
  return rasterize_hull(hull, height, width);
}

}  // namespace lfd
