#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lfd {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Binary H×W label image, row-major; 1 marks the positive class.
struct Mask {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::int64_t h, std::int64_t w, std::uint8_t fill = 0);

  std::uint8_t at(std::int64_t row, std::int64_t col) const {
    return values[static_cast<std::size_t>(row * width + col)];
  }
  std::uint8_t& at(std::int64_t row, std::int64_t col) {
    return values[static_cast<std::size_t>(row * width + col)];
  }
  std::int64_t count() const;
  bool operator==(const Mask&) const = default;
};

Mask zeros_mask(std::int64_t height, std::int64_t width);
Mask ones_mask(std::int64_t height, std::int64_t width);

// Counter-clockwise (in x-right, y-up orientation) hull by Andrew's monotone
// chain, starting at the lowest-x vertex. Collinear boundary points are
// dropped. Throws DegenerateHullError for fewer than 3 points or when all
// points are collinear.
std::vector<Point> convex_hull(std::span<const Point> points);

// True when (x, y) is inside or on the boundary of a counter-clockwise convex
// polygon. This predicate defines the rasterization rule.
bool inside_convex_polygon(std::span<const Point> polygon, double x, double y);

// Pixel (r, c) is set iff (c + 0.5, r + 0.5) satisfies inside_convex_polygon.
// Scanline fill; the polygon may extend beyond the image.
Mask rasterize_hull(std::span<const Point> polygon, std::int64_t height, std::int64_t width);

Mask convex_hull_mask(std::span<const Point> landmarks, std::int64_t height, std::int64_t width);

}  // namespace lfd
