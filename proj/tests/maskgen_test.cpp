#include "lfd/maskgen.hpp"

#include <doctest.h>

#include <random>

#include "lfd/errors.hpp"

using namespace lfd;

namespace {

double orient(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Carathéodory: a point lies in the hull of a planar set iff it lies in some
// triangle of three of its points. Independent of any hull construction.
bool in_hull_brute_force(const std::vector<Point>& pts, const Point& q) {
  const auto n = pts.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      for (std::size_t c = b + 1; c < n; ++c) {
        const double area = orient(pts[a], pts[b], pts[c]);
        if (area == 0) continue;
        const double s = area > 0 ? 1.0 : -1.0;
        if (s * orient(pts[a], pts[b], q) >= 0 && s * orient(pts[b], pts[c], q) >= 0 &&
            s * orient(pts[c], pts[a], q) >= 0) {
          return true;
        }
      }
    }
  }
  return false;
}

std::vector<Point> random_integer_landmarks(std::mt19937_64& rng, int lo, int hi, int count) {
  std::uniform_int_distribution<int> coord(lo, hi);
  std::vector<Point> pts;
  for (int i = 0; i < count; ++i) pts.push_back({double(coord(rng)), double(coord(rng))});
  return pts;
}

bool collinear(const std::vector<Point>& pts) {
  for (std::size_t i = 2; i < pts.size(); ++i) {
    if (orient(pts[0], pts[1], pts[i]) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zeros and ones masks") {
  const auto z = zeros_mask(4, 4);
  CHECK(z.values.size() == 16);
  CHECK(z.count() == 0);
  CHECK(zeros_mask(7, 3).count() == 0);
  const auto o = ones_mask(4, 4);
  CHECK(o.values.size() == 16);
  CHECK(o.count() == 16);
  CHECK(ones_mask(7, 3).count() == 21);
  CHECK_THROWS_AS(zeros_mask(0, 3), DimensionError);
}

TEST_CASE("convex hull of small point sets") {
  SUBCASE("triangle is its own hull") {
    const std::vector<Point> tri{{0, 0}, {4, 0}, {0, 4}};
    const auto hull = convex_hull(tri);
    CHECK(hull == std::vector<Point>{{0, 0}, {4, 0}, {0, 4}});
  }
  SUBCASE("interior point is dropped") {
    const std::vector<Point> pts{{0, 0}, {4, 0}, {4, 4}, {0, 4}, {2, 2}};
    CHECK(convex_hull(pts) == std::vector<Point>{{0, 0}, {4, 0}, {4, 4}, {0, 4}});
  }
  SUBCASE("collinear boundary points are dropped") {
    const std::vector<Point> pts{{0, 0}, {2, 0}, {4, 0}, {4, 4}, {0, 4}};
    CHECK(convex_hull(pts).size() == 4);
  }
  SUBCASE("degenerate inputs") {
    const std::vector<Point> line{{0, 0}, {1, 1}, {2, 2}, {5, 5}};
    CHECK_THROWS_AS(convex_hull(line), DegenerateHullError);
    const std::vector<Point> two{{0, 0}, {1, 0}};
    CHECK_THROWS_AS(convex_hull(two), DegenerateHullError);
    const std::vector<Point> dup{{1, 1}, {1, 1}, {1, 1}};
    CHECK_THROWS_AS(convex_hull(dup), DegenerateHullError);
  }
}

TEST_CASE("hull contains every input point and turns strictly left") {
  // Integer coordinates keep the orientation tests exact.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_integer_landmarks(rng, -50, 50, 50);
    const auto hull = convex_hull(pts);
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const auto& a = hull[i];
      const auto& b = hull[(i + 1) % hull.size()];
      const auto& c = hull[(i + 2) % hull.size()];
      CHECK(orient(a, b, c) > 0);
      for (const auto& p : pts) CHECK(orient(a, b, p) >= 0);
    }
  }
}

TEST_CASE("rasterized triangle") {
  const std::vector<Point> tri{{0, 0}, {8, 0}, {0, 8}};
  const auto mask = rasterize_hull(convex_hull(tri), 8, 8);
  CHECK(mask.at(0, 0) == 1);
  CHECK(mask.at(7, 7) == 0);
  for (std::int64_t r = 0; r < 8; ++r) {
    for (std::int64_t c = 0; c < 8; ++c) {
      // Center (c+0.5, r+0.5) is inside iff x + y <= 8.
      CHECK(mask.at(r, c) == (c + r + 1 <= 8 ? 1 : 0));
    }
  }
  CHECK(mask.count() == 36);
}

TEST_CASE("hull covering the image and hull outside it") {
  const std::vector<Point> big{{-5, -5}, {40, -5}, {40, 40}, {-5, 40}};
  CHECK(rasterize_hull(big, 16, 16) == ones_mask(16, 16));
  const std::vector<Point> away{{100, 100}, {120, 100}, {110, 130}};
  CHECK(rasterize_hull(away, 16, 16) == zeros_mask(16, 16));
  const std::vector<Point> left{{-30, 2}, {-10, 2}, {-20, 12}};
  CHECK(convex_hull_mask(left, 16, 16) == zeros_mask(16, 16));
}

TEST_CASE("rasterization matches brute-force hull membership on 100 landmark sets") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(3, 12);
  int checked = 0;
  while (checked < 100) {
    // Coordinates reach past the 40×48 image to exercise clipping. Pixel
    // centers sit on half-integers, so boundary hits are exact.
    auto pts = random_integer_landmarks(rng, -8, 52, count(rng));
    if (collinear(pts)) continue;
    const auto mask = convex_hull_mask(pts, 40, 48);
    std::int64_t mismatches = 0;
    for (std::int64_t r = 0; r < 40; ++r) {
      for (std::int64_t c = 0; c < 48; ++c) {
        const bool want = in_hull_brute_force(pts, {c + 0.5, r + 0.5});
        mismatches += (mask.at(r, c) == 1) != want;
      }
    }
    CHECK(mismatches == 0);
    ++checked;
  }
}

TEST_CASE("boundary pixel centers are included") {
  // Edge x = 2.5 passes through the centers of column 2.
  const std::vector<Point> rect{{2.5, 0}, {6.5, 0}, {6.5, 4}, {2.5, 4}};
  const auto mask = rasterize_hull(convex_hull(rect), 4, 8);
  for (std::int64_t r = 0; r < 4; ++r) {
    CHECK(mask.at(r, 1) == 0);
    CHECK(mask.at(r, 2) == 1);
    CHECK(mask.at(r, 6) == 1);
    CHECK(mask.at(r, 7) == 0);
  }
}

TEST_CASE("scanline fill agrees with the point predicate for real-valued landmarks") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(-4.0, 36.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point> pts(8);
    for (auto& p : pts) p = {coord(rng), coord(rng)};
    const auto hull = convex_hull(pts);
    const auto mask = rasterize_hull(hull, 32, 32);
    for (std::int64_t r = 0; r < 32; ++r) {
      for (std::int64_t c = 0; c < 32; ++c) {
        REQUIRE(mask.at(r, c) == (inside_convex_polygon(hull, c + 0.5, r + 0.5) ? 1 : 0));
      }
    }
  }
}

TEST_CASE("adding a landmark never shrinks the mask") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> coord(0, 40);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = random_integer_landmarks(rng, 0, 40, 5);
    if (collinear(pts)) continue;
    const auto before = convex_hull_mask(pts, 40, 40);
    pts.push_back({double(coord(rng)), double(coord(rng))});
    const auto after = convex_hull_mask(pts, 40, 40);
    for (std::size_t i = 0; i < before.values.size(); ++i) {
      CHECK(after.values[i] >= before.values[i]);
    }
  }
}

TEST_CASE("mask area is at least the area of any landmark triangle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto pts = random_integer_landmarks(rng, 0, 63, 7);
    if (collinear(pts)) continue;
    const auto mask = convex_hull_mask(pts, 64, 64);
    const auto hull = convex_hull(pts);
    double hull_area = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const auto& a = hull[i];
      const auto& b = hull[(i + 1) % hull.size()];
      hull_area += a.x * b.y - b.x * a.y;
    }
    hull_area /= 2.0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
      for (std::size_t b = a + 1; b < pts.size(); ++b) {
        for (std::size_t c = b + 1; c < pts.size(); ++c) {
          const std::vector<Point> tri{pts[a], pts[b], pts[c]};
          const double tri_area = std::abs(orient(tri[0], tri[1], tri[2])) / 2.0;
          CHECK(hull_area >= tri_area);
          if (tri_area == 0) continue;
          CHECK(mask.count() >= convex_hull_mask(tri, 64, 64).count());
        }
      }
    }
  }
}
