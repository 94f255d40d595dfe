#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace recallforge {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// A polygon with an id and a single outer ring (open form: first vertex not
/// repeated at the end). Rings need at least 3 vertices, all finite.
struct Geometry {
  std::uint64_t id = 0;
  std::vector<Point> ring;
};

/// Axis-aligned minimum bounding rectangle, closed on all edges.
struct Mbr {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  double area() const { return width() * height(); }
  double diagonal() const { return std::hypot(width(), height()); }
  Point center() const { return {(min_x + max_x) * 0.5, (min_y + max_y) * 0.5}; }

  bool intersects(const Mbr& o) const {
    // Closed intervals: rectangles that merely touch still count.
    return !(max_x < o.min_x || o.max_x < min_x || max_y < o.min_y || o.max_y < min_y);
  }

  double intersection_area(const Mbr& o) const {
    const double w = std::min(max_x, o.max_x) - std::max(min_x, o.min_x);
    const double h = std::min(max_y, o.max_y) - std::max(min_y, o.min_y);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
  }
};

/// Uniform grid: cell (i, j) covers [origin + i*theta, origin + (i+1)*theta).
struct GridSpec {
  double theta_x = 1.0;
  double theta_y = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  std::int64_t cell_x(double x) const {
    return static_cast<std::int64_t>(std::floor((x - origin_x) / theta_x));
  }
  std::int64_t cell_y(double y) const {
    return static_cast<std::int64_t>(std::floor((y - origin_y) / theta_y));
  }
};

Mbr compute_mbr(const Geometry& g);

/// Grid whose cell extents are the mean MBR width/height of `geoms` and whose
/// origin is the global minimum corner. Zero mean extents fall back to 1.0
/// with a warning so downstream division stays defined.
GridSpec mean_cell_extents(const std::vector<Geometry>& geoms);

// Ring measures. Sums run over the ring rotated to start at its
// lexicographically smallest vertex, so any rotation of the same ring
// produces bit-identical values.
double ring_area(const std::vector<Point>& ring);       // unsigned shoelace area
double ring_perimeter(const std::vector<Point>& ring);
Point ring_centroid(const std::vector<Point>& ring);    // vertex mean if area ~ 0
bool ring_is_convex(const std::vector<Point>& ring);

void validate_geometry(const Geometry& g);

}  // namespace recallforge
