#include "recallforge/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "recallforge/common.hpp"

namespace recallforge {

void validate_geometry(const Geometry& g) {
  if (g.ring.size() < 3) {
    throw std::invalid_argument("invalid geometry: ring needs at least 3 vertices (id " +
                                std::to_string(g.id) + ")");
  }
  for (const Point& p : g.ring) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("invalid geometry: non-finite coordinate (id " +
                                  std::to_string(g.id) + ")");
    }
  }
}

Mbr compute_mbr(const Geometry& g) {
  if (g.ring.empty()) throw std::invalid_argument("invalid geometry: empty ring");
  Mbr m{g.ring[0].x, g.ring[0].y, g.ring[0].x, g.ring[0].y};
  for (const Point& p : g.ring) {
    m.min_x = std::min(m.min_x, p.x);
    m.min_y = std::min(m.min_y, p.y);
    m.max_x = std::max(m.max_x, p.x);
    m.max_y = std::max(m.max_y, p.y);
  }
  return m;
}

GridSpec mean_cell_extents(const std::vector<Geometry>& geoms) {
  if (geoms.empty()) throw std::invalid_argument("mean_cell_extents: empty geometry list");
  double sum_w = 0.0, sum_h = 0.0;
  double org_x = std::numeric_limits<double>::infinity();
  double org_y = std::numeric_limits<double>::infinity();
  for (const Geometry& g : geoms) {
    const Mbr m = compute_mbr(g);
    sum_w += m.width();
    sum_h += m.height();
    org_x = std::min(org_x, m.min_x);
    org_y = std::min(org_y, m.min_y);
  }
  GridSpec grid;
  grid.theta_x = sum_w / static_cast<double>(geoms.size());
  grid.theta_y = sum_h / static_cast<double>(geoms.size());
  grid.origin_x = org_x;
  grid.origin_y = org_y;
  if (grid.theta_x <= 0.0) {
    RF_WARN_ONCE("degenerate grid: mean MBR width is 0, falling back to theta_x = 1");
    grid.theta_x = 1.0;
  }
  if (grid.theta_y <= 0.0) {
    RF_WARN_ONCE("degenerate grid: mean MBR height is 0, falling back to theta_y = 1");
    grid.theta_y = 1.0;
  }
  return grid;
}

namespace {

// Index of the lexicographically smallest vertex, the canonical ring start.
std::size_t canonical_start(const std::vector<Point>& ring) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < ring.size(); ++i) {
    if (ring[i].x < ring[best].x ||
        (ring[i].x == ring[best].x && ring[i].y < ring[best].y)) {
      best = i;
    }
  }
  return best;
}

double signed_area_from(const std::vector<Point>& ring, std::size_t start) {
  const std::size_t n = ring.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Point& a = ring[(start + k) % n];
    const Point& b = ring[(start + k + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

}  // namespace

double ring_area(const std::vector<Point>& ring) {
  if (ring.size() < 3) return 0.0;
  return std::abs(signed_area_from(ring, canonical_start(ring)));
}

double ring_perimeter(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  if (n < 2) return 0.0;
  const std::size_t start = canonical_start(ring);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Point& a = ring[(start + k) % n];
    const Point& b = ring[(start + k + 1) % n];
    acc += std::hypot(b.x - a.x, b.y - a.y);
  }
  return acc;
}

Point ring_centroid(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  const std::size_t start = canonical_start(ring);
  const double a = signed_area_from(ring, start);
  if (std::abs(a) < 1e-300) {
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sx += ring[(start + k) % n].x;
      sy += ring[(start + k) % n].y;
    }
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
  }
  double cx = 0.0, cy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Point& p = ring[(start + k) % n];
    const Point& q = ring[(start + k + 1) % n];
    const double cross = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  const double inv = 1.0 / (6.0 * a);
  return {cx * inv, cy * inv};
}

bool ring_is_convex(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    const Point& c = ring[(i + 2) % n];
    const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (cross == 0.0) continue;  // collinear run is fine
    const int s = cross > 0.0 ? 1 : -1;
    if (sign == 0) {
      sign = s;
    } else if (s != sign) {
      return false;
    }
  }
  return true;
}

}  // namespace recallforge
