#include "recallforge/synth.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "recallforge/rng.hpp"

namespace recallforge {

namespace {

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * (1.0 / 9007199254740992.0);
}

double normal01(std::mt19937_64& gen) {
  const double u1 = std::max(uniform01(gen), 1e-300);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Quadrilateral inscribed in a rotated ellipse: four boundary angles in
// increasing order with gaps strictly inside (0, pi), which makes the ring
// convex and counter-clockwise by construction.
std::vector<Point> random_quad(std::mt19937_64& gen, double cx, double cy) {
  const double radius = std::exp(0.5 * normal01(gen));
  const double a = radius;
  const double b = radius * (0.4 + 0.6 * uniform01(gen));
  const double phi = 2.0 * M_PI * uniform01(gen);
  const double cph = std::cos(phi), sph = std::sin(phi);
  std::vector<Point> ring(4);
  for (int i = 0; i < 4; ++i) {
    const double psi = i * (M_PI / 2.0) + (uniform01(gen) - 0.5) * 0.7;
    const double ex = a * std::cos(psi);
    const double ey = b * std::sin(psi);
    ring[i] = {cx + ex * cph - ey * sph, cy + ex * sph + ey * cph};
  }
  return ring;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg, const MatchPredicateConfig& predicate) {
  if (cfg.n_source < 1 || cfg.n_target < 1) {
    throw std::invalid_argument("generate: counts must be >= 1");
  }
  if (!(cfg.match_fraction >= 0.0 && cfg.match_fraction <= 1.0)) {
    throw std::invalid_argument("generate: match_fraction out of [0,1]");
  }
  if (!(cfg.world_extent > 0.0)) throw std::invalid_argument("generate: world_extent must be > 0");

  std::mt19937_64 gen(cfg.seed);
  SynthDataset ds;
  ds.sources.reserve(cfg.n_source);
  for (std::size_t i = 0; i < cfg.n_source; ++i) {
    const double cx = uniform01(gen) * cfg.world_extent;
    const double cy = uniform01(gen) * cfg.world_extent;
    ds.sources.push_back(Geometry{i, random_quad(gen, cx, cy)});
  }

  const std::size_t n_matched = static_cast<std::size_t>(
      std::llround(cfg.match_fraction * static_cast<double>(cfg.n_target)));
  ds.targets.reserve(cfg.n_target);
  for (std::size_t i = 0; i < cfg.n_target; ++i) {
    if (i < n_matched) {
      const std::size_t src = bounded_draw(gen, cfg.n_source);
      const double scale = std::exp(cfg.scale_sd * normal01(gen));
      const double dx = cfg.jitter_sd * normal01(gen);
      const double dy = cfg.jitter_sd * normal01(gen);
      const Point c = ring_centroid(ds.sources[src].ring);
      std::vector<Point> ring = ds.sources[src].ring;
      for (Point& p : ring) {
        p.x = c.x + scale * (p.x - c.x) + dx;
        p.y = c.y + scale * (p.y - c.y) + dy;
      }
      ds.targets.push_back(Geometry{i, std::move(ring)});
      if (is_match(ds.sources[src], ds.targets.back(), predicate)) {
        ds.ground_truth.emplace_back(src, i);
      }
    } else {
      const double cx = uniform01(gen) * cfg.world_extent;
      const double cy = uniform01(gen) * cfg.world_extent;
      ds.targets.push_back(Geometry{i, random_quad(gen, cx, cy)});
    }
  }
  return ds;
}

}  // namespace recallforge
