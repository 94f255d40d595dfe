#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "recallforge/geometry.hpp"
#include "recallforge/oracle.hpp"
#include "recallforge/synth.hpp"

using namespace recallforge;

namespace {

Geometry rect(std::uint64_t id, double x0, double y0, double x1, double y1) {
  Geometry g;
  g.id = id;
  g.ring = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  return g;
}

std::vector<Point> square(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

double area_of(const std::vector<Point>& ring) {
  if (ring.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % ring.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return std::abs(0.5 * acc);
}

// Random convex polygon: a regular k-gon, scaled per axis and shifted.
Geometry random_convex(std::uint64_t id, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> shift(-4.0, 4.0);
  std::uniform_real_distribution<double> scale(0.3, 2.5);
  std::uniform_int_distribution<int> sides(3, 8);
  const int k = sides(gen);
  const double sx = scale(gen), sy = scale(gen);
  const double cx = shift(gen), cy = shift(gen);
  Geometry g;
  g.id = id;
  for (int i = 0; i < k; ++i) {
    const double a = 2.0 * 3.14159265358979323846 * i / k;
    g.ring.push_back({cx + sx * std::cos(a), cy + sy * std::sin(a)});
  }
  return g;
}

bool rings_equal_bits(const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("convex clipping against hand-checked regions") {
  const auto unit = square(0, 0, 1, 1);

  // Offset squares overlap in a quarter square.
  CHECK(area_of(clip_convex(unit, square(0.5, 0.5, 1.5, 1.5))) ==
        doctest::Approx(0.25).epsilon(1e-14));
  // Identical rings reproduce the full area.
  CHECK(area_of(clip_convex(unit, unit)) == doctest::Approx(1.0).epsilon(1e-14));
  // Disjoint rings clip to nothing.
  CHECK(area_of(clip_convex(unit, square(5, 5, 6, 6))) == 0.0);
  // Subject nested in clip survives whole; clip nested in subject bounds it.
  const auto big = square(-10, -10, 10, 10);
  CHECK(area_of(clip_convex(unit, big)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(area_of(clip_convex(big, unit)) == doctest::Approx(1.0).epsilon(1e-14));
  // Triangle inside a square keeps its own area.
  const std::vector<Point> tri = {{0, 0}, {2, 0}, {0, 2}};
  CHECK(area_of(clip_convex(square(0, 0, 2, 2), tri)) == doctest::Approx(2.0).epsilon(1e-14));

  // Clockwise clip rings are normalized before use.
  auto cw = square(0.5, 0.5, 1.5, 1.5);
  std::reverse(cw.begin(), cw.end());
  CHECK(area_of(clip_convex(unit, cw)) == doctest::Approx(0.25).epsilon(1e-14));

  // Swapping the roles preserves the intersection area.
  const auto off = square(0.25, -0.25, 2.0, 0.75);
  CHECK(area_of(clip_convex(unit, off)) ==
        doctest::Approx(area_of(clip_convex(off, unit))).epsilon(1e-12));

  CHECK(clip_convex({{0, 0}, {1, 1}}, unit).empty());
  CHECK(clip_convex(unit, {{0, 0}, {1, 1}}).empty());
}

TEST_CASE("overlap predicate thresholds on the smaller-area ratio") {
  MatchPredicateConfig cfg;  // polygon mode, min_overlap 0.5
  const Geometry a = rect(1, 0, 0, 1, 1);
  const Geometry half = rect(2, 0.5, 0, 1.5, 1);
  CHECK(is_match(a, half, cfg));  // ratio is exactly the threshold
  cfg.min_overlap = 0.50001;
  CHECK_FALSE(is_match(a, half, cfg));

  cfg.min_overlap = 1.0;
  CHECK(is_match(a, rect(3, 0, 0, 1, 1), cfg));  // identical rings, ratio 1
  cfg.min_overlap = 0.5;
  CHECK_FALSE(is_match(a, rect(4, 7, 7, 8, 8), cfg));  // disjoint

  // Degenerate zero-area ring can never match.
  Geometry flat;
  flat.id = 5;
  flat.ring = {{0, 0}, {1, 0}, {2, 0}};
  CHECK_FALSE(is_match(a, flat, cfg));

  CHECK_THROWS_AS(is_match(a, half, MatchPredicateConfig{PredicateMode::PolygonOverlapRatio, 0.0}),
                  std::domain_error);
  CHECK_THROWS_AS(is_match(a, half, MatchPredicateConfig{PredicateMode::PolygonOverlapRatio, 1.5}),
                  std::domain_error);
}

TEST_CASE("polygon mode and MBR mode disagree where they should") {
  // Diamond |x-1| + |y-1| <= 1 against a unit square in its corner: the MBR
  // overlap is 0.64 of the square but the true polygon overlap is 0.18.
  Geometry diamond;
  diamond.id = 1;
  diamond.ring = {{1, 0}, {2, 1}, {1, 2}, {0, 1}};
  const Geometry corner = rect(2, 1.2, 1.2, 2.2, 2.2);

  MatchPredicateConfig poly{PredicateMode::PolygonOverlapRatio, 0.5};
  MatchPredicateConfig mbr{PredicateMode::MbrOverlapRatio, 0.5};
  CHECK_FALSE(is_match(diamond, corner, poly));
  CHECK(is_match(diamond, corner, mbr));

  // Pin the two ratios themselves.
  CHECK(area_of(clip_convex(diamond.ring, corner.ring)) ==
        doctest::Approx(0.18).epsilon(1e-12));
  const Mbr dm = compute_mbr(diamond);
  const Mbr cm = compute_mbr(corner);
  CHECK(dm.intersection_area(cm) / cm.area() == doctest::Approx(0.64).epsilon(1e-12));
}

TEST_CASE("non-convex rings fall back to the MBR ratio") {
  Geometry ell;
  ell.id = 1;
  ell.ring = {{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
  const Geometry probe = rect(2, 0.5, 0.5, 2.5, 2.5);
  const MatchPredicateConfig poly{PredicateMode::PolygonOverlapRatio, 0.5};
  const MatchPredicateConfig mbr{PredicateMode::MbrOverlapRatio, 0.5};
  CHECK(is_match(ell, probe, poly) == is_match(ell, probe, mbr));
}

TEST_CASE("the predicate is symmetric in its arguments") {
  std::mt19937_64 gen(404);
  const MatchPredicateConfig cfgs[] = {
      {PredicateMode::PolygonOverlapRatio, 0.3},
      {PredicateMode::PolygonOverlapRatio, 0.5},
      {PredicateMode::PolygonOverlapRatio, 0.9},
      {PredicateMode::MbrOverlapRatio, 0.5},
  };
  for (int it = 0; it < 200; ++it) {
    const Geometry s = random_convex(1, gen);
    const Geometry t = random_convex(2, gen);
    for (const MatchPredicateConfig& cfg : cfgs) {
      CHECK(is_match(s, t, cfg) == is_match(t, s, cfg));
    }
  }
}

TEST_CASE("recall evaluation over labeled scores") {
  const std::vector<double> scores = {0.9, 0.8, 0.3, 0.2, 0.7};
  const std::vector<std::uint8_t> labels = {1, 1, 0, 1, 0};
  CHECK(evaluate_recall(scores, labels, 0.75) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(evaluate_recall(scores, labels, 0.8) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(evaluate_recall(scores, labels, 0.0) == 1.0);
  CHECK(evaluate_recall(scores, labels, 0.95) == 0.0);

  CHECK_THROWS_AS(evaluate_recall({0.5}, {1, 0}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_recall(scores, {0, 0, 0, 0, 0}, 0.1), std::invalid_argument);
}

TEST_CASE("budgeted verification reviews everything and reports honestly") {
  const std::vector<Geometry> sources = {rect(10, 0, 0, 1, 1), rect(11, 5, 5, 6, 6),
                                         rect(12, 9, 9, 10, 10)};
  const std::vector<Geometry> targets = {rect(20, 0, 0, 1, 1), rect(21, 5.5, 5, 6.5, 6),
                                         rect(22, 40, 40, 41, 41), rect(23, 9, 9, 10, 10)};
  PairSet truth;
  truth.insert({10, 20});
  truth.insert({11, 21});
  const MatchPredicateConfig cfg;  // polygon overlap >= 0.5

  const std::vector<IdPair> pairs = {{10, 20}, {11, 21}, {10, 22}, {12, 23}};
  CostCounters counters;
  const VerificationOutcome out =
      verify_with_budget(pairs, sources, targets, truth, cfg, 10, &counters);
  CHECK(out.reviewed_count == 4);
  CHECK(counters.c_geom == 4);
  CHECK(out.budget == 10);
  CHECK_FALSE(out.overrun);
  // (12, 23) passes the oracle but is not ground truth; recall ignores it.
  CHECK(out.retained_pairs == std::vector<IdPair>{{10, 20}, {11, 21}, {12, 23}});
  CHECK(out.achieved_recall == 1.0);

  // A tight budget does not stop the review, it only flags the overrun.
  const VerificationOutcome tight =
      verify_with_budget(pairs, sources, targets, truth, cfg, 2, nullptr);
  CHECK(tight.reviewed_count == 4);
  CHECK(tight.overrun);
  CHECK(tight.retained_pairs.size() == 3);

  // Dropping one truth pair from the retained set halves the recall.
  const std::vector<IdPair> partial = {{10, 20}, {10, 22}};
  const VerificationOutcome half =
      verify_with_budget(partial, sources, targets, truth, cfg, 10, nullptr);
  CHECK(half.achieved_recall == 0.5);

  // Empty ground truth pins recall to zero rather than dividing by zero.
  const VerificationOutcome none =
      verify_with_budget(pairs, sources, targets, PairSet{}, cfg, 10, nullptr);
  CHECK(none.achieved_recall == 0.0);

  CHECK_THROWS_AS(verify_with_budget({{99, 20}}, sources, targets, truth, cfg, 10, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(verify_with_budget({{10, 99}}, sources, targets, truth, cfg, 10, nullptr),
                  std::invalid_argument);
}

TEST_CASE("synthetic datasets are deterministic in the seed") {
  SynthConfig cfg;
  cfg.n_source = 120;
  cfg.n_target = 480;
  cfg.match_fraction = 0.25;
  const MatchPredicateConfig pred;

  const SynthDataset a = generate(cfg, pred);
  const SynthDataset b = generate(cfg, pred);
  REQUIRE(a.sources.size() == 120);
  REQUIRE(a.targets.size() == 480);
  REQUIRE(b.sources.size() == a.sources.size());
  for (std::size_t i = 0; i < a.sources.size(); ++i) {
    CHECK(a.sources[i].id == i);
    CHECK(rings_equal_bits(a.sources[i].ring, b.sources[i].ring));
  }
  for (std::size_t i = 0; i < a.targets.size(); ++i) {
    CHECK(a.targets[i].id == i);
    CHECK(rings_equal_bits(a.targets[i].ring, b.targets[i].ring));
  }
  CHECK(a.ground_truth == b.ground_truth);

  SynthConfig other = cfg;
  other.seed = cfg.seed + 1;
  const SynthDataset c = generate(other, pred);
  CHECK_FALSE(rings_equal_bits(a.sources[0].ring, c.sources[0].ring));
}

TEST_CASE("ground truth matches the generator controls") {
  MatchPredicateConfig pred;
  SynthConfig cfg;
  cfg.n_source = 100;
  cfg.n_target = 400;

  // No seeded copies, no truth.
  cfg.match_fraction = 0.0;
  CHECK(generate(cfg, pred).ground_truth.empty());

  // Noise-free copies always pass the predicate: exactly round(mf * n) pairs.
  cfg.match_fraction = 0.25;
  cfg.jitter_sd = 0.0;
  cfg.scale_sd = 0.0;
  const SynthDataset clean = generate(cfg, pred);
  CHECK(clean.ground_truth.size() == 100);

  // With noise the seeded prefix is an upper bound.
  cfg.jitter_sd = 0.3;
  cfg.scale_sd = 0.2;
  const SynthDataset noisy = generate(cfg, pred);
  CHECK(noisy.ground_truth.size() <= 100);

  // Every truth pair must satisfy the oracle it was generated under, and
  // truth target ids stay inside the seeded prefix.
  for (const auto& [sid, tid] : noisy.ground_truth) {
    REQUIRE(sid < noisy.sources.size());
    REQUIRE(tid < 100);
    CHECK(is_match(noisy.sources[sid], noisy.targets[tid], pred));
  }

  SynthConfig bad = cfg;
  bad.n_source = 0;
  CHECK_THROWS_AS(generate(bad, pred), std::invalid_argument);
  bad = cfg;
  bad.match_fraction = 1.5;
  CHECK_THROWS_AS(generate(bad, pred), std::invalid_argument);
  bad = cfg;
  bad.world_extent = 0.0;
  CHECK_THROWS_AS(generate(bad, pred), std::invalid_argument);
}
