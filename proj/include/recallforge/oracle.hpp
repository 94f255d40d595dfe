#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_set>
#include <utility>
#include <vector>

#include "recallforge/geometry.hpp"

namespace recallforge {

enum class PredicateMode : int { MbrOverlapRatio = 0, PolygonOverlapRatio = 1 };

struct MatchPredicateConfig {
  PredicateMode mode = PredicateMode::PolygonOverlapRatio;
  double min_overlap = 0.5;
};

struct CostCounters {
  std::uint64_t c_geom = 0;
  std::uint64_t c_feat = 0;
};

using IdPair = std::pair<std::uint64_t, std::uint64_t>;

struct IdPairHash {
  std::size_t operator()(const IdPair& p) const;
};

using PairSet = std::unordered_set<IdPair, IdPairHash>;

struct VerificationOutcome {
  std::size_t reviewed_count = 0;
  std::vector<IdPair> retained_pairs;
  double achieved_recall = 0.0;
  std::size_t budget = 0;
  bool overrun = false;
};

// Sutherland-Hodgman: subject clipped against a convex clip ring. Returns the
// (possibly empty) intersection ring.
std::vector<Point> clip_convex(const std::vector<Point>& subject, const std::vector<Point>& clip);

// Overlap predicate: intersection area over the smaller area, compared to
// cfg.min_overlap. Polygon mode clips exactly for convex rings and falls back
// to the MBR ratio (with a warning) when either ring is non-convex.
bool is_match(const Geometry& s, const Geometry& t, const MatchPredicateConfig& cfg);

// Fraction of positive-labeled entries with score >= tau.
double evaluate_recall(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                       double tau);

// Runs the oracle over every retained pair, counting each call against the
// review budget, and measures recall against the full ground-truth set.
VerificationOutcome verify_with_budget(const std::vector<IdPair>& pairs_at_tau,
                                       const std::vector<Geometry>& sources,
                                       const std::vector<Geometry>& targets,
                                       const PairSet& ground_truth,
                                       const MatchPredicateConfig& cfg, std::size_t budget,
                                       CostCounters* counters);

}  // namespace recallforge
