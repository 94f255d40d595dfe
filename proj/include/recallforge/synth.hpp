#pragma once

#include <cstdint>
#include <vector>

#include "recallforge/geometry.hpp"
#include "recallforge/oracle.hpp"

namespace recallforge {

struct SynthConfig {
  std::size_t n_source = 5000;
  std::size_t n_target = 20000;
  double match_fraction = 0.3;  // fraction of targets that perturb a source
  double jitter_sd = 0.2;      // translation noise
  double scale_sd = 0.15;      // multiplicative size noise
  double world_extent = 70.0;
  std::uint64_t seed = 2025;
};

struct SynthDataset {
  std::vector<Geometry> sources;
  std::vector<Geometry> targets;
  std::vector<IdPair> ground_truth;
};

// Convex quadrilaterals with log-normal sizes, placed uniformly in the
// world square. The first round(match_fraction * n_target) targets are
// scaled-and-jittered copies of random sources; a seeded pair enters the
// ground truth only if it passes the oracle predicate, so labels and
// predicate can never disagree. Fully determined by cfg.seed.
SynthDataset generate(const SynthConfig& cfg, const MatchPredicateConfig& predicate);

}  // namespace recallforge
