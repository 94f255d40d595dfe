#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace recallforge {

enum class RuleKind : int { ClopperPearson = 0, Jeffreys = 1, Wilson = 2, ExactQuantile = 3 };

const char* rule_name(RuleKind rule);

enum class EnsembleMode : int { Min = 0, Median = 1 };

// Labeled-positive scores for one calibration (sub)sample, kept sorted
// descending so rank k maps to the k-th highest score.
struct CalibrationSample {
  std::vector<double> positive_scores;

  std::size_t n() const { return positive_scores.size(); }
  static CalibrationSample from_unsorted(std::vector<double> scores);
};

struct ThresholdDecision {
  double tau = 0.0;
  std::size_t rank = 0;  // rank from the top (1-based) whose score became tau
  bool attainable = true;
};

struct ThresholdEstimate {
  RuleKind rule = RuleKind::ClopperPearson;
  double mean = 0.0;
  double variance = 0.0;
  std::vector<double> samples;
};

struct EnsembleResult {
  std::vector<double> per_subsample;
  double final_tau = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.0;
  double target = 0.0;
  bool attainable = true;
};

// One-sided lower confidence bound on recall after keeping the top k of n
// labeled positives. Rules: Clopper-Pearson, Jeffreys, Wilson score.
double lower_bound(RuleKind rule, std::size_t k, std::size_t n, double alpha);

// The ceil((1 - R*) * n)-th smallest positive score, rank clamped to >= 1.
double quantile_threshold(const std::vector<double>& positives_desc, double r_star);

// Smallest rank k in [1, n] with lower_bound(rule, k, n, alpha) >= r_star,
// or 0 when even k = n falls short. The bound is non-decreasing in k, so a
// binary search finds the first crossing.
std::size_t find_min_rank(RuleKind rule, std::size_t n, double r_star, double alpha);

ThresholdDecision threshold_for_target(RuleKind rule, const CalibrationSample& sample,
                                       double r_star, double alpha);

ThresholdEstimate bootstrap_thresholds(const CalibrationSample& sample, RuleKind rule,
                                       double r_star, double alpha, std::size_t b,
                                       std::uint64_t seed);

// Inverse-variance weighted mean of the rule means. Estimates with zero
// bootstrap variance get the exact limiting weight: if any variance is zero
// the result is the plain mean over the zero-variance subset.
double ivw_fuse(const std::vector<ThresholdEstimate>& estimates);

double ensemble_threshold(const std::vector<double>& subsample_taus, EnsembleMode mode);

// Symmetric interval about `center` using deviations measured from the
// center itself rather than the sample mean.
std::pair<double, double> student_t_ci(const std::vector<double>& subsample_taus, double center,
                                       double level = 0.90);

// Full stage: per subsample bootstrap all four rules and fuse, then collapse
// across subsamples and attach the confidence interval.
EnsembleResult calibrate_ensemble(const std::vector<CalibrationSample>& subsamples, double r_star,
                                  double alpha, std::size_t b, std::uint64_t seed,
                                  EnsembleMode mode);

}  // namespace recallforge
