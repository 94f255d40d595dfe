#include "recallforge/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>

#include "recallforge/rng.hpp"
#include "recallforge/stats.hpp"
#include "recallforge/xxhash64.hpp"

namespace recallforge {

const char* rule_name(RuleKind rule) {
  switch (rule) {
    case RuleKind::ClopperPearson: return "clopper_pearson";
    case RuleKind::Jeffreys: return "jeffreys";
    case RuleKind::Wilson: return "wilson";
    case RuleKind::ExactQuantile: return "exact_quantile";
  }
  return "unknown";
}

CalibrationSample CalibrationSample::from_unsorted(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end(), std::greater<double>());
  return CalibrationSample{std::move(scores)};
}

double lower_bound(RuleKind rule, std::size_t k, std::size_t n, double alpha) {
  if (n < 1) throw std::domain_error("lower_bound: n must be >= 1");
  if (k > n) throw std::domain_error("lower_bound: k > n");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("lower_bound: alpha out of (0,1)");
  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  switch (rule) {
    case RuleKind::ClopperPearson:
      if (k == 0) return 0.0;
      return beta_inv_cdf(alpha, kd, nd - kd + 1.0);
    case RuleKind::Jeffreys:
      return beta_inv_cdf(alpha, kd + 0.5, nd - kd + 0.5);
    case RuleKind::Wilson: {
      const double z = normal_quantile(1.0 - alpha);
      const double r = kd / nd;
      const double z2 = z * z;
      const double radical = std::sqrt(r * (1.0 - r) / nd + z2 / (4.0 * nd * nd));
      return (r + z2 / (2.0 * nd) - z * radical) / (1.0 + z2 / nd);
    }
    case RuleKind::ExactQuantile:
      throw std::domain_error("lower_bound: ExactQuantile has no binomial bound");
  }
  throw std::domain_error("lower_bound: bad rule");
}

namespace {

// Ascending rank of the quantile rule, clamped to [1, n]. The epsilon guard
// keeps ranks exact when (1 - r_star) * n is an integer that floating-point
// arithmetic lands a hair above (e.g. 0.3 * 10 = 3.0000000000000004).
std::size_t quantile_rank_ascending(std::size_t n, double r_star) {
  const double raw = (1.0 - r_star) * static_cast<double>(n);
  double r = std::ceil(raw - 1e-9);
  if (r < 1.0) r = 1.0;
  if (r > static_cast<double>(n)) r = static_cast<double>(n);
  return static_cast<std::size_t>(r);
}

}  // namespace

double quantile_threshold(const std::vector<double>& positives_desc, double r_star) {
  const std::size_t n = positives_desc.size();
  if (n < 1) throw std::invalid_argument("quantile_threshold: empty sample");
  if (!(r_star > 0.0 && r_star < 1.0)) {
    throw std::domain_error("quantile_threshold: R* out of (0,1)");
  }
  const std::size_t rank = quantile_rank_ascending(n, r_star);
  return positives_desc[n - rank];
}

std::size_t find_min_rank(RuleKind rule, std::size_t n, double r_star, double alpha) {
  if (n < 1) throw std::domain_error("find_min_rank: n must be >= 1");
  if (lower_bound(rule, n, n, alpha) < r_star) return 0;
  std::size_t lo = 1, hi = n;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (lower_bound(rule, mid, n, alpha) >= r_star) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

ThresholdDecision threshold_for_target(RuleKind rule, const CalibrationSample& sample,
                                       double r_star, double alpha) {
  const std::size_t n = sample.n();
  if (n < 1) throw std::invalid_argument("threshold_for_target: empty sample");

  ThresholdDecision out;
  if (rule == RuleKind::ExactQuantile) {
    const std::size_t asc = quantile_rank_ascending(n, r_star);
    out.rank = n - asc + 1;
    out.tau = sample.positive_scores[out.rank - 1];
    return out;
  }
  const std::size_t k_star = find_min_rank(rule, n, r_star, alpha);
  if (k_star == 0) {
    out.rank = n;
    out.tau = sample.positive_scores[n - 1];
    out.attainable = false;
    return out;
  }
  out.rank = k_star;
  out.tau = sample.positive_scores[k_star - 1];
  return out;
}

ThresholdEstimate bootstrap_thresholds(const CalibrationSample& sample, RuleKind rule,
                                       double r_star, double alpha, std::size_t b,
                                       std::uint64_t seed) {
  const std::size_t n = sample.n();
  if (n < 2) throw std::invalid_argument("bootstrap_thresholds: need n >= 2");
  if (b < 2) throw std::invalid_argument("bootstrap_thresholds: need B >= 2");

  // The selected rank depends only on (rule, n, alpha, R*), never on the
  // scores, so every size-n resample reuses one rank computed up front.
  std::size_t k_top;
  if (rule == RuleKind::ExactQuantile) {
    k_top = n - quantile_rank_ascending(n, r_star) + 1;
  } else {
    const std::size_t k_star = find_min_rank(rule, n, r_star, alpha);
    k_top = k_star == 0 ? n : k_star;
  }

  ThresholdEstimate est;
  est.rule = rule;
  est.samples.resize(b);
  std::mt19937_64 gen(seed);
  std::vector<double> resample(n);
  for (std::size_t rep = 0; rep < b; ++rep) {
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = sample.positive_scores[bounded_draw(gen, n)];
    }
    // tau = k_top-th largest: descending nth_element around index k_top - 1.
    std::nth_element(resample.begin(), resample.begin() + (k_top - 1), resample.end(),
                     std::greater<double>());
    est.samples[rep] = resample[k_top - 1];
  }
  const double bd = static_cast<double>(b);
  est.mean = std::accumulate(est.samples.begin(), est.samples.end(), 0.0) / bd;
  double ss = 0.0;
  for (double v : est.samples) {
    const double d = v - est.mean;
    ss += d * d;
  }
  est.variance = ss / (bd - 1.0);
  return est;
}

double ivw_fuse(const std::vector<ThresholdEstimate>& estimates) {
  if (estimates.empty()) throw std::invalid_argument("ivw_fuse: no estimates");
  // A zero bootstrap variance means infinite weight; the limit of the
  // weighted mean is the plain mean over the zero-variance subset (equal
  // weights when all variances vanish).
  double zero_sum = 0.0;
  std::size_t zero_count = 0;
  for (const auto& e : estimates) {
    if (e.variance == 0.0) {
      zero_sum += e.mean;
      ++zero_count;
    }
  }
  if (zero_count > 0) return zero_sum / static_cast<double>(zero_count);
  double num = 0.0, den = 0.0;
  for (const auto& e : estimates) {
    const double w = 1.0 / e.variance;
    num += w * e.mean;
    den += w;
  }
  return num / den;
}

double ensemble_threshold(const std::vector<double>& subsample_taus, EnsembleMode mode) {
  if (subsample_taus.empty()) throw std::invalid_argument("ensemble_threshold: empty input");
  if (mode == EnsembleMode::Min) {
    return *std::min_element(subsample_taus.begin(), subsample_taus.end());
  }
  std::vector<double> sorted = subsample_taus;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  if (k % 2 == 1) return sorted[k / 2];
  return 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
}

std::pair<double, double> student_t_ci(const std::vector<double>& subsample_taus, double center,
                                       double level) {
  const std::size_t k = subsample_taus.size();
  if (k < 2) throw std::invalid_argument("student_t_ci: need K >= 2");
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("student_t_ci: level out of (0,1)");
  double ss = 0.0;
  for (double v : subsample_taus) {
    const double d = v - center;
    ss += d * d;
  }
  const double kd = static_cast<double>(k);
  const double spread = std::sqrt(ss / (kd * (kd - 1.0)));
  const double t = student_t_quantile(1.0 - (1.0 - level) / 2.0, kd - 1.0);
  return {center - t * spread, center + t * spread};
}

EnsembleResult calibrate_ensemble(const std::vector<CalibrationSample>& subsamples, double r_star,
                                  double alpha, std::size_t b, std::uint64_t seed,
                                  EnsembleMode mode) {
  if (subsamples.empty()) throw std::invalid_argument("calibrate_ensemble: no subsamples");
  static constexpr RuleKind kRules[] = {RuleKind::ClopperPearson, RuleKind::Jeffreys,
                                        RuleKind::Wilson, RuleKind::ExactQuantile};
  EnsembleResult out;
  out.alpha = alpha;
  out.target = r_star;
  out.per_subsample.reserve(subsamples.size());
  for (std::size_t si = 0; si < subsamples.size(); ++si) {
    const CalibrationSample& sub = subsamples[si];
    std::vector<ThresholdEstimate> ests;
    ests.reserve(4);
    for (RuleKind rule : kRules) {
      if (rule != RuleKind::ExactQuantile &&
          !threshold_for_target(rule, sub, r_star, alpha).attainable) {
        out.attainable = false;
      }
      const std::uint64_t rule_seed =
          derive_seed(seed, static_cast<std::uint64_t>(rule), static_cast<std::uint64_t>(si));
      ests.push_back(bootstrap_thresholds(sub, rule, r_star, alpha, b, rule_seed));
    }
    out.per_subsample.push_back(ivw_fuse(ests));
  }
  out.final_tau = ensemble_threshold(out.per_subsample, mode);
  if (out.per_subsample.size() >= 2) {
    const auto ci = student_t_ci(out.per_subsample, out.final_tau);
    out.ci_low = ci.first;
    out.ci_high = ci.second;
  } else {
    out.ci_low = out.final_tau;
    out.ci_high = out.final_tau;
  }
  return out;
}

}  // namespace recallforge
