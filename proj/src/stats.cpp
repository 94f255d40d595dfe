#include "recallforge/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace recallforge {

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// Continued fraction for I_x(a,b) by the modified Lentz method. Converges
// quickly when x < (a+1)/(a+b+2); the caller flips to the symmetric case
// otherwise.
double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 400;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: a, b must be > 0");
  if (x < 0.0 || x > 1.0 || std::isnan(x)) throw std::domain_error("reg_inc_beta: x out of [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  const double lbt = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  const double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * beta_cont_frac(a, b, x) / a;
  }
  return 1.0 - bt * beta_cont_frac(b, a, 1.0 - x) / b;
}

double beta_inv_cdf(double alpha, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("beta_inv_cdf: a, b must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::domain_error("beta_inv_cdf: alpha must lie in (0, 1)");
  }

  constexpr double kTol = 1e-15;
  constexpr int kMaxIter = 200;
  double lo = 0.0, hi = 1.0;
  double x = a / (a + b);  // mean as the starting point
  double best_x = x;
  double best_f = 2.0;

  for (int it = 0; it < kMaxIter; ++it) {
    const double f = reg_inc_beta(a, b, x) - alpha;
    if (std::abs(f) < best_f) {
      best_f = std::abs(f);
      best_x = x;
    }
    if (std::abs(f) <= kTol) return x;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    // Steep quantiles can move the CDF by more than kTol between adjacent
    // doubles; once the bracket is one ulp wide no better x exists.
    if (std::nextafter(lo, 1.0) >= hi) return best_x;
    // Newton step with the beta density; fall back to bisection whenever the
    // step escapes the bracket or the density underflows.
    const double lpdf = (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b);
    double next = 0.0;
    bool ok = false;
    if (lpdf > -700.0) {
      const double pdf = std::exp(lpdf);
      if (pdf > 0.0 && std::isfinite(pdf)) {
        next = x - f / pdf;
        ok = next > lo && next < hi;
      }
    }
    x = ok ? next : 0.5 * (lo + hi);
  }
  return best_x;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");

  // Acklam's rational approximation, then two Halley refinements against the
  // exact CDF via erfc. Final accuracy is near machine precision.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
  }
  return x;
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("student_t_quantile: p must lie in (0, 1)");
  if (!(dof > 0.0)) throw std::domain_error("student_t_quantile: dof must be > 0");
  if (p == 0.5) return 0.0;
  const double tail = p > 0.5 ? 1.0 - p : p;
  // P(|T| > t) = I_{dof/(dof+t^2)}(dof/2, 1/2) = 2 * tail
  const double x = beta_inv_cdf(2.0 * tail, dof / 2.0, 0.5);
  const double t = std::sqrt(dof * (1.0 - x) / x);
  return p > 0.5 ? t : -t;
}

}  // namespace recallforge
