#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "recallforge/stats.hpp"

using namespace recallforge;

namespace {

double log_beta_ref(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Adaptive Simpson quadrature of the Beta(a, b) density over [0, x].
// Independent of the continued-fraction code under test; valid for a, b >= 1
// where the integrand has no endpoint singularity.
double beta_density(double a, double b, double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return std::exp((a - 1.0) * std::log(t) + (b - 1.0) * std::log1p(-t) - log_beta_ref(a, b));
}

double simpson(double lo, double hi, double flo, double fmid, double fhi) {
  return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
}

double adaptive(double a, double b, double lo, double hi, double flo, double fmid, double fhi,
                double whole, double tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lq = beta_density(a, b, 0.5 * (lo + mid));
  const double rq = beta_density(a, b, 0.5 * (mid + hi));
  const double left = simpson(lo, mid, flo, lq, fmid);
  const double right = simpson(mid, hi, fmid, rq, fhi);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive(a, b, lo, mid, flo, lq, fmid, left, tol * 0.5, depth - 1) +
         adaptive(a, b, mid, hi, fmid, rq, fhi, right, tol * 0.5, depth - 1);
}

double quad_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double flo = beta_density(a, b, 0.0);
  const double fmid = beta_density(a, b, 0.5 * x);
  const double fhi = beta_density(a, b, x);
  const double whole = simpson(0.0, x, flo, fmid, fhi);
  return adaptive(a, b, 0.0, x, flo, fmid, fhi, whole, 1e-13, 40);
}

// Student-t CDF for t >= 0 through the incomplete-beta identity, as an
// independent round-trip target for the quantile.
double t_cdf(double t, double dof) {
  const double x = dof / (dof + t * t);
  return 1.0 - 0.5 * reg_inc_beta(0.5 * dof, 0.5, x);
}

}  // namespace

TEST_CASE("reg_inc_beta closed forms") {
  for (const double x : {0.0, 0.3, 1.0}) {
    CHECK(reg_inc_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-13));
  }
  CHECK(reg_inc_beta(2.0, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-13));

  // I_x(a, 1) = x^a and I_x(1, b) = 1 - (1-x)^b.
  for (const double a : {0.5, 1.0, 2.0, 7.5, 40.0}) {
    for (const double x : {0.05, 0.3, 0.71, 0.98}) {
      CHECK(reg_inc_beta(a, 1.0, x) == doctest::Approx(std::pow(x, a)).epsilon(1e-12));
      CHECK(reg_inc_beta(1.0, a, x) ==
            doctest::Approx(1.0 - std::pow(1.0 - x, a)).epsilon(1e-12));
    }
  }

  // Arcsine law at a = b = 1/2.
  for (const double x : {0.1, 0.25, 0.5, 0.9}) {
    const double want = (2.0 / M_PI) * std::asin(std::sqrt(x));
    CHECK(reg_inc_beta(0.5, 0.5, x) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("reg_inc_beta agrees with adaptive quadrature") {
  CHECK(std::abs(reg_inc_beta(94.0, 7.0, 0.9) - 0.11715561543588432) < 1e-10);

  const double as[] = {1.0, 2.0, 3.5, 10.0, 94.0};
  const double bs[] = {1.0, 1.5, 7.0, 25.0};
  const double xs[] = {0.08, 0.35, 0.62, 0.9};
  for (const double a : as) {
    for (const double b : bs) {
      for (const double x : xs) {
        CHECK(std::abs(reg_inc_beta(a, b, x) - quad_inc_beta(a, b, x)) < 1e-10);
      }
    }
  }
}

TEST_CASE("reg_inc_beta symmetry and monotonicity") {
  const double as[] = {0.5, 1.3, 4.0, 22.0};
  for (const double a : as) {
    for (const double b : as) {
      double prev = -1.0;
      for (double x = 0.0; x <= 1.0; x += 0.05) {
        const double v = reg_inc_beta(a, b, x);
        CHECK(std::abs(v + reg_inc_beta(b, a, 1.0 - x) - 1.0) < 1e-12);
        CHECK(v >= prev);
        prev = v;
      }
    }
  }
  CHECK_THROWS_AS(reg_inc_beta(0.0, 1.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(reg_inc_beta(1.0, 1.0, 1.5), std::domain_error);
}

TEST_CASE("beta_inv_cdf closed forms") {
  // CDF of Beta(n, 1) is x^n, so the inverse is the n-th root.
  CHECK(std::abs(beta_inv_cdf(0.1, 10.0, 1.0) - 0.7943282347242815) < 1e-12);
  for (const double n : {1.0, 2.0, 5.0, 17.0, 100.0}) {
    for (const double alpha : {0.01, 0.1, 0.5, 0.93}) {
      CHECK(std::abs(beta_inv_cdf(alpha, n, 1.0) - std::pow(alpha, 1.0 / n)) < 1e-12);
      CHECK(std::abs(beta_inv_cdf(alpha, 1.0, n) - (1.0 - std::pow(1.0 - alpha, 1.0 / n))) <
            1e-12);
    }
  }
  CHECK(beta_inv_cdf(0.5, 2.0, 2.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(beta_inv_cdf(0.1, 94.5, 6.5) - 0.9031164183203737) < 1e-9);
  CHECK(std::abs(beta_inv_cdf(0.05, 3.0, 7.0) - 0.09774681343927574) < 1e-9);
}

TEST_CASE("beta_inv_cdf round-trips through reg_inc_beta") {
  const double alphas[] = {0.005, 0.05, 0.1, 0.35, 0.5, 0.75, 0.95, 0.995};
  const double shapes[] = {0.5, 1.0, 2.5, 9.5, 94.5, 300.0};
  for (const double alpha : alphas) {
    for (const double a : shapes) {
      for (const double b : shapes) {
        const double x = beta_inv_cdf(alpha, a, b);
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
        CHECK(std::abs(reg_inc_beta(a, b, x) - alpha) < 1e-10);
      }
    }
  }
  CHECK_THROWS_AS(beta_inv_cdf(0.0, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(beta_inv_cdf(0.5, -1.0, 1.0), std::domain_error);
}

TEST_CASE("normal_quantile reference values and round trip") {
  CHECK(std::abs(normal_quantile(0.90) - 1.2815515655446004) < 1e-12);
  CHECK(std::abs(normal_quantile(0.95) - 1.6448536269514722) < 1e-12);
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));

  // Symmetry tolerance: at p = 1e-6 the rounding of 1.0 - p alone moves the
  // quantile by about |eps/2| / pdf(z) ~ 1.3e-11, so 5e-11 is the honest bar.
  for (const double p : {1e-6, 0.01, 0.2, 0.5, 0.77, 0.999, 1.0 - 1e-6}) {
    const double z = normal_quantile(p);
    CHECK(std::abs(z + normal_quantile(1.0 - p)) < 5e-11);
    const double phi = 0.5 * std::erfc(-z / std::sqrt(2.0));
    CHECK(std::abs(phi - p) < 1e-12);
  }
  CHECK_THROWS_AS(normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(1.0), std::domain_error);
}

TEST_CASE("student_t_quantile reference values") {
  CHECK(std::abs(student_t_quantile(0.95, 8.0) - 1.8595480375228424) < 1e-10);
  CHECK(std::abs(student_t_quantile(0.95, 2.0) - 2.919985580355516) < 1e-10);
  CHECK(std::abs(student_t_quantile(0.975, 4.0) - 2.7764451051977987) < 1e-10);
  CHECK(student_t_quantile(0.5, 3.0) == doctest::Approx(0.0).epsilon(1e-12));

  // Converges to the normal quantile as dof grows.
  CHECK(std::abs(student_t_quantile(0.95, 1e6) - normal_quantile(0.95)) < 1e-5);
}

TEST_CASE("student_t_quantile round-trips through the t CDF") {
  for (const double dof : {1.0, 2.0, 8.0, 30.0, 200.0}) {
    for (const double p : {0.55, 0.75, 0.9, 0.95, 0.99}) {
      const double t = student_t_quantile(p, dof);
      CHECK(std::abs(t_cdf(t, dof) - p) < 1e-9);
      CHECK(std::abs(t + student_t_quantile(1.0 - p, dof)) < 1e-9);
    }
  }
  CHECK_THROWS_AS(student_t_quantile(0.95, 0.0), std::domain_error);
}

TEST_CASE("log_beta identities") {
  for (const double b : {0.5, 1.0, 3.0, 12.0, 150.0}) {
    CHECK(std::abs(log_beta(1.0, b) + std::log(b)) < 1e-13);
  }
  for (const double a : {0.7, 2.0, 9.0}) {
    for (const double b : {1.1, 5.0, 33.0}) {
      const double lhs = log_beta(a + 1.0, b) - log_beta(a, b);
      CHECK(std::abs(lhs - std::log(a / (a + b))) < 1e-12);
      CHECK(std::abs(log_beta(a, b) - log_beta(b, a)) < 1e-12);
      CHECK(std::abs(log_beta(a, b) - log_beta_ref(a, b)) < 1e-12);
    }
  }
}
