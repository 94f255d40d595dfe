#pragma once

namespace recallforge {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
/// Absolute error <= 1e-12 for a, b > 0 and x in [0, 1].
double reg_inc_beta(double a, double b, double x);

/// Inverse of I_x(a, b) in x: returns x with |I_x(a,b) - alpha| <= 1e-10.
/// Bracketed bisection refined by Newton steps.
double beta_inv_cdf(double alpha, double a, double b);

/// Standard normal quantile, |error| well below 1e-12.
double normal_quantile(double p);

/// Student-t quantile with `dof` degrees of freedom, via the incomplete-beta
/// relation between the t CDF and I_x(dof/2, 1/2).
double student_t_quantile(double p, double dof);

double log_beta(double a, double b);

}  // namespace recallforge
