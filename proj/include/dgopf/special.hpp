// Scalar special functions: standard normal pdf/cdf/quantile and the
// regularized incomplete beta with its inverse.
#pragma once

namespace dgopf {

/// Standard normal density.
double norm_pdf(double z);

/// Standard normal CDF via erfc; absolute error below 1e-15.
double norm_cdf(double z);

/// Inverse standard normal CDF. Rational initial guess polished with one
/// Newton step; absolute error well below 1e-9 on (0,1). Returns +-inf at
/// the endpoints.
double norm_ppf(double p);

/// Density of N(mu, sigma^2) at x. sigma must be positive.
double norm_pdf(double x, double mu, double sigma);

/// CDF of N(mu, sigma^2) at x.
double norm_cdf(double x, double mu, double sigma);

/// Regularized incomplete beta I_x(a, b), a,b > 0, x in [0,1].
double betainc(double a, double b, double x);

/// Inverse of betainc in x for fixed (a, b).
double betainc_inv(double a, double b, double p);

}  // namespace dgopf
