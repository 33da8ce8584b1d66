// Worst-case CVaR of a linear exposure y' xi over a GMM ambiguity set:
// closed-form worst-case component parameters, bisection for the worst-case
// VaR, analytic gradients and supporting cutting planes. Also the fixed-GMM
// and moment-set variants used by the comparison models.
#pragma once

#include <utility>
#include <vector>

#include "dgopf/ambiguity.hpp"
#include "dgopf/types.hpp"

namespace dgopf {

/// Exposures with projected standard deviation below this (MW) are treated
/// as deterministic point masses.
constexpr double kSigmaFloor = 1e-12;

/// One-dimensional statistics of y' xi under a single Gaussian component.
struct ComponentStats {
  double mu_bar = 0.0;     // MW
  double sigma_bar = 0.0;  // MW, floored at kSigmaFloor
  bool deterministic = false;
};

struct WcCvarResult {
  double cvar = 0.0;  // MW
  double var = 0.0;   // MW, the optimal t
  Vector worst_weights;
  std::vector<Vector> worst_means;
  std::vector<Matrix> worst_covs;
  std::vector<ComponentStats> component_stats;
  Vector gradient;  // d cvar / d y at the queried exposure
};

/// E[max(Z - t, 0)] for Z ~ N(mu_bar, sigma_bar^2); the deterministic branch
/// returns max(mu_bar - t, 0).
double q_m(double t, const ComponentStats& stats);

/// P(Z <= t) for the component (step function on the deterministic branch).
double component_cdf(double t, const ComponentStats& stats);

/// Component density at t (zero on the deterministic branch).
double component_pdf(double t, const ComponentStats& stats);

/// Maximizer of y' mu over the ellipsoid; returns (mu_wc, y' mu_wc).
std::pair<Vector, double> worst_mean(const Vector& y, const MeanRegion& region);

/// Maximizer of y' S y over the Frobenius ball; returns (S_wc, sqrt(y'S_wc y)).
std::pair<Matrix, double> worst_cov(const Vector& y, const CovRegion& region);

/// Maximizes sum_m pi_m * scores_m over the weight box intersected with the
/// simplex: start at the lower bounds and fill the remaining mass greedily in
/// descending score order (ties to the lower component index).
Vector sort_weights(const WeightRegion& region, const Vector& scores);

/// Bisection for the worst-case VaR: minimizes
/// T(t) = t + (1/beta) max_pi sum_m pi_m Q_m(t). Returns the maximizing
/// weights and t with final bracket width <= tol.
std::pair<Vector, double> bisect_var(const std::vector<ComponentStats>& stats,
                                     const WeightRegion& region, double beta,
                                     double tol = 1e-5);

/// Worst-case CVaR of y' xi over the ambiguity set at risk level beta.
/// A zero exposure returns cvar = var = 0 with a zero gradient. The
/// bisection tolerance is configurable for stress tests only.
WcCvarResult wc_cvar(const Vector& y, const AmbiguitySet& amb, double beta,
                     double bisect_tol = 1e-5);

/// CVaR under a fixed GMM: wc_cvar on the singleton set built from params.
WcCvarResult cvar_fixed(const Vector& y, const GmmParams& params, double beta,
                        double bisect_tol = 1e-5);

/// Worst-case CVaR over the mean/covariance moment set:
/// y'mu + sqrt((1-beta)/beta) * sqrt(y'Sigma y), with its gradient.
std::pair<double, Vector> moment_wc_cvar(const Vector& y, const Vector& mean,
                                         const Matrix& cov, double beta);

/// Affine global under-estimator g(y) = constant + coefficients' y supporting
/// the worst-case CVaR at the exposure it was built from.
struct CuttingPlane {
  double constant = 0.0;
  Vector coefficients;

  double value_at(const Vector& y) const {
    return constant + coefficients.dot(y);
  }
};

CuttingPlane cutting_plane(const WcCvarResult& res, const Vector& y_star);

}  // namespace dgopf
