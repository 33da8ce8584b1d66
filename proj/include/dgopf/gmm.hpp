// Gaussian mixture fitting (EM with BIC model selection), density evaluation
// and sampling.
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dgopf/types.hpp"

namespace dgopf {

/// Forecast-error observations: one row per observation, one column per farm.
struct SampleSet {
  Matrix rows;                       // J x W, MW
  std::vector<std::string> columns;  // farm names; empty = unnamed

  Index observations() const { return rows.rows(); }
  Index dim() const { return rows.cols(); }
};

/// Throws Error if entries are non-finite or J < W + 1.
void validate_samples(const SampleSet& data);

struct GmmParams {
  Vector weights;                  // M, sums to 1
  std::vector<Vector> means;       // M vectors of length W (MW)
  std::vector<Matrix> covariances; // M matrices W x W (MW^2), SPD

  Index components() const { return weights.size(); }
  Index dim() const { return means.empty() ? 0 : means.front().size(); }
};

/// Checks weight normalization and covariance SPD-ness (Cholesky succeeds).
void validate_params(const GmmParams& params);

struct FitResult {
  GmmParams params;
  double log_likelihood = 0.0;
  double bic = 0.0;
  Matrix memberships;  // J x M posterior component probabilities
  int iterations = 0;
  bool converged = false;
};

struct EmOptions {
  double tol = 1e-8;   // relative log-likelihood improvement
  int max_iter = 500;
  int n_restarts = 5;  // used by select_m_bic
};

/// Number of free parameters of an M-component, W-dimensional GMM.
inline int gmm_free_parameters(int m, int w) {
  return (m - 1) + m * w + m * w * (w + 1) / 2;
}

/// Initial state for EM: nothing (k-means++ style seeding from the seed),
/// explicit parameters, or a J x M membership matrix.
using GmmInit = std::variant<std::monostate, GmmParams, Matrix>;

/// Runs EM until the relative log-likelihood improvement drops below
/// options.tol or max_iter is reached. Covariances are floored with a ridge
/// proportional to the sample covariance trace; components whose weight
/// collapses are re-seeded at the worst-explained datum.
FitResult em_fit(const SampleSet& data, int m, const GmmInit& init,
                 std::uint64_t seed, const EmOptions& options = {});

/// Fits every m in [m_lo, m_hi] with options.n_restarts restarts each (best
/// log-likelihood kept per m) and returns the fit with minimal BIC. Restarts
/// run concurrently when threads > 1; the selection is keyed by (m, restart)
/// index, so the result does not depend on the thread count.
FitResult select_m_bic(const SampleSet& data, int m_lo, int m_hi,
                       std::uint64_t seed, const EmOptions& options = {},
                       int threads = 1);

/// Mixture density at a point (1/MW^W).
double gmm_pdf(const GmmParams& params, const Vector& point);

double gmm_log_pdf(const GmmParams& params, const Vector& point);

/// n deterministic draws: component by weight, then mu + chol(Sigma) * z.
SampleSet gmm_sample(const GmmParams& params, Index n, std::uint64_t seed);

/// Mixture mean and covariance (law of total covariance).
void gmm_moments(const GmmParams& params, Vector* mean, Matrix* cov);

}  // namespace dgopf
