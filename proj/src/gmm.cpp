#include "dgopf/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgopf/rng.hpp"

namespace dgopf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kWeightFloor = 1e-8;

double ridge_epsilon(const SampleSet& data) {
  const Index j = data.observations();
  const Index w = data.dim();
  const Matrix centered =
      data.rows.rowwise() - data.rows.colwise().mean();
  const double trace =
      centered.colwise().squaredNorm().sum() / std::max<Index>(j - 1, 1);
  return std::max(1e-6 * trace / static_cast<double>(w), 1e-12);
}

Matrix sample_covariance(const Matrix& rows) {
  const Index j = rows.rows();
  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  return centered.transpose() * centered / std::max<Index>(j - 1, 1);
}

// Per-component log-density for all rows at once.
Vector log_density_all(const Matrix& rows, const Vector& mu,
                       const Eigen::LLT<Matrix>& llt) {
  const Index w = mu.size();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Matrix centered = rows.rowwise() - mu.transpose();
  const Matrix z = llt.matrixL().solve(centered.transpose());  // W x J
  const Vector quad = z.colwise().squaredNorm().transpose();
  return (-0.5 * (static_cast<double>(w) * kLog2Pi + logdet) -
          0.5 * quad.array())
      .matrix();
}

struct EStep {
  Matrix responsibilities;  // J x M
  Vector row_loglik;        // J
  double log_likelihood = 0.0;
};

EStep e_step(const Matrix& rows, const GmmParams& params) {
  const Index j = rows.rows();
  const Index m = params.components();
  Matrix logr(j, m);
  for (Index k = 0; k < m; ++k) {
    Eigen::LLT<Matrix> llt(params.covariances[k]);
    if (llt.info() != Eigen::Success) {
      throw Error("em_fit: component covariance not positive definite");
    }
    logr.col(k) = log_density_all(rows, params.means[k], llt).array() +
                  std::log(std::max(params.weights[k],
                                    std::numeric_limits<double>::min()));
  }
  EStep out;
  out.row_loglik.resize(j);
  out.responsibilities.resize(j, m);
  for (Index r = 0; r < j; ++r) {
    const double mx = logr.row(r).maxCoeff();
    const double lse = mx + std::log((logr.row(r).array() - mx).exp().sum());
    out.row_loglik[r] = lse;
    out.responsibilities.row(r) = (logr.row(r).array() - lse).exp();
  }
  out.log_likelihood = out.row_loglik.sum();
  return out;
}

GmmParams m_step(const Matrix& rows, const Matrix& resp, double epsilon) {
  const Index j = rows.rows();
  const Index w = rows.cols();
  const Index m = resp.cols();
  GmmParams params;
  params.weights.resize(m);
  params.means.resize(m);
  params.covariances.resize(m);
  for (Index k = 0; k < m; ++k) {
    const double nk = resp.col(k).sum();
    params.weights[k] = nk / static_cast<double>(j);
    if (nk <= 0.0) {
      params.means[k] = Vector::Zero(w);
      params.covariances[k] = Matrix::Identity(w, w) * epsilon;
      continue;
    }
    const Vector mu = rows.transpose() * resp.col(k) / nk;
    const Matrix centered = rows.rowwise() - mu.transpose();
    const Matrix weighted = centered.array().colwise() * resp.col(k).array();
    Matrix cov = weighted.transpose() * centered / nk;
    cov = 0.5 * (cov + cov.transpose());
    cov += epsilon * Matrix::Identity(w, w);
    params.means[k] = mu;
    params.covariances[k] = cov;
  }
  return params;
}

// k-means++ style seeding: distance-weighted center picks, hard assignment.
Matrix seed_memberships(const Matrix& rows, int m, Rng* rng) {
  const Index j = rows.rows();
  std::vector<Index> centers;
  centers.push_back(static_cast<Index>(rng->uniform_int(j)));
  Vector dist2 =
      (rows.rowwise() - rows.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < m) {
    const double total = dist2.sum();
    Index pick = 0;
    if (total > 0.0) {
      const double target = rng->uniform() * total;
      double acc = 0.0;
      for (Index r = 0; r < j; ++r) {
        acc += dist2[r];
        if (acc >= target) {
          pick = r;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng->uniform_int(j));
    }
    centers.push_back(pick);
    dist2 = dist2.cwiseMin(
        (rows.rowwise() - rows.row(pick)).rowwise().squaredNorm());
  }
  Matrix memb = Matrix::Zero(j, m);
  for (Index r = 0; r < j; ++r) {
    Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k) {
      const double d = (rows.row(r) - rows.row(centers[k])).squaredNorm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    memb(r, best) = 1.0;
  }
  // Every component keeps at least its own center point.
  for (int k = 0; k < m; ++k) {
    memb.row(centers[k]).setZero();
    memb(centers[k], k) = 1.0;
  }
  return memb;
}

}  // namespace

void validate_samples(const SampleSet& data) {
  if (!data.rows.allFinite()) {
    throw Error("sample set contains non-finite entries");
  }
  if (data.observations() < data.dim() + 1) {
    throw Error("sample set needs at least W + 1 observations");
  }
}

void validate_params(const GmmParams& params) {
  const Index m = params.components();
  if (m == 0) throw Error("GMM must have at least one component");
  if (std::abs(params.weights.sum() - 1.0) > 1e-12) {
    throw Error("GMM weights must sum to 1");
  }
  if (params.weights.minCoeff() < 0.0) {
    throw Error("GMM weights must be nonnegative");
  }
  const Index w = params.dim();
  for (Index k = 0; k < m; ++k) {
    if (params.means[k].size() != w || params.covariances[k].rows() != w ||
        params.covariances[k].cols() != w) {
      throw Error("GMM component dimensions are inconsistent");
    }
    if (!params.covariances[k].isApprox(params.covariances[k].transpose(),
                                        1e-9)) {
      throw Error("GMM covariance must be symmetric");
    }
    Eigen::LLT<Matrix> llt(params.covariances[k]);
    if (llt.info() != Eigen::Success) {
      throw Error("GMM covariance must be positive definite");
    }
  }
}

FitResult em_fit(const SampleSet& data, int m, const GmmInit& init,
                 std::uint64_t seed, const EmOptions& options) {
  validate_samples(data);
  if (m < 1) throw Error("em_fit: m must be >= 1");
  const Index j = data.observations();
  const Index w = data.dim();
  if (j < m) throw Error("em_fit: fewer observations than components");
  const double epsilon = ridge_epsilon(data);
  const Matrix overall_cov =
      sample_covariance(data.rows) + epsilon * Matrix::Identity(w, w);

  Rng rng = Rng::derive(seed, 0x676d6dULL);
  GmmParams params;
  if (std::holds_alternative<GmmParams>(init)) {
    params = std::get<GmmParams>(init);
    if (params.components() != m || params.dim() != w) {
      throw Error("em_fit: init parameter dimensions do not match");
    }
  } else if (std::holds_alternative<Matrix>(init)) {
    const Matrix& memb = std::get<Matrix>(init);
    if (memb.rows() != j || memb.cols() != m) {
      throw Error("em_fit: init membership matrix must be J x M");
    }
    params = m_step(data.rows, memb, epsilon);
  } else {
    params = m_step(data.rows, seed_memberships(data.rows, m, &rng), epsilon);
  }

  FitResult out;
  double prev_ll = -std::numeric_limits<double>::infinity();
  EStep es;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    es = e_step(data.rows, params);
    const double ll = es.log_likelihood;
    if (!std::isfinite(ll)) throw Error("em_fit: log-likelihood diverged");
    if (std::abs(ll - prev_ll) < options.tol * std::max(1.0, std::abs(ll))) {
      out.converged = true;
      ++it;
      break;
    }
    prev_ll = ll;
    params = m_step(data.rows, es.responsibilities, epsilon);

    // Re-seed collapsed components at the worst-explained datum so the
    // component count stays fixed.
    bool reseeded = false;
    for (Index k = 0; k < m; ++k) {
      if (params.weights[k] < kWeightFloor) {
        Index worst = 0;
        es.row_loglik.minCoeff(&worst);
        params.means[k] = data.rows.row(worst);
        params.covariances[k] = overall_cov;
        params.weights[k] = 1.0 / static_cast<double>(j);
        reseeded = true;
      }
    }
    if (reseeded) {
      params.weights /= params.weights.sum();
      prev_ll = -std::numeric_limits<double>::infinity();
    }
  }
  es = e_step(data.rows, params);
  out.params = params;
  out.log_likelihood = es.log_likelihood;
  out.memberships = es.responsibilities;
  out.iterations = it;
  out.bic = -2.0 * out.log_likelihood +
            gmm_free_parameters(m, static_cast<int>(w)) *
                std::log(static_cast<double>(j));
  return out;
}

FitResult select_m_bic(const SampleSet& data, int m_lo, int m_hi,
                       std::uint64_t seed, const EmOptions& options,
                       int threads) {
  if (m_lo < 1 || m_hi < m_lo) throw Error("select_m_bic: bad m range");
  const int restarts = std::max(1, options.n_restarts);
  const int n_m = m_hi - m_lo + 1;
  const Index jobs = static_cast<Index>(n_m) * restarts;

  std::vector<FitResult> slots(jobs);
  std::vector<char> ok(jobs, 0);
  std::vector<std::string> errors(jobs);
  parallel_for(jobs, threads, [&](Index job) {
    const int m = m_lo + static_cast<int>(job) / restarts;
    const int r = static_cast<int>(job) % restarts;
    try {
      slots[job] = em_fit(data, m, std::monostate{},
                          splitmix64(seed) + 1000ULL * m + r, options);
      ok[job] = 1;
    } catch (const Error& e) {
      errors[job] = e.what();
    }
  });

  // Reduction in fixed (m, restart) order: best log-likelihood per m, then
  // minimal BIC across m (ties resolved toward smaller m).
  bool have = false;
  FitResult best;
  std::string failures;
  for (int mi = 0; mi < n_m; ++mi) {
    bool have_m = false;
    Index best_job = -1;
    for (int r = 0; r < restarts; ++r) {
      const Index job = static_cast<Index>(mi) * restarts + r;
      if (!ok[job]) {
        if (!errors[job].empty()) {
          failures += std::string(failures.empty() ? "" : "; ") + errors[job];
        }
        continue;
      }
      if (!have_m ||
          slots[job].log_likelihood > slots[best_job].log_likelihood) {
        best_job = job;
        have_m = true;
      }
    }
    if (have_m && (!have || slots[best_job].bic < best.bic)) {
      best = std::move(slots[best_job]);
      have = true;
    }
  }
  if (!have) throw Error("select_m_bic: every fit failed (" + failures + ")");
  return best;
}

double gmm_log_pdf(const GmmParams& params, const Vector& point) {
  if (point.size() != params.dim()) {
    throw Error("gmm_pdf: point dimension mismatch");
  }
  const Index m = params.components();
  Vector terms(m);
  Matrix row = point.transpose();
  for (Index k = 0; k < m; ++k) {
    Eigen::LLT<Matrix> llt(params.covariances[k]);
    if (llt.info() != Eigen::Success) {
      throw Error("gmm_pdf: covariance not positive definite");
    }
    terms[k] = log_density_all(row, params.means[k], llt)[0] +
               std::log(std::max(params.weights[k],
                                 std::numeric_limits<double>::min()));
  }
  const double mx = terms.maxCoeff();
  return mx + std::log((terms.array() - mx).exp().sum());
}

double gmm_pdf(const GmmParams& params, const Vector& point) {
  return std::exp(gmm_log_pdf(params, point));
}

SampleSet gmm_sample(const GmmParams& params, Index n, std::uint64_t seed) {
  if (n < 1) throw Error("gmm_sample: n must be >= 1");
  validate_params(params);
  const Index m = params.components();
  const Index w = params.dim();
  std::vector<Matrix> chol(m);
  for (Index k = 0; k < m; ++k) {
    Eigen::LLT<Matrix> llt(params.covariances[k]);
    if (llt.info() != Eigen::Success) {
      throw Error("gmm_sample: Cholesky factorization failed");
    }
    chol[k] = llt.matrixL();
  }
  Vector cumw(m);
  double acc = 0.0;
  for (Index k = 0; k < m; ++k) {
    acc += params.weights[k];
    cumw[k] = acc;
  }
  Rng rng = Rng::derive(seed, 0x73616d70ULL);
  SampleSet out;
  out.rows.resize(n, w);
  Vector z(w);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    Index k = 0;
    while (k + 1 < m && u > cumw[k]) ++k;
    for (Index d = 0; d < w; ++d) z[d] = rng.normal();
    out.rows.row(i) = (params.means[k] + chol[k] * z).transpose();
  }
  return out;
}

void gmm_moments(const GmmParams& params, Vector* mean, Matrix* cov) {
  const Index m = params.components();
  const Index w = params.dim();
  Vector mu = Vector::Zero(w);
  for (Index k = 0; k < m; ++k) mu += params.weights[k] * params.means[k];
  Matrix sigma = Matrix::Zero(w, w);
  for (Index k = 0; k < m; ++k) {
    const Vector d = params.means[k] - mu;
    sigma += params.weights[k] * (params.covariances[k] + d * d.transpose());
  }
  *mean = mu;
  *cov = sigma;
}

}  // namespace dgopf
