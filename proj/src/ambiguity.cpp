#include "dgopf/ambiguity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

#include "dgopf/rng.hpp"

namespace dgopf {

void validate_ambiguity(const AmbiguitySet& amb) {
  const Index m = amb.components();
  if (m == 0) throw Error("ambiguity set has no components");
  if (amb.weight_region.upper.size() != m ||
      static_cast<Index>(amb.mean_regions.size()) != m ||
      static_cast<Index>(amb.cov_regions.size()) != m) {
    throw Error("ambiguity set component counts are inconsistent");
  }
  const WeightRegion& wr = amb.weight_region;
  for (Index k = 0; k < m; ++k) {
    if (!(wr.lower[k] >= -1e-12 && wr.lower[k] <= wr.upper[k] + 1e-12 &&
          wr.upper[k] <= 1.0 + 1e-12)) {
      throw Error("weight region bounds out of order for component " +
                  std::to_string(k));
    }
  }
  if (wr.lower.sum() > 1.0 + 1e-9 || wr.upper.sum() < 1.0 - 1e-9) {
    throw Error("weight region does not intersect the simplex");
  }
  const Index w = amb.dim();
  for (Index k = 0; k < m; ++k) {
    const MeanRegion& mr = amb.mean_regions[k];
    if (mr.center.size() != w || mr.shape.rows() != w || mr.shape.cols() != w) {
      throw Error("mean region dimension mismatch");
    }
    if (mr.radius < 0.0) throw Error("mean region radius must be >= 0");
    Eigen::LLT<Matrix> llt(mr.shape);
    if (llt.info() != Eigen::Success) {
      throw Error("mean region shape must be positive definite");
    }
    const CovRegion& cr = amb.cov_regions[k];
    if (cr.center.rows() != w || cr.center.cols() != w) {
      throw Error("covariance region dimension mismatch");
    }
    if (cr.radius < 0.0) throw Error("covariance region radius must be >= 0");
    Eigen::LLT<Matrix> cllt(cr.center);
    if (cllt.info() != Eigen::Success) {
      throw Error("covariance region center must be positive definite");
    }
  }
}

AmbiguitySet singleton_ambiguity(const GmmParams& params) {
  AmbiguitySet amb;
  amb.delta = 0.0;
  amb.weight_region.lower = params.weights;
  amb.weight_region.upper = params.weights;
  amb.weight_region.delta = 0.0;
  const Index w = params.dim();
  for (Index k = 0; k < params.components(); ++k) {
    amb.mean_regions.push_back(
        {params.means[k], Matrix::Identity(w, w), 0.0});
    amb.cov_regions.push_back({params.covariances[k], 0.0});
  }
  return amb;
}

bool contains_params(const AmbiguitySet& amb, const GmmParams& params,
                     double tol) {
  if (params.components() != amb.components()) return false;
  for (Index k = 0; k < amb.components(); ++k) {
    if (params.weights[k] < amb.weight_region.lower[k] - tol ||
        params.weights[k] > amb.weight_region.upper[k] + tol) {
      return false;
    }
    const MeanRegion& mr = amb.mean_regions[k];
    const Vector d = params.means[k] - mr.center;
    const double mahal = d.dot(Eigen::LLT<Matrix>(mr.shape).solve(d));
    if (mahal > mr.radius + tol * (1.0 + mr.radius)) return false;
    const CovRegion& cr = amb.cov_regions[k];
    const double fro = (params.covariances[k] - cr.center).norm();
    if (fro > cr.radius + tol * (1.0 + cr.radius)) return false;
  }
  return true;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty list");
  if (q < 0.0 || q > 1.0) throw Error("quantile level must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<Index> align_components(const GmmParams& base,
                                    const GmmParams& fit) {
  const Index m = base.components();
  if (fit.components() != m) {
    throw Error("align_components: component counts differ");
  }
  Matrix cost(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      cost(i, j) = (base.means[i] - fit.means[j]).squaredNorm();
    }
  }
  std::vector<Index> perm(m, -1);
  if (m <= 10) {
    // Exact assignment by subset DP over fit components.
    const Index full = (Index{1} << m) - 1;
    std::vector<double> dp(full + 1,
                           std::numeric_limits<double>::infinity());
    std::vector<Index> choice(full + 1, -1);
    dp[0] = 0.0;
    for (Index mask = 0; mask < full; ++mask) {
      if (!std::isfinite(dp[mask])) continue;
      const Index slot = static_cast<Index>(
          __builtin_popcountll(static_cast<unsigned long long>(mask)));
      for (Index j = 0; j < m; ++j) {
        if (mask & (Index{1} << j)) continue;
        const Index next = mask | (Index{1} << j);
        const double c = dp[mask] + cost(slot, j);
        if (c < dp[next]) {
          dp[next] = c;
          choice[next] = j;
        }
      }
    }
    Index mask = full;
    while (mask != 0) {
      const Index j = choice[mask];
      const Index slot =
          static_cast<Index>(
              __builtin_popcountll(static_cast<unsigned long long>(mask))) -
          1;
      perm[slot] = j;
      mask &= ~(Index{1} << j);
    }
  } else {
    std::vector<bool> used(m, false);
    for (Index i = 0; i < m; ++i) {
      Index best = -1;
      double bc = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < m; ++j) {
        if (!used[j] && cost(i, j) < bc) {
          bc = cost(i, j);
          best = j;
        }
      }
      used[best] = true;
      perm[i] = best;
    }
  }
  return perm;
}

GmmParams apply_alignment(const GmmParams& fit,
                          const std::vector<Index>& perm) {
  GmmParams out;
  const Index m = fit.components();
  out.weights.resize(m);
  out.means.resize(m);
  out.covariances.resize(m);
  for (Index k = 0; k < m; ++k) {
    out.weights[k] = fit.weights[perm[k]];
    out.means[k] = fit.means[perm[k]];
    out.covariances[k] = fit.covariances[perm[k]];
  }
  return out;
}

BootstrapResult bootstrap_fits(const SampleSet& data, const FitResult& base,
                               int n_resamples, std::uint64_t seed,
                               const EmOptions& options, int threads) {
  validate_samples(data);
  if (n_resamples < 2) throw Error("bootstrap_fits: N >= 2 required");
  const Index j = data.observations();
  const int m = static_cast<int>(base.params.components());

  std::vector<GmmParams> slots(n_resamples);
  std::vector<char> ok(n_resamples, 0);
  std::vector<std::string> warnings(n_resamples);

  parallel_for(n_resamples, threads, [&](Index n) {
    Rng rng = Rng::derive(seed, 0xb007ULL + static_cast<std::uint64_t>(n));
    SampleSet resample;
    resample.rows.resize(j, data.dim());
    resample.columns = data.columns;
    for (Index r = 0; r < j; ++r) {
      resample.rows.row(r) =
          data.rows.row(static_cast<Index>(rng.uniform_int(j)));
    }
    // Warm start from the base parameters; fall back to fresh seedings.
    for (int attempt = 0; attempt < 3; ++attempt) {
      try {
        GmmInit init;
        if (attempt == 0) {
          init = base.params;
        } else {
          init = std::monostate{};
        }
        FitResult fit = em_fit(resample, m, init,
                               splitmix64(seed + 31ULL * n) + attempt, options);
        const auto perm = align_components(base.params, fit.params);
        slots[n] = apply_alignment(fit.params, perm);
        ok[n] = 1;
        return;
      } catch (const Error& e) {
        warnings[n] = std::string("resample ") + std::to_string(n) +
                      " attempt " + std::to_string(attempt) + ": " + e.what();
      }
    }
  });

  BootstrapResult out;
  for (int n = 0; n < n_resamples; ++n) {
    if (ok[n]) {
      out.fits.push_back(std::move(slots[n]));
    } else {
      ++out.dropped;
      out.warnings.push_back(warnings[n] + " (resample dropped)");
    }
  }
  if (out.fits.size() < 2) {
    throw Error("bootstrap_fits: fewer than 2 resamples survived");
  }
  return out;
}

WeightRegion build_weight_region(const std::vector<GmmParams>& boot,
                                 double delta,
                                 std::vector<std::string>* warnings) {
  if (boot.empty()) throw Error("build_weight_region: empty bootstrap");
  const Index m = boot.front().components();
  WeightRegion wr;
  wr.delta = delta;
  wr.lower.resize(m);
  wr.upper.resize(m);
  std::vector<double> samples(boot.size());
  for (Index k = 0; k < m; ++k) {
    for (size_t n = 0; n < boot.size(); ++n) samples[n] = boot[n].weights[k];
    wr.lower[k] = std::clamp(quantile(samples, (1.0 - delta) / 2.0), 0.0, 1.0);
    wr.upper[k] = std::clamp(quantile(samples, (1.0 + delta) / 2.0), 0.0, 1.0);
  }
  // The box must intersect the probability simplex; widen symmetrically if
  // quantile clipping left it empty.
  bool widened = false;
  for (int guard = 0; guard < 128; ++guard) {
    const double lo_sum = wr.lower.sum();
    const double hi_sum = wr.upper.sum();
    if (lo_sum <= 1.0 && hi_sum >= 1.0) break;
    widened = true;
    const double step =
        std::max(lo_sum - 1.0, 1.0 - hi_sum) / static_cast<double>(m) + 1e-12;
    for (Index k = 0; k < m; ++k) {
      wr.lower[k] = std::max(0.0, wr.lower[k] - step);
      wr.upper[k] = std::min(1.0, wr.upper[k] + step);
    }
  }
  if (widened && warnings) {
    warnings->push_back(
        "weight region widened to intersect the probability simplex");
  }
  return wr;
}

MeanRegion build_mean_region(const std::vector<GmmParams>& boot, Index m,
                             double delta) {
  if (boot.empty()) throw Error("build_mean_region: empty bootstrap");
  const Index n = static_cast<Index>(boot.size());
  const Index w = boot.front().dim();
  MeanRegion mr;
  mr.center = Vector::Zero(w);
  for (const GmmParams& p : boot) mr.center += p.means[m];
  mr.center /= static_cast<double>(n);

  mr.shape = Matrix::Zero(w, w);
  for (const GmmParams& p : boot) {
    const Vector d = p.means[m] - mr.center;
    mr.shape += d * d.transpose();
  }
  mr.shape /= static_cast<double>(std::max<Index>(n - 1, 1));

  // Ridge so the inverse in the Mahalanobis distances exists.
  Eigen::SelfAdjointEigenSolver<Matrix> es(mr.shape);
  const double lambda = std::max(1e-10, 1e-8 * mr.shape.trace() /
                                            static_cast<double>(w));
  if (es.eigenvalues().minCoeff() < lambda) {
    mr.shape += lambda * Matrix::Identity(w, w);
  }

  Eigen::LLT<Matrix> llt(mr.shape);
  if (llt.info() != Eigen::Success) {
    throw Error("build_mean_region: shape factorization failed");
  }
  std::vector<double> dist(boot.size());
  for (size_t i = 0; i < boot.size(); ++i) {
    const Vector d = boot[i].means[m] - mr.center;
    dist[i] = d.dot(llt.solve(d));
  }
  mr.radius = std::max(0.0, quantile(dist, delta));
  return mr;
}

CovRegion build_cov_region(const std::vector<GmmParams>& boot, Index m,
                           double delta) {
  if (boot.empty()) throw Error("build_cov_region: empty bootstrap");
  const Index w = boot.front().dim();
  CovRegion cr;
  cr.center = Matrix::Zero(w, w);
  for (const GmmParams& p : boot) cr.center += p.covariances[m];
  cr.center /= static_cast<double>(boot.size());
  std::vector<double> dist(boot.size());
  for (size_t i = 0; i < boot.size(); ++i) {
    dist[i] = (boot[i].covariances[m] - cr.center).norm();
  }
  cr.radius = std::max(0.0, quantile(dist, delta));
  return cr;
}

AmbiguityBuild build_ambiguity_set(const SampleSet& data, double delta,
                                   int n_resamples, int m_lo, int m_hi,
                                   std::uint64_t seed,
                                   const EmOptions& options, int threads) {
  if (delta < 0.0 || delta > 1.0) {
    throw Error("build_ambiguity_set: delta must be in [0,1]");
  }
  AmbiguityBuild out;
  out.base = select_m_bic(data, m_lo, m_hi, seed, options, threads);
  out.bootstrap =
      bootstrap_fits(data, out.base, n_resamples, seed, options, threads);
  out.warnings = out.bootstrap.warnings;

  const auto& fits = out.bootstrap.fits;
  out.set.delta = delta;
  out.set.weight_region = build_weight_region(fits, delta, &out.warnings);
  for (Index k = 0; k < out.base.params.components(); ++k) {
    out.set.mean_regions.push_back(build_mean_region(fits, k, delta));
    out.set.cov_regions.push_back(build_cov_region(fits, k, delta));
  }
  validate_ambiguity(out.set);

  if (!contains_params(out.set, out.base.params, 1e-9)) {
    out.warnings.push_back(
        "base fit lies outside at least one bootstrap credible region");
  }
  return out;
}

}  // namespace dgopf
