#include "dgopf/wccvar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dgopf/special.hpp"

namespace dgopf {

double q_m(double t, const ComponentStats& stats) {
  if (stats.deterministic) return std::max(stats.mu_bar - t, 0.0);
  const double u = (t - stats.mu_bar) / stats.sigma_bar;
  return stats.sigma_bar * norm_pdf(u) +
         (stats.mu_bar - t) * (1.0 - norm_cdf(u));
}

double component_cdf(double t, const ComponentStats& stats) {
  if (stats.deterministic) return t >= stats.mu_bar ? 1.0 : 0.0;
  return norm_cdf(t, stats.mu_bar, stats.sigma_bar);
}

double component_pdf(double t, const ComponentStats& stats) {
  if (stats.deterministic) return 0.0;
  return norm_pdf(t, stats.mu_bar, stats.sigma_bar);
}

std::pair<Vector, double> worst_mean(const Vector& y,
                                     const MeanRegion& region) {
  const double quad = y.dot(region.shape * y);
  if (region.radius <= 0.0 || quad <= 0.0) {
    return {region.center, y.dot(region.center)};
  }
  const Vector mu_wc =
      region.center + std::sqrt(region.radius / quad) * (region.shape * y);
  return {mu_wc, y.dot(region.center) + std::sqrt(region.radius * quad)};
}

std::pair<Matrix, double> worst_cov(const Vector& y, const CovRegion& region) {
  const double y2 = y.squaredNorm();
  const double base = y.dot(region.center * y);
  if (region.radius <= 0.0 || y2 <= 0.0) {
    return {region.center, std::sqrt(std::max(base, 0.0))};
  }
  const Matrix cov_wc =
      region.center + (region.radius / y2) * (y * y.transpose());
  return {cov_wc, std::sqrt(std::max(base + region.radius * y2, 0.0))};
}

Vector sort_weights(const WeightRegion& region, const Vector& scores) {
  const Index m = region.lower.size();
  if (scores.size() != m) throw Error("sort_weights: score size mismatch");
  Vector pi = region.lower;
  double remaining = 1.0 - pi.sum();
  if (remaining < -1e-9) {
    throw Error("sort_weights: weight region lower bounds exceed the simplex");
  }
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return scores[a] > scores[b];  // ties keep index order
  });
  for (Index idx : order) {
    if (remaining <= 0.0) break;
    const double add = std::min(region.upper[idx] - pi[idx], remaining);
    if (add > 0.0) {
      pi[idx] += add;
      remaining -= add;
    }
  }
  if (remaining > 1e-9) {
    throw Error("sort_weights: weight region upper bounds below the simplex");
  }
  return pi;
}

namespace {

// Subgradient of T(t) at t with the inner maximization resolved (Danskin).
double t_subgradient(double t, const std::vector<ComponentStats>& stats,
                     const WeightRegion& region, double beta, Vector* pi_out) {
  const Index m = static_cast<Index>(stats.size());
  Vector scores(m);
  for (Index k = 0; k < m; ++k) scores[k] = q_m(t, stats[k]);
  const Vector pi = sort_weights(region, scores);
  double acc = 0.0;
  for (Index k = 0; k < m; ++k) acc += pi[k] * component_cdf(t, stats[k]);
  if (pi_out) *pi_out = pi;
  return 1.0 - 1.0 / beta + acc / beta;
}

}  // namespace

std::pair<Vector, double> bisect_var(const std::vector<ComponentStats>& stats,
                                     const WeightRegion& region, double beta,
                                     double tol) {
  if (stats.empty()) throw Error("bisect_var: no components");
  if (!(beta > 0.0 && beta < 1.0)) throw Error("bisect_var: beta in (0,1)");
  const double z = norm_ppf(1.0 - beta);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const ComponentStats& s : stats) {
    const double t = s.mu_bar + z * (s.deterministic ? 0.0 : s.sigma_bar);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  // The bracket from the component quantiles always contains the minimizer;
  // the expansion below only fires on numerically degenerate inputs.
  int expand = 0;
  while (t_subgradient(lo, stats, region, beta, nullptr) > 0.0) {
    lo -= std::max(1.0, hi - lo);
    if (++expand > 60) throw Error("bisect_var: bracket failure");
  }
  expand = 0;
  while (t_subgradient(hi, stats, region, beta, nullptr) < 0.0) {
    hi += std::max(1.0, hi - lo);
    if (++expand > 60) throw Error("bisect_var: bracket failure");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (t_subgradient(mid, stats, region, beta, nullptr) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // T can be kinked (deterministic components); picking the best endpoint
  // of the final bracket lands exactly on an atom when there is one.
  const Index m = static_cast<Index>(stats.size());
  auto t_value = [&](double t, Vector* pi_out) {
    Vector scores(m);
    for (Index k = 0; k < m; ++k) scores[k] = q_m(t, stats[k]);
    const Vector pi = sort_weights(region, scores);
    if (pi_out) *pi_out = pi;
    return t + pi.dot(scores) / beta;
  };
  double t_opt = lo;
  double best = t_value(lo, nullptr);
  for (double cand : {0.5 * (lo + hi), hi}) {
    const double val = t_value(cand, nullptr);
    if (val < best) {
      best = val;
      t_opt = cand;
    }
  }
  Vector pi;
  t_value(t_opt, &pi);
  return {pi, t_opt};
}

WcCvarResult wc_cvar(const Vector& y, const AmbiguitySet& amb, double beta,
                     double bisect_tol) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error("wc_cvar: beta in (0,1)");
  const Index m = amb.components();
  const Index w = amb.dim();
  if (y.size() != w) throw Error("wc_cvar: exposure dimension mismatch");

  WcCvarResult res;
  res.worst_means.resize(m);
  res.worst_covs.resize(m);
  res.component_stats.resize(m);

  if (y.lpNorm<Eigen::Infinity>() == 0.0) {
    // Degenerate exposure: y' xi is identically zero.
    res.cvar = 0.0;
    res.var = 0.0;
    res.gradient = Vector::Zero(w);
    res.worst_weights = sort_weights(amb.weight_region, Vector::Zero(m));
    for (Index k = 0; k < m; ++k) {
      res.worst_means[k] = amb.mean_regions[k].center;
      res.worst_covs[k] = amb.cov_regions[k].center;
      res.component_stats[k] = {0.0, kSigmaFloor, true};
    }
    return res;
  }

  std::vector<ComponentStats> stats(m);
  for (Index k = 0; k < m; ++k) {
    auto [mu_wc, mu_bar] = worst_mean(y, amb.mean_regions[k]);
    auto [cov_wc, sigma_bar] = worst_cov(y, amb.cov_regions[k]);
    res.worst_means[k] = std::move(mu_wc);
    res.worst_covs[k] = std::move(cov_wc);
    ComponentStats& s = stats[k];
    s.mu_bar = mu_bar;
    s.deterministic = sigma_bar < kSigmaFloor;
    s.sigma_bar = std::max(sigma_bar, kSigmaFloor);
  }
  res.component_stats = stats;

  auto [pi, t_opt] = bisect_var(stats, amb.weight_region, beta, bisect_tol);
  res.worst_weights = pi;
  res.var = t_opt;
  double tail = 0.0;
  for (Index k = 0; k < m; ++k) tail += pi[k] * q_m(t_opt, stats[k]);
  res.cvar = t_opt + tail / beta;

  res.gradient = Vector::Zero(w);
  for (Index k = 0; k < m; ++k) {
    const double surv = 1.0 - component_cdf(t_opt, stats[k]);
    const double dens = component_pdf(t_opt, stats[k]);
    res.gradient +=
        pi[k] * (res.worst_means[k] * surv + (res.worst_covs[k] * y) * dens);
  }
  res.gradient /= beta;
  return res;
}

WcCvarResult cvar_fixed(const Vector& y, const GmmParams& params,
                        double beta, double bisect_tol) {
  return wc_cvar(y, singleton_ambiguity(params), beta, bisect_tol);
}

std::pair<double, Vector> moment_wc_cvar(const Vector& y, const Vector& mean,
                                         const Matrix& cov, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw Error("moment_wc_cvar: beta in (0,1)");
  }
  const double quad = y.dot(cov * y);
  const double scale = std::sqrt((1.0 - beta) / beta);
  if (quad <= kSigmaFloor * kSigmaFloor) {
    return {y.dot(mean), mean};
  }
  const double value = y.dot(mean) + scale * std::sqrt(quad);
  const Vector grad = mean + scale * (cov * y) / std::sqrt(quad);
  return {value, grad};
}

CuttingPlane cutting_plane(const WcCvarResult& res, const Vector& y_star) {
  CuttingPlane cut;
  cut.coefficients = res.gradient;
  cut.constant = res.cvar - res.gradient.dot(y_star);
  return cut;
}

}  // namespace dgopf
