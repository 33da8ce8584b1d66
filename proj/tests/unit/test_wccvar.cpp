#include "dgopf/wccvar.hpp"

#include <cmath>

#include <doctest.h>

#include "dgopf/gmm.hpp"
#include "dgopf/oracle.hpp"
#include "dgopf/rng.hpp"
#include "dgopf/special.hpp"

using namespace dgopf;

namespace {

ComponentStats stats_of(double mu, double sigma) {
  return {mu, sigma, sigma < kSigmaFloor};
}

// E[max(Z - t, 0)] by trapezoid quadrature, independent of q_m.
double q_quadrature(double t, double mu, double sigma) {
  const double lo = std::max(t, mu - 12.0 * sigma);
  const double hi = mu + 12.0 * sigma;
  if (hi <= lo) return 0.0;
  const int n = 200000;
  double acc = 0.0;
  double prev = std::max(lo - t, 0.0) * norm_pdf(lo, mu, sigma);
  for (int i = 1; i <= n; ++i) {
    const double z = lo + (hi - lo) * i / n;
    const double cur = (z - t) * norm_pdf(z, mu, sigma);
    acc += 0.5 * (prev + cur) * (hi - lo) / n;
    prev = cur;
  }
  return acc;
}

GmmParams random_gmm(Index m, Index w, Rng* rng) {
  GmmParams p;
  p.weights.resize(m);
  for (Index k = 0; k < m; ++k) p.weights[k] = 0.2 + rng->uniform();
  p.weights /= p.weights.sum();
  for (Index k = 0; k < m; ++k) {
    Vector mu(w);
    for (Index d = 0; d < w; ++d) mu[d] = 4.0 * rng->normal();
    Matrix a(w, w);
    for (Index r = 0; r < w; ++r) {
      for (Index c = 0; c < w; ++c) a(r, c) = rng->normal();
    }
    Matrix cov = a * a.transpose() + 0.5 * Matrix::Identity(w, w);
    p.means.push_back(mu);
    p.covariances.push_back(cov);
  }
  return p;
}

// Ambiguity set with strictly positive radii around a random GMM.
AmbiguitySet random_ambiguity(const GmmParams& params, Rng* rng) {
  AmbiguitySet amb = singleton_ambiguity(params);
  const Index m = params.components();
  const Index w = params.dim();
  for (Index k = 0; k < m; ++k) {
    amb.weight_region.lower[k] =
        std::max(0.0, params.weights[k] - 0.05 - 0.1 * rng->uniform());
    amb.weight_region.upper[k] =
        std::min(1.0, params.weights[k] + 0.05 + 0.1 * rng->uniform());
    Matrix a(w, w);
    for (Index r = 0; r < w; ++r) {
      for (Index c = 0; c < w; ++c) a(r, c) = rng->normal();
    }
    amb.mean_regions[k].shape =
        a * a.transpose() + 0.3 * Matrix::Identity(w, w);
    amb.mean_regions[k].radius = 0.5 + rng->uniform();
    amb.cov_regions[k].radius = 0.3 + 0.5 * rng->uniform();
  }
  amb.delta = 0.95;
  return amb;
}

}  // namespace

TEST_CASE("q_m: standard value, asymptotes, quadrature oracle") {
  CHECK(q_m(0.0, stats_of(0.0, 1.0)) ==
        doctest::Approx(0.3989422804014327).epsilon(1e-12));
  CHECK(q_m(60.0, stats_of(0.0, 1.0)) == doctest::Approx(0.0));
  // Deep in the left tail the integral approaches mu - t.
  const double t = -10.0;
  CHECK(q_m(t, stats_of(0.0, 1.0)) == doctest::Approx(-t).epsilon(1e-10));
  CHECK(q_m(1.0, stats_of(2.0, 3.0)) ==
        doctest::Approx(q_quadrature(1.0, 2.0, 3.0)).epsilon(1e-8));
  // Nonnegative, nonincreasing and convex in t (sampled second differences).
  double prev = q_m(-8.0, stats_of(1.0, 2.0));
  double prev_slope = 0.0;
  bool first = true;
  for (double tt = -7.9; tt < 9.0; tt += 0.1) {
    const double cur = q_m(tt, stats_of(1.0, 2.0));
    CHECK(cur >= 0.0);
    CHECK(cur <= prev + 1e-12);
    const double slope = cur - prev;
    if (!first) CHECK(slope >= prev_slope - 1e-12);
    prev_slope = slope;
    prev = cur;
    first = false;
  }
  // Deterministic branch.
  CHECK(q_m(1.0, {3.0, kSigmaFloor, true}) == doctest::Approx(2.0));
  CHECK(q_m(5.0, {3.0, kSigmaFloor, true}) == doctest::Approx(0.0));
}

TEST_CASE("worst_mean: point region, unit ball, ascent oracle") {
  MeanRegion point{Vector::Constant(2, 1.5), Matrix::Identity(2, 2), 0.0};
  Vector y(2);
  y << 0.3, -0.7;
  auto [mu0, mbar0] = worst_mean(y, point);
  CHECK((mu0 - point.center).norm() == 0.0);
  CHECK(mbar0 == doctest::Approx(y.dot(point.center)));

  MeanRegion ball{Vector::Zero(2), Matrix::Identity(2, 2), 1.0};
  Vector e1(2);
  e1 << 1.0, 0.0;
  auto [mu1, mbar1] = worst_mean(e1, ball);
  CHECK(mu1[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mu1[1] == doctest::Approx(0.0));
  CHECK(mbar1 == doctest::Approx(1.0).epsilon(1e-12));

  // Random 3-D instances against projected gradient ascent in the
  // whitened coordinates (projection onto a ball is a rescale).
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    MeanRegion region;
    Matrix a(3, 3);
    for (Index r = 0; r < 3; ++r) {
      for (Index c = 0; c < 3; ++c) a(r, c) = rng.normal();
    }
    region.shape = a * a.transpose() + 0.4 * Matrix::Identity(3, 3);
    region.center = Vector::Zero(3);
    for (Index d = 0; d < 3; ++d) region.center[d] = rng.normal();
    region.radius = 0.2 + rng.uniform();
    Vector yy(3);
    for (Index d = 0; d < 3; ++d) yy[d] = rng.normal();

    const Matrix chol = Eigen::LLT<Matrix>(region.shape).matrixL();
    Vector v = Vector::Zero(3);
    const Vector grad = chol.transpose() * yy;
    for (int it = 0; it < 5000; ++it) {
      v += 0.05 * grad;
      const double norm2 = v.squaredNorm();
      if (norm2 > region.radius) v *= std::sqrt(region.radius / norm2);
    }
    const double oracle = yy.dot(region.center + chol * v);
    auto [mu_wc, mbar] = worst_mean(yy, region);
    CHECK(mbar == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(yy.dot(mu_wc) == doctest::Approx(mbar).epsilon(1e-10));
    // The maximizer stays inside the ellipsoid.
    const Vector d = mu_wc - region.center;
    CHECK(d.dot(region.shape.ldlt().solve(d)) <=
          region.radius * (1.0 + 1e-9) + 1e-12);
  }
}

TEST_CASE("worst_cov: point region, hand case, ascent oracle") {
  CovRegion point{Matrix::Identity(2, 2) * 2.0, 0.0};
  Vector y(2);
  y << 1.0, 1.0;
  auto [cov0, sbar0] = worst_cov(y, point);
  CHECK((cov0 - point.center).norm() == 0.0);
  CHECK(sbar0 == doctest::Approx(2.0));  // sqrt(y' 2I y) = sqrt(4)

  CovRegion ball{Matrix::Identity(2, 2), 1.0};
  Vector e1(2);
  e1 << 1.0, 0.0;
  auto [cov1, sbar1] = worst_cov(e1, ball);
  CHECK(cov1(0, 0) == doctest::Approx(2.0));
  CHECK(cov1(1, 1) == doctest::Approx(1.0));
  CHECK(cov1(0, 1) == doctest::Approx(0.0));
  CHECK(sbar1 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  // Random instances: ascent over rank-one perturbations u -> gamma uu'/|u|^2.
  Rng rng(84);
  for (int trial = 0; trial < 10; ++trial) {
    CovRegion region;
    Matrix a(3, 3);
    for (Index r = 0; r < 3; ++r) {
      for (Index c = 0; c < 3; ++c) a(r, c) = rng.normal();
    }
    region.center = a * a.transpose() + 0.5 * Matrix::Identity(3, 3);
    region.radius = 0.2 + rng.uniform();
    Vector yy(3);
    for (Index d = 0; d < 3; ++d) yy[d] = rng.normal();

    Vector u(3);
    for (Index d = 0; d < 3; ++d) u[d] = rng.normal();
    double best = -1e300;
    for (int it = 0; it < 20000; ++it) {
      // Gradient ascent on f(u) = (y'u)^2 / |u|^2, renormalized.
      const double proj = yy.dot(u);
      Vector grad = 2.0 * proj / u.squaredNorm() * yy -
                    2.0 * proj * proj / (u.squaredNorm() * u.squaredNorm()) * u;
      u += 0.02 * grad;
      u /= u.norm();
      const double val =
          yy.dot(region.center * yy) + region.radius * yy.dot(u) * yy.dot(u);
      best = std::max(best, val);
    }
    auto [cov_wc, sbar] = worst_cov(yy, region);
    CHECK(yy.dot(cov_wc * yy) == doctest::Approx(best).epsilon(1e-6));
    CHECK(sbar * sbar == doctest::Approx(best).epsilon(1e-10));
    CHECK((cov_wc - region.center).norm() <= region.radius + 1e-10);
    CHECK(cov_wc.isApprox(cov_wc.transpose(), 1e-12));
    CHECK(Eigen::LLT<Matrix>(cov_wc).info() == Eigen::Success);
  }
}

TEST_CASE("sort_weights: greedy fill, tie rule, vertex enumeration oracle") {
  WeightRegion region;
  region.lower = Vector::Constant(2, 0.2);
  region.upper = Vector::Constant(2, 0.8);
  Vector q(2);
  q << 3.0, 1.0;
  const Vector pi = sort_weights(region, q);
  CHECK(pi[0] == doctest::Approx(0.8));
  CHECK(pi[1] == doctest::Approx(0.2));

  // All scores equal: deterministic fill in index order from lower bounds.
  Vector tie = Vector::Constant(2, 5.0);
  const Vector pt = sort_weights(region, tie);
  CHECK(pt[0] == doctest::Approx(0.8));
  CHECK(pt[1] == doctest::Approx(0.2));

  // M=4 random boxes against explicit LP-vertex enumeration.
  Rng rng(4242);
  for (int trial = 0; trial < 25; ++trial) {
    WeightRegion r4;
    r4.lower.resize(4);
    r4.upper.resize(4);
    for (Index k = 0; k < 4; ++k) {
      const double c = rng.uniform() * 0.5;
      r4.lower[k] = std::max(0.0, c - 0.2 * rng.uniform());
      r4.upper[k] = std::min(1.0, c + 0.2 + 0.3 * rng.uniform());
    }
    // Make the box intersect the simplex.
    if (r4.lower.sum() > 1.0) r4.lower *= 0.9 / r4.lower.sum();
    if (r4.upper.sum() < 1.0) r4.upper.array() += (1.0 - r4.upper.sum());
    r4.upper = r4.upper.cwiseMin(1.0);
    if (r4.upper.sum() < 1.0) continue;
    Vector scores(4);
    for (Index k = 0; k < 4; ++k) scores[k] = rng.normal();

    double best = -1e300;
    for (int mask = 0; mask < 16; ++mask) {
      for (int frac = -1; frac < 4; ++frac) {
        Vector cand(4);
        bool ok = true;
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (k == frac) continue;
          cand[k] = (mask & (1 << k)) ? r4.upper[k] : r4.lower[k];
          sum += cand[k];
        }
        if (frac >= 0) {
          cand[frac] = 1.0 - sum;
          ok = cand[frac] >= r4.lower[frac] - 1e-12 &&
               cand[frac] <= r4.upper[frac] + 1e-12;
        } else {
          ok = std::fabs(sum - 1.0) <= 1e-12;
        }
        if (ok) best = std::max(best, scores.dot(cand));
      }
    }
    const Vector opt = sort_weights(r4, scores);
    CHECK(std::fabs(opt.sum() - 1.0) < 1e-12);
    CHECK(scores.dot(opt) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("bisect_var: Gaussian quantile, collapsed mixture, grid oracle") {
  WeightRegion one;
  one.lower = Vector::Constant(1, 1.0);
  one.upper = Vector::Constant(1, 1.0);
  auto [pi1, var1] = bisect_var({stats_of(0.0, 1.0)}, one, 0.05);
  CHECK(var1 == doctest::Approx(1.6448536269514722).epsilon(1e-4));
  CHECK(pi1[0] == doctest::Approx(1.0));

  // Two identical components collapse to the single-component answer.
  WeightRegion two;
  two.lower = Vector::Constant(2, 0.0);
  two.upper = Vector::Constant(2, 1.0);
  auto [pi2, var2] =
      bisect_var({stats_of(0.0, 1.0), stats_of(0.0, 1.0)}, two, 0.05);
  CHECK(var2 == doctest::Approx(var1).epsilon(1e-5));

  // Free weights with separated components against a fine grid search.
  const std::vector<ComponentStats> stats = {stats_of(0.0, 1.0),
                                             stats_of(4.0, 1.0)};
  const double beta = 0.1;
  auto t_fun = [&](double t) {
    Vector q(2);
    q[0] = q_m(t, stats[0]);
    q[1] = q_m(t, stats[1]);
    const Vector pi = sort_weights(two, q);
    return t + (pi[0] * q[0] + pi[1] * q[1]) / beta;
  };
  double grid_t = 0.0, grid_val = 1e300;
  for (double t = -2.0; t <= 10.0; t += 1e-3) {
    const double v = t_fun(t);
    if (v < grid_val) {
      grid_val = v;
      grid_t = t;
    }
  }
  for (double t = grid_t - 2e-3; t <= grid_t + 2e-3; t += 1e-6) {
    const double v = t_fun(t);
    if (v < grid_val) {
      grid_val = v;
      grid_t = t;
    }
  }
  auto [pi3, var3] = bisect_var(stats, two, beta);
  CHECK(var3 == doctest::Approx(grid_t).epsilon(1e-4));
  CHECK(t_fun(var3) == doctest::Approx(grid_val).epsilon(1e-6));
}

TEST_CASE("wc_cvar: Gaussian closed form on a singleton set") {
  GmmParams params;
  params.weights = Vector::Constant(1, 1.0);
  params.means = {Vector::Zero(1)};
  params.covariances = {Matrix::Identity(1, 1)};
  const AmbiguitySet amb = singleton_ambiguity(params);
  const WcCvarResult res = wc_cvar(Vector::Constant(1, 1.0), amb, 0.05);
  CHECK(res.cvar == doctest::Approx(2.0627128075074275).epsilon(1e-4));
  CHECK(res.var == doctest::Approx(1.6448536269514722).epsilon(1e-4));
}

TEST_CASE("wc_cvar never decreases when a region grows") {
  Rng rng(7);
  const GmmParams params = random_gmm(2, 2, &rng);
  const AmbiguitySet tight = singleton_ambiguity(params);
  Vector y(2);
  y << 1.0, -0.5;
  const double base = wc_cvar(y, tight, 0.1).cvar;

  AmbiguitySet wider = tight;
  wider.mean_regions[0].radius = 1.0;
  CHECK(wc_cvar(y, wider, 0.1).cvar >= base - 1e-12);
  wider.cov_regions[1].radius = 1.0;
  const double with_cov = wc_cvar(y, wider, 0.1).cvar;
  CHECK(with_cov >= base - 1e-12);
  wider.weight_region.lower.setZero();
  wider.weight_region.upper.setOnes();
  CHECK(wc_cvar(y, wider, 0.1).cvar >= with_cov - 1e-12);
}

TEST_CASE("wc_cvar matches a frozen scalar-mixture reference") {
  // pi = (0.3, 0.7), projected stats (0,1) and (4,2), beta = 0.1; the
  // reference minimum of T(t) was computed by an external 1-D optimizer.
  GmmParams params;
  params.weights.resize(2);
  params.weights << 0.3, 0.7;
  params.means = {Vector::Zero(1), Vector::Constant(1, 4.0)};
  params.covariances = {Matrix::Identity(1, 1), Matrix::Identity(1, 1) * 4.0};
  const WcCvarResult res =
      wc_cvar(Vector::Constant(1, 1.0), singleton_ambiguity(params), 0.1);
  CHECK(res.var == doctest::Approx(6.135141048655404).epsilon(1e-4));
  CHECK(res.cvar == doctest::Approx(7.159031157138954).epsilon(1e-6));
}

TEST_CASE("wc_cvar matches Monte-Carlo on singleton mixtures") {
  // Five independent instances; at 3 standard errors an occasional single
  // miss is expected, two simultaneous ones are not.
  Rng rng(99);
  int misses = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const GmmParams params = random_gmm(1 + trial % 3, 2, &rng);
    Vector y(2);
    y << rng.normal(), rng.normal() + 0.2;
    const double beta = 0.04 + 0.02 * trial;
    const WcCvarResult res =
        wc_cvar(y, singleton_ambiguity(params), beta);
    const SampleSet sample =
        gmm_sample(params, 1000000, 1234 + trial);
    const auto [mc, se] = mc_cvar(y, sample.rows, beta);
    if (std::fabs(res.cvar - mc) > 3.0 * se) ++misses;
    CHECK(std::fabs(res.cvar - mc) <= 6.0 * se);
  }
  CHECK(misses <= 1);
}

TEST_CASE("cvar_fixed equals wc_cvar on the singleton set") {
  Rng rng(31);
  const GmmParams params = random_gmm(2, 3, &rng);
  Vector y(3);
  y << 0.2, -1.0, 0.7;
  const WcCvarResult a = cvar_fixed(y, params, 0.08);
  const WcCvarResult b = wc_cvar(y, singleton_ambiguity(params), 0.08);
  CHECK(a.cvar == b.cvar);
  CHECK(a.var == b.var);
  CHECK((a.gradient - b.gradient).norm() == 0.0);
}

TEST_CASE("cvar_fixed: half-tail mean and deterministic limit") {
  GmmParams params;
  params.weights = Vector::Constant(1, 1.0);
  params.means = {Vector::Zero(1)};
  params.covariances = {Matrix::Identity(1, 1)};
  const WcCvarResult res = cvar_fixed(Vector::Constant(1, 1.0), params, 0.5);
  CHECK(res.cvar == doctest::Approx(0.7978845608028654).epsilon(1e-6));

  // Near-degenerate sigma: the value approaches mu at bisection accuracy.
  GmmParams tiny;
  tiny.weights = Vector::Constant(1, 1.0);
  tiny.means = {Vector::Constant(1, 5.0)};
  tiny.covariances = {Matrix::Identity(1, 1) * 1e-20};
  const WcCvarResult det = cvar_fixed(Vector::Constant(1, 1.0), tiny, 0.1);
  CHECK(det.cvar == doctest::Approx(5.0).epsilon(1e-4));

  // Below the sigma floor the deterministic branch kicks in; the value
  // still approaches mu from the conservative side.
  GmmParams point = tiny;
  point.covariances = {Matrix::Identity(1, 1) * 1e-30};
  const WcCvarResult exact = cvar_fixed(Vector::Constant(1, 1.0), point, 0.1);
  CHECK(exact.cvar == doctest::Approx(5.0).epsilon(1e-4));
  CHECK(exact.cvar >= 5.0 - 1e-9);
  CHECK(exact.component_stats[0].deterministic);
}

TEST_CASE("moment_wc_cvar: closed form, beta limit, FD gradient") {
  Vector e1(2);
  e1 << 1.0, 0.0;
  auto [v, g] =
      moment_wc_cvar(e1, Vector::Zero(2), Matrix::Identity(2, 2), 0.25);
  CHECK(v == doctest::Approx(1.7320508075688772).epsilon(1e-12));
  CHECK(g[0] == doctest::Approx(1.7320508075688772).epsilon(1e-12));

  Vector mu(2);
  mu << 2.0, -1.0;
  auto [v1, g1] =
      moment_wc_cvar(e1, mu, Matrix::Identity(2, 2), 1.0 - 1e-12);
  CHECK(v1 == doctest::Approx(e1.dot(mu)).epsilon(1e-5));

  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a(3, 3);
    for (Index r = 0; r < 3; ++r) {
      for (Index c = 0; c < 3; ++c) a(r, c) = rng.normal();
    }
    const Matrix cov = a * a.transpose() + 0.2 * Matrix::Identity(3, 3);
    Vector m(3), y(3);
    for (Index d = 0; d < 3; ++d) {
      m[d] = rng.normal();
      y[d] = rng.normal();
    }
    auto [val, grad] = moment_wc_cvar(y, m, cov, 0.1);
    for (Index d = 0; d < 3; ++d) {
      Vector yp = y, ym = y;
      yp[d] += 1e-6;
      ym[d] -= 1e-6;
      const double fd = (moment_wc_cvar(yp, m, cov, 0.1).first -
                         moment_wc_cvar(ym, m, cov, 0.1).first) /
                        2e-6;
      CHECK(grad[d] == doctest::Approx(fd).epsilon(1e-5));
    }
    (void)val;
  }
}

TEST_CASE("gradient of wc_cvar matches finite differences (ambiguous sets)") {
  Rng rng(555);
  for (int trial = 0; trial < 10; ++trial) {
    const Index w = 2 + trial % 3;
    const GmmParams params = random_gmm(1 + trial % 3, w, &rng);
    const AmbiguitySet amb =
        trial % 2 == 0 ? random_ambiguity(params, &rng)
                       : singleton_ambiguity(params);
    Vector y(w);
    for (Index d = 0; d < w; ++d) y[d] = rng.normal() + 0.1;
    const double beta = 0.05 + 0.1 * rng.uniform();
    const WcCvarResult res = wc_cvar(y, amb, beta);
    for (Index d = 0; d < w; ++d) {
      const double h = 1e-5 * (1.0 + std::fabs(y[d]));
      Vector yp = y, ym = y;
      yp[d] += h;
      ym[d] -= h;
      const double fd =
          (wc_cvar(yp, amb, beta).cvar - wc_cvar(ym, amb, beta).cvar) /
          (2.0 * h);
      const double scale = std::max(std::fabs(fd), std::fabs(res.gradient[d]));
      if (scale > 1e-8) {
        CHECK(std::fabs(res.gradient[d] - fd) / scale <= 1e-4);
      }
    }
  }
}

TEST_CASE("internal consistency: cvar = var + tail/beta on every call") {
  Rng rng(808);
  for (int trial = 0; trial < 20; ++trial) {
    const Index w = 1 + trial % 4;
    const GmmParams params = random_gmm(1 + trial % 4, w, &rng);
    const AmbiguitySet amb = random_ambiguity(params, &rng);
    Vector y(w);
    for (Index d = 0; d < w; ++d) y[d] = rng.normal();
    const double beta = 0.02 + 0.2 * rng.uniform();
    const WcCvarResult res = wc_cvar(y, amb, beta);
    double tail = 0.0;
    for (Index k = 0; k < params.components(); ++k) {
      tail += res.worst_weights[k] * q_m(res.var, res.component_stats[k]);
    }
    CHECK(res.cvar ==
          doctest::Approx(res.var + tail / beta).epsilon(1e-8));
  }
}

TEST_CASE("wc_cvar is monotone decreasing in beta") {
  Rng rng(64);
  const GmmParams params = random_gmm(2, 2, &rng);
  const AmbiguitySet amb = random_ambiguity(params, &rng);
  Vector y(2);
  y << 1.0, 0.4;
  double prev = 1e300;
  for (double beta : {0.01, 0.05, 0.1, 0.3, 0.6, 0.9}) {
    const double c = wc_cvar(y, amb, beta).cvar;
    CHECK(c <= prev + 1e-10);
    prev = c;
  }
}

TEST_CASE("dominance: ambiguous cvar is at least the fixed cvar") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const GmmParams params = random_gmm(2, 2, &rng);
    const AmbiguitySet amb = random_ambiguity(params, &rng);
    REQUIRE(contains_params(amb, params, 1e-9));
    Vector y(2);
    y << rng.normal(), rng.normal();
    const double beta = 0.04;
    CHECK(wc_cvar(y, amb, beta).cvar >=
          cvar_fixed(y, params, beta).cvar - 1e-9);
  }
}

TEST_CASE("degenerate exposure takes the zero path") {
  Rng rng(3);
  const GmmParams params = random_gmm(2, 3, &rng);
  const AmbiguitySet amb = random_ambiguity(params, &rng);
  const WcCvarResult res = wc_cvar(Vector::Zero(3), amb, 0.05);
  CHECK(res.cvar == 0.0);
  CHECK(res.var == 0.0);
  CHECK(res.gradient.norm() == 0.0);
}

TEST_CASE("cutting planes are tangent and under-estimate globally") {
  Rng rng(2718);
  const GmmParams params = random_gmm(2, 3, &rng);
  const AmbiguitySet amb = random_ambiguity(params, &rng);
  const double beta = 0.06;
  Vector y_star(3);
  y_star << 1.2, -0.4, 0.8;
  const WcCvarResult res = wc_cvar(y_star, amb, beta);
  const CuttingPlane cut = cutting_plane(res, y_star);
  CHECK(cut.value_at(y_star) == doctest::Approx(res.cvar).epsilon(1e-12));
  for (int i = 0; i < 20; ++i) {
    Vector y(3);
    for (Index d = 0; d < 3; ++d) y[d] = 2.0 * rng.normal();
    CHECK(cut.value_at(y) <= wc_cvar(y, amb, beta).cvar + 1e-7);
  }
}

TEST_CASE("positive homogeneity for zero-mean singleton sets") {
  GmmParams params;
  params.weights.resize(2);
  params.weights << 0.6, 0.4;
  params.means = {Vector::Zero(2), Vector::Zero(2)};
  Matrix c1(2, 2), c2(2, 2);
  c1 << 2.0, 0.3, 0.3, 1.0;
  c2 << 0.5, -0.1, -0.1, 1.5;
  params.covariances = {c1, c2};
  const AmbiguitySet amb = singleton_ambiguity(params);
  Vector y(2);
  y << 0.7, -0.2;
  const double beta = 0.05;
  const WcCvarResult at_y = wc_cvar(y, amb, beta);
  // The Euler identity grad(y).y = cvar(y) holds to bisection accuracy.
  for (double c : {0.5, 2.0, 7.5}) {
    CHECK(wc_cvar(c * y, amb, beta).cvar ==
          doctest::Approx(c * at_y.cvar).epsilon(1e-6));
    const CuttingPlane cut = cutting_plane(at_y, y);
    CHECK(cut.value_at(c * y) == doctest::Approx(c * at_y.cvar).epsilon(1e-4));
  }
}
