#include "dgopf/ambiguity.hpp"

#include <cmath>

#include <doctest.h>

#include "dgopf/rng.hpp"

using namespace dgopf;

namespace {

GmmParams single_1d(double w, double mean, double var) {
  GmmParams p;
  p.weights = Vector::Constant(1, w);
  p.means = {Vector::Constant(1, mean)};
  p.covariances = {Matrix::Identity(1, 1) * var};
  return p;
}

}  // namespace

TEST_CASE("quantile convention: interpolation at position (n-1)q") {
  CHECK(quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({10}, 0.0) == 10.0);
  CHECK(quantile({10}, 1.0) == 10.0);
  CHECK(quantile({3, 1, 2}, 1.0) == 3.0);  // unsorted input
  CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
  CHECK_THROWS_AS(quantile({1.0}, 1.5), Error);
}

TEST_CASE("bootstrap means scatter like std/sqrt(J)") {
  const Index j = 1000;
  const double sd = 2.0;
  SampleSet data;
  data.rows.resize(j, 1);
  Rng rng(100);
  for (Index i = 0; i < j; ++i) data.rows(i, 0) = sd * rng.normal();
  const FitResult base = em_fit(data, 1, std::monostate{}, 1);
  const BootstrapResult boot = bootstrap_fits(data, base, 100, 7);
  REQUIRE(boot.fits.size() == 100);
  CHECK(boot.dropped == 0);
  double mean = 0.0, var = 0.0;
  for (const GmmParams& p : boot.fits) mean += p.means[0][0];
  mean /= 100.0;
  for (const GmmParams& p : boot.fits) {
    var += (p.means[0][0] - mean) * (p.means[0][0] - mean);
  }
  var /= 99.0;
  const double theory = sd / std::sqrt(static_cast<double>(j));
  CHECK(std::sqrt(var) > 0.6 * theory);
  CHECK(std::sqrt(var) < 1.5 * theory);
}

TEST_CASE("bootstrap requires at least two resamples") {
  SampleSet data;
  data.rows = Matrix::Random(20, 1);
  const FitResult base = em_fit(data, 1, std::monostate{}, 1);
  CHECK_THROWS_WITH_AS(bootstrap_fits(data, base, 1, 0),
                       doctest::Contains("N >= 2"), Error);
}

TEST_CASE("identical rows give identical bootstrap fits") {
  SampleSet data;
  data.rows = Matrix::Constant(12, 1, 3.5);
  const FitResult base = em_fit(data, 1, std::monostate{}, 1);
  const BootstrapResult boot = bootstrap_fits(data, base, 10, 9);
  for (const GmmParams& p : boot.fits) {
    CHECK(p.means[0][0] == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(p.covariances[0](0, 0) ==
          doctest::Approx(boot.fits[0].covariances[0](0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap is deterministic and thread-count independent") {
  SampleSet data;
  data.rows.resize(60, 1);
  Rng rng(4);
  for (Index i = 0; i < 60; ++i) data.rows(i, 0) = rng.normal();
  const FitResult base = em_fit(data, 1, std::monostate{}, 1);
  const BootstrapResult a = bootstrap_fits(data, base, 24, 5, {}, 1);
  const BootstrapResult b = bootstrap_fits(data, base, 24, 5, {}, 4);
  REQUIRE(a.fits.size() == b.fits.size());
  for (size_t n = 0; n < a.fits.size(); ++n) {
    CHECK(a.fits[n].means[0][0] == b.fits[n].means[0][0]);
    CHECK(a.fits[n].covariances[0](0, 0) == b.fits[n].covariances[0](0, 0));
  }
}

TEST_CASE("weight region from identical and spread bootstrap weights") {
  std::vector<GmmParams> boot;
  for (int n = 0; n < 50; ++n) {
    GmmParams p;
    p.weights.resize(2);
    p.weights << 0.3, 0.7;
    p.means = {Vector::Zero(1), Vector::Zero(1)};
    p.covariances = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
    boot.push_back(p);
  }
  const WeightRegion tight = build_weight_region(boot, 0.95);
  CHECK(tight.lower[0] == doctest::Approx(0.3));
  CHECK(tight.upper[0] == doctest::Approx(0.3));
  CHECK(tight.lower[1] == doctest::Approx(0.7));

  // Mirrored uniform weights on [0.4, 0.6].
  std::vector<GmmParams> spread;
  Rng rng(2000);
  for (int n = 0; n < 2000; ++n) {
    GmmParams p;
    const double w = 0.4 + 0.2 * rng.uniform();
    p.weights.resize(2);
    p.weights << w, 1.0 - w;
    p.means = {Vector::Zero(1), Vector::Zero(1)};
    p.covariances = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
    spread.push_back(p);
  }
  const WeightRegion wr = build_weight_region(spread, 0.95);
  CHECK(wr.lower[0] == doctest::Approx(0.405).epsilon(0.03));
  CHECK(wr.upper[0] == doctest::Approx(0.595).epsilon(0.03));

  const WeightRegion full = build_weight_region(spread, 1.0);
  double min_w = 1.0, max_w = 0.0;
  for (const GmmParams& p : spread) {
    min_w = std::min(min_w, p.weights[0]);
    max_w = std::max(max_w, p.weights[0]);
  }
  CHECK(full.lower[0] == doctest::Approx(min_w));
  CHECK(full.upper[0] == doctest::Approx(max_w));
}

TEST_CASE("mean region: point, chi-square radius, two-sample hand case") {
  std::vector<GmmParams> equal(5, single_1d(1.0, 2.5, 1.0));
  const MeanRegion point = build_mean_region(equal, 0, 0.95);
  CHECK(point.radius == doctest::Approx(0.0));
  CHECK(point.center[0] == doctest::Approx(2.5));

  // Bootstrap means i.i.d. N(0, I_2): the 0.95 Mahalanobis-squared quantile
  // approaches the chi-square(2) quantile 5.991.
  std::vector<GmmParams> chi;
  Rng rng(31);
  for (int n = 0; n < 4000; ++n) {
    GmmParams p;
    p.weights = Vector::Constant(1, 1.0);
    Vector m(2);
    m << rng.normal(), rng.normal();
    p.means = {m};
    p.covariances = {Matrix::Identity(2, 2)};
    chi.push_back(p);
  }
  const MeanRegion mr = build_mean_region(chi, 0, 0.95);
  CHECK(mr.radius == doctest::Approx(5.991464547107979).epsilon(0.10));

  // N=2 in 1-D with means {0, 2}: center 1, shape 2, both distances 0.5.
  std::vector<GmmParams> pair = {single_1d(1.0, 0.0, 1.0),
                                 single_1d(1.0, 2.0, 1.0)};
  for (double delta : {0.0, 0.5, 1.0}) {
    const MeanRegion two = build_mean_region(pair, 0, delta);
    CHECK(two.center[0] == doctest::Approx(1.0));
    CHECK(two.shape(0, 0) == doctest::Approx(2.0));
    CHECK(two.radius == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("cov region: point, hand Frobenius case, quantile endpoint") {
  std::vector<GmmParams> equal(4, single_1d(1.0, 0.0, 2.0));
  CHECK(build_cov_region(equal, 0, 0.9).radius == doctest::Approx(0.0));

  GmmParams a, b;
  a.weights = b.weights = Vector::Constant(1, 1.0);
  a.means = b.means = {Vector::Zero(2)};
  a.covariances = {Matrix::Identity(2, 2)};
  b.covariances = {Matrix::Identity(2, 2) * 3.0};
  std::vector<GmmParams> two = {a, b};
  for (double delta : {0.0, 0.5, 1.0}) {
    const CovRegion cr = build_cov_region(two, 0, delta);
    CHECK((cr.center - Matrix::Identity(2, 2) * 2.0).norm() < 1e-12);
    CHECK(cr.radius == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }

  // delta = 0 picks the smallest distance.
  GmmParams c = b;
  c.covariances = {Matrix::Identity(2, 2) * 1.5};
  std::vector<GmmParams> three = {a, b, c};
  const CovRegion cr0 = build_cov_region(three, 0, 0.0);
  // center = (1 + 3 + 1.5)/3 * I; closest is c.
  const Matrix center = Matrix::Identity(2, 2) * (5.5 / 3.0);
  CHECK(cr0.radius ==
        doctest::Approx((c.covariances[0] - center).norm()).epsilon(1e-12));
}

TEST_CASE("alignment: permuted components are restored; idempotent") {
  GmmParams base;
  base.weights.resize(3);
  base.weights << 0.2, 0.3, 0.5;
  base.means = {Vector::Constant(2, -4.0), Vector::Constant(2, 0.0),
                Vector::Constant(2, 4.0)};
  base.covariances = {Matrix::Identity(2, 2), Matrix::Identity(2, 2) * 2.0,
                      Matrix::Identity(2, 2) * 3.0};
  GmmParams shuffled;
  shuffled.weights.resize(3);
  shuffled.weights << 0.5, 0.2, 0.3;
  shuffled.means = {base.means[2], base.means[0], base.means[1]};
  shuffled.covariances = {base.covariances[2], base.covariances[0],
                          base.covariances[1]};
  const auto perm = align_components(base, shuffled);
  const GmmParams aligned = apply_alignment(shuffled, perm);
  for (Index k = 0; k < 3; ++k) {
    CHECK(aligned.weights[k] == base.weights[k]);
    CHECK((aligned.means[k] - base.means[k]).norm() == 0.0);
  }
  // Aligning an aligned fit is the identity.
  const auto again = align_components(base, aligned);
  for (Index k = 0; k < 3; ++k) CHECK(again[k] == k);
}

TEST_CASE("monotonicity of regions in delta") {
  std::vector<GmmParams> boot;
  Rng rng(61);
  for (int n = 0; n < 300; ++n) {
    GmmParams p;
    p.weights.resize(2);
    const double w = 0.35 + 0.3 * rng.uniform();
    p.weights << w, 1.0 - w;
    Vector m1(1), m2(1);
    m1 << rng.normal();
    m2 << 5.0 + rng.normal();
    p.means = {m1, m2};
    p.covariances = {Matrix::Identity(1, 1) * (1.0 + rng.uniform()),
                     Matrix::Identity(1, 1) * (2.0 + rng.uniform())};
    boot.push_back(p);
  }
  double prev_mu = -1.0, prev_cov = -1.0, prev_lo = -1.0, prev_hi = 2.0;
  for (double delta : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    const MeanRegion mr = build_mean_region(boot, 0, delta);
    const CovRegion cr = build_cov_region(boot, 0, delta);
    const WeightRegion wr = build_weight_region(boot, delta);
    CHECK(mr.radius >= prev_mu);
    CHECK(cr.radius >= prev_cov);
    if (prev_lo >= 0.0) {
      CHECK(wr.lower[0] <= prev_lo + 1e-15);
      CHECK(wr.upper[0] >= prev_hi - 1e-15);
    }
    prev_mu = mr.radius;
    prev_cov = cr.radius;
    prev_lo = wr.lower[0];
    prev_hi = wr.upper[0];
  }
}

TEST_CASE("degenerate data collapse the ambiguity set to a singleton") {
  SampleSet data;
  data.rows = Matrix::Constant(15, 1, -2.0);
  const AmbiguityBuild build = build_ambiguity_set(data, 0.95, 20, 1, 1, 3);
  CHECK(build.set.mean_regions[0].radius == doctest::Approx(0.0));
  CHECK(build.set.cov_regions[0].radius == doctest::Approx(0.0));
  CHECK(build.set.weight_region.lower[0] == doctest::Approx(1.0));
  CHECK(contains_params(build.set, build.base.params, 1e-6));
}

TEST_CASE("true mean is covered by the 0.95 region in most trials") {
  // Loose coverage audit: 50 independent Gaussian datasets, count how often
  // the true mean falls inside the delta=0.95 mean region.
  int covered = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SampleSet data;
    data.rows.resize(120, 1);
    Rng rng(5000 + trial);
    for (Index i = 0; i < 120; ++i) data.rows(i, 0) = 1.0 + 2.0 * rng.normal();
    const FitResult base = em_fit(data, 1, std::monostate{}, 1);
    const BootstrapResult boot = bootstrap_fits(data, base, 80, 99 + trial);
    const MeanRegion mr = build_mean_region(boot.fits, 0, 0.95);
    const Vector d = Vector::Constant(1, 1.0) - mr.center;
    const double mahal = d.dot(mr.shape.ldlt().solve(d));
    if (mahal <= mr.radius) ++covered;
  }
  CHECK(covered >= 40);
}

TEST_CASE("full ambiguity build yields nonempty regions on mixture data") {
  SampleSet data;
  data.rows.resize(600, 2);
  Rng rng(808);
  for (Index i = 0; i < 600; ++i) {
    const bool left = rng.uniform() < 0.4;
    data.rows(i, 0) = (left ? -6.0 : 6.0) + rng.normal();
    data.rows(i, 1) = (left ? -6.0 : 6.0) + 1.5 * rng.normal();
  }
  const AmbiguityBuild build = build_ambiguity_set(data, 0.95, 100, 2, 2, 17);
  validate_ambiguity(build.set);
  CHECK(build.set.components() == 2);
  CHECK(build.set.mean_regions[0].radius > 0.0);
  CHECK(build.set.cov_regions[0].radius > 0.0);
  CHECK(build.set.weight_region.upper[0] > build.set.weight_region.lower[0]);
  CHECK(contains_params(build.set, build.base.params, 1e-6));
}
