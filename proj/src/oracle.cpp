#include "dgopf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgopf/rng.hpp"
#include "dgopf/special.hpp"

namespace dgopf {

std::pair<double, double> mc_cvar(const Vector& y, const Matrix& scenarios,
                                  double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error("mc_cvar: beta in (0,1)");
  const Index n = scenarios.rows();
  if (scenarios.cols() != y.size()) {
    throw Error("mc_cvar: scenario dimension mismatch");
  }
  if (n < 1 || static_cast<double>(n) * beta < 1.0) {
    throw Error("mc_cvar: need at least 1/beta scenarios for a tail sample");
  }
  const Index k = static_cast<Index>(
      std::ceil(beta * static_cast<double>(n) - 1e-12));
  Vector z = scenarios * y;
  std::nth_element(z.data(), z.data() + (n - k), z.data() + n);
  const auto tail_begin = z.data() + (n - k);
  double mean = 0.0;
  for (auto it = tail_begin; it != z.data() + n; ++it) mean += *it;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (auto it = tail_begin; it != z.data() + n; ++it) {
    var += (*it - mean) * (*it - mean);
  }
  var /= std::max<Index>(k - 1, 1);
  return {mean, std::sqrt(var / static_cast<double>(k))};
}

OosReport out_of_sample_test(const DispatchSolution& sol,
                             const std::vector<RandomConstraintSpec>& specs,
                             const ScenarioSet& scenarios) {
  DecisionLayout layout;
  layout.n_gen = sol.p_hat.size();
  layout.n_line = sol.flow.size();
  const Vector x = sol.pack(layout);
  OosReport report;
  for (const RandomConstraintSpec& spec : specs) {
    OosRow row;
    row.kind = spec.kind;
    row.entity = spec.entity;
    const Vector y = spec.exposure_at(x);
    if (y.lpNorm<Eigen::Infinity>() == 0.0) {
      row.empirical_cvar = 0.0;
      row.stderr_mw = 0.0;
    } else {
      const auto [est, se] = mc_cvar(y, scenarios.rows, spec.beta);
      row.empirical_cvar = est;
      row.stderr_mw = se;
    }
    row.threshold = spec.threshold_at(x);
    row.violation = row.empirical_cvar - row.threshold;
    if (row.violation > 0.0) report.pass = false;
    report.rows.push_back(row);
  }
  return report;
}

double marginal_ppf(const Marginal& marginal, double u) {
  if (!(u > 0.0 && u < 1.0)) throw Error("marginal_ppf: u in (0,1)");
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NormalMarginal>) {
          return m.mean + m.sd * norm_ppf(u);
        } else if constexpr (std::is_same_v<T, UniformMarginal>) {
          return m.lo + (m.hi - m.lo) * u;
        } else if constexpr (std::is_same_v<T, BetaMarginal>) {
          return m.shift + m.scale * betainc_inv(m.alpha, m.beta, u);
        } else {
          // Mixture CDF inversion: bisection with Newton polish.
          const Index k = m.weights.size();
          double lo = std::numeric_limits<double>::infinity();
          double hi = -std::numeric_limits<double>::infinity();
          for (Index i = 0; i < k; ++i) {
            lo = std::min(lo, m.means[i] - 12.0 * m.sds[i]);
            hi = std::max(hi, m.means[i] + 12.0 * m.sds[i]);
          }
          auto cdf = [&](double x) {
            double acc = 0.0;
            for (Index i = 0; i < k; ++i) {
              acc += m.weights[i] * norm_cdf(x, m.means[i], m.sds[i]);
            }
            return acc;
          };
          auto pdf = [&](double x) {
            double acc = 0.0;
            for (Index i = 0; i < k; ++i) {
              acc += m.weights[i] * norm_pdf(x, m.means[i], m.sds[i]);
            }
            return acc;
          };
          double x = 0.5 * (lo + hi);
          for (int it = 0; it < 100; ++it) {
            const double f = cdf(x) - u;
            if (f > 0.0) {
              hi = x;
            } else {
              lo = x;
            }
            const double d = pdf(x);
            double xn = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
            if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
            if (std::fabs(xn - x) < 1e-12 * (1.0 + std::fabs(x))) return xn;
            x = xn;
          }
          return x;
        }
      },
      marginal);
}

double marginal_mean(const Marginal& marginal) {
  return std::visit(
      [](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NormalMarginal>) {
          return m.mean;
        } else if constexpr (std::is_same_v<T, UniformMarginal>) {
          return 0.5 * (m.lo + m.hi);
        } else if constexpr (std::is_same_v<T, BetaMarginal>) {
          return m.shift + m.scale * m.alpha / (m.alpha + m.beta);
        } else {
          return m.weights.dot(m.means) / m.weights.sum();
        }
      },
      marginal);
}

SynthResult synth_wind_errors(const SynthSpec& spec, Index n,
                              std::uint64_t seed) {
  const Index w = static_cast<Index>(spec.marginals.size());
  if (w == 0) throw Error("synth_wind_errors: no marginals");
  if (n < 1) throw Error("synth_wind_errors: n must be >= 1");
  if (spec.correlation.rows() != w || spec.correlation.cols() != w) {
    throw Error("synth_wind_errors: correlation must be W x W");
  }
  if (!spec.correlation.isApprox(spec.correlation.transpose(), 1e-10)) {
    throw Error("synth_wind_errors: correlation must be symmetric");
  }
  for (Index i = 0; i < w; ++i) {
    if (std::fabs(spec.correlation(i, i) - 1.0) > 1e-10) {
      throw Error("synth_wind_errors: correlation diagonal must be 1");
    }
  }

  SynthResult out;
  Matrix corr = spec.correlation;
  Eigen::SelfAdjointEigenSolver<Matrix> es(corr);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < 0.0) {
    if (min_eig < -1e-8) {
      out.warnings.push_back(
          "correlation matrix repaired by eigenvalue clipping (min eigenvalue " +
          std::to_string(min_eig) + ")");
    }
    Vector clipped = es.eigenvalues().cwiseMax(0.0);
    corr = es.eigenvectors() * clipped.asDiagonal() *
           es.eigenvectors().transpose();
    // Restore the unit diagonal lost by clipping.
    Vector d = corr.diagonal().cwiseSqrt().cwiseInverse();
    corr = d.asDiagonal() * corr * d.asDiagonal();
  }
  Eigen::LLT<Matrix> llt(corr + 1e-12 * Matrix::Identity(w, w));
  if (llt.info() != Eigen::Success) {
    throw Error("synth_wind_errors: correlation factorization failed");
  }
  const Matrix chol = llt.matrixL();

  Rng rng = Rng::derive(seed, 0x6e61746146ULL);
  ScenarioSet& sc = out.scenarios;
  sc.rows.resize(n, w);
  sc.columns = spec.names;
  sc.seed = seed;
  sc.provenance = "gaussian-copula";
  Vector z(w);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < w; ++d) z[d] = rng.normal();
    const Vector corr_z = chol * z;
    for (Index d = 0; d < w; ++d) {
      const double u =
          std::clamp(norm_cdf(corr_z[d]), 1e-16, 1.0 - 1e-16);
      sc.rows(i, d) = marginal_ppf(spec.marginals[d], u);
    }
  }
  return out;
}

}  // namespace dgopf
