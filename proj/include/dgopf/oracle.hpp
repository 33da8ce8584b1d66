// Independent verification tools: Monte-Carlo CVaR estimation, out-of-sample
// testing of a fixed dispatch, and Gaussian-copula generation of correlated
// non-Gaussian forecast errors.
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dgopf/opf.hpp"
#include "dgopf/types.hpp"

namespace dgopf {

struct ScenarioSet {
  Matrix rows;  // n x W, MW
  std::vector<std::string> columns;
  std::uint64_t seed = 0;
  std::string provenance;
};

/// Mean of the top ceil(beta * n) projected values plus an approximate
/// standard error from the tail-sample variance. Returns {estimate, stderr}.
std::pair<double, double> mc_cvar(const Vector& y, const Matrix& scenarios,
                                  double beta);

struct OosRow {
  ConstraintKind kind = ConstraintKind::branch_upper;
  int entity = 0;
  double empirical_cvar = 0.0;  // MW
  double threshold = 0.0;       // MW
  double violation = 0.0;       // empirical - threshold; positive = violated
  double stderr_mw = 0.0;
};

struct OosReport {
  std::vector<OosRow> rows;
  bool pass = true;  // no positive violations
};

/// Evaluates every constraint of a fixed dispatch against scenarios.
OosReport out_of_sample_test(const DispatchSolution& sol,
                             const std::vector<RandomConstraintSpec>& specs,
                             const ScenarioSet& scenarios);

// Supported marginal families for synthetic error generation.
struct NormalMarginal {
  double mean = 0.0;
  double sd = 1.0;
};
struct UniformMarginal {
  double lo = 0.0;
  double hi = 1.0;
};
struct BetaMarginal {
  double alpha = 2.0;
  double beta = 2.0;
  double shift = 0.0;
  double scale = 1.0;
};
struct GmmMarginal {  // 1-D mixture
  Vector weights;
  Vector means;
  Vector sds;
};
using Marginal =
    std::variant<NormalMarginal, UniformMarginal, BetaMarginal, GmmMarginal>;

/// Inverse CDF of a marginal at u in (0,1).
double marginal_ppf(const Marginal& marginal, double u);

/// Mean of a marginal (analytic).
double marginal_mean(const Marginal& marginal);

struct SynthSpec {
  std::vector<Marginal> marginals;
  std::vector<std::string> names;
  Matrix correlation;  // W x W, unit diagonal
};

struct SynthResult {
  ScenarioSet scenarios;
  std::vector<std::string> warnings;  // e.g. correlation PSD repair
};

/// Gaussian copula: correlated standard normals mapped through Phi and each
/// marginal's inverse CDF. A slightly non-PSD correlation is repaired by
/// eigenvalue clipping (warning beyond 1e-8).
SynthResult synth_wind_errors(const SynthSpec& spec, Index n,
                              std::uint64_t seed);

}  // namespace dgopf
