// Dispatch model assembly and the iterative cutting-plane solve: master
// problem construction, canonical random constraints, precomputed reserve
// requirements and the outer loop that adds CVaR cuts until feasible.
#pragma once

#include <string>
#include <variant>
#include <vector>

#include "dgopf/case_model.hpp"
#include "dgopf/qp.hpp"
#include "dgopf/wccvar.hpp"

namespace dgopf {

/// Index map of the decision vector x = (p_hat, R_up, R_dn, alpha; f_hat).
struct DecisionLayout {
  Index n_gen = 0;
  Index n_line = 0;

  Index size() const { return 4 * n_gen + n_line; }
  Index p_hat(Index g) const { return g; }
  Index r_up(Index g) const { return n_gen + g; }
  Index r_dn(Index g) const { return 2 * n_gen + g; }
  Index alpha(Index g) const { return 3 * n_gen + g; }
  Index flow(Index l) const { return 4 * n_gen + l; }
};

enum class ConstraintKind { branch_upper, branch_lower, reserve_up, reserve_dn };

std::string to_string(ConstraintKind kind);

/// One random constraint y_k(x)' xi <= h_k(x) in canonical affine form.
struct RandomConstraintSpec {
  ConstraintKind kind = ConstraintKind::branch_upper;
  int entity = 0;  // line index for branch kinds, generator index otherwise
  double beta = 0.0;
  Vector exposure_const;   // W
  Matrix exposure_coef;    // W x |x|
  double threshold_const = 0.0;
  Vector threshold_coef;   // |x|
  bool handled_by_theta = false;  // reserve kinds, replaced by linear rows

  Vector exposure_at(const Vector& x) const {
    return exposure_const + exposure_coef * x;
  }
  double threshold_at(const Vector& x) const {
    return threshold_const + threshold_coef.dot(x);
  }
};

struct DispatchSolution {
  Vector p_hat;  // MW
  Vector r_up;   // MW
  Vector r_dn;   // MW
  Vector alpha;  // participation factors
  Vector flow;   // MW
  double objective = 0.0;  // $
  int iterations = 0;
  int cuts_added = 0;

  Vector pack(const DecisionLayout& layout) const;
  static DispatchSolution unpack(const Vector& x, const DecisionLayout& layout);
};

/// Moment information (mean/covariance) for the moment-set model.
struct MomentSet {
  Vector mean;  // MW
  Matrix cov;   // MW^2
};

/// The three supported uncertainty descriptions: full ambiguity set,
/// fixed GMM, or first two moments.
using AmbiguitySource = std::variant<AmbiguitySet, GmmParams, MomentSet>;

Index source_dim(const AmbiguitySource& source);

/// Worst-case CVaR and gradient of y' xi under the given source.
WcCvarResult eval_cvar(const AmbiguitySource& source, const Vector& y,
                       double beta);

struct SolverConfig {
  double beta_reserve = 0.02;
  double beta_branch = 0.04;
  double tau_feas = 1e-6;  // MW
  int max_outer_iterations = 50;
  bool drop_inactive_cuts = false;
  int threads = 1;
  QpOptions qp;

  void validate() const;
};

/// Reserve requirements from the worst-case CVaR of -+1' xi (negative values
/// clamped to zero; the clamp is reported).
struct ReserveThetas {
  double theta_up = 0.0;  // MW
  double theta_dn = 0.0;  // MW
  bool clamped_up = false;
  bool clamped_dn = false;
};

ReserveThetas reserve_thetas(const AmbiguitySource& source,
                             double beta_reserve);

/// Master problem P3 rows: cost, balance, participation, flow definition,
/// reserve boxes and coupling, plus the theta reserve rows. When the case
/// has no wind farms the branch limits are enforced deterministically.
struct MasterProblem {
  QuadraticProgram qp;
  DecisionLayout layout;
};

MasterProblem build_master(const NetworkCase& nc, const PtdfSet& ptdf,
                           const ReserveThetas& thetas);

/// Two branch specs per limited line (cutting-plane managed) plus reserve
/// specs flagged handled_by_theta (kept for reporting).
std::vector<RandomConstraintSpec> assemble_random_constraints(
    const NetworkCase& nc, const PtdfSet& ptdf, const DecisionLayout& layout,
    const SolverConfig& config);

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  std::vector<int> cuts_added;  // spec indices that received a cut
  double max_violation = 0.0;   // MW
};

enum class SolveStatus { converged, dr_infeasible, iteration_limit };

struct ConstraintSlack {
  ConstraintKind kind;
  int entity = 0;
  double cvar = 0.0;       // MW
  double threshold = 0.0;  // MW
  double slack = 0.0;      // threshold - cvar; negative = violated
};

struct SolveReport {
  SolveStatus status = SolveStatus::converged;
  std::vector<IterationRecord> iterations;
  ReserveThetas thetas;
  std::vector<ConstraintSlack> final_slacks;
  std::vector<int> violated_specs;  // populated when dr_infeasible
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
};

/// One accumulated cut row coeff' x <= rhs, tagged with its source spec.
struct StoredCut {
  int spec_index = 0;
  Vector coefficients;
  double rhs = 0.0;
};

struct DroResult {
  DispatchSolution solution;
  SolveReport report;
  std::vector<StoredCut> cuts;  // rows active in the final master
};

/// Algorithm: solve the master, evaluate the worst-case CVaR of every
/// branch spec at the optimum, cut all violated ones, repeat until every
/// spec satisfies cvar <= h + tau_feas or the iteration cap is hit.
DroResult solve_dro_opf(const NetworkCase& nc, const PtdfSet& ptdf,
                        const AmbiguitySource& source,
                        const SolverConfig& config);

/// Signed slack h_k(x) - cvar_k per constraint (reserve kinds evaluated
/// through the same engine at their actual exposures).
std::vector<ConstraintSlack> check_feasibility(
    const DispatchSolution& sol, const std::vector<RandomConstraintSpec>& specs,
    const AmbiguitySource& source, const SolverConfig& config);

}  // namespace dgopf
