// Dense convex quadratic programming by an infeasible primal-dual
// interior-point method (Mehrotra predictor-corrector).
#pragma once

#include <string>

#include "dgopf/types.hpp"

namespace dgopf {

/// min sum_i q_i x_i^2 + c' x + c0
/// s.t. a_eq x = b_eq, a_in x <= b_in, lo <= x <= up.
/// q must be nonnegative (convexity); bounds may be +-infinity.
struct QuadraticProgram {
  Vector q;
  Vector c;
  double c0 = 0.0;
  Matrix a_eq;
  Vector b_eq;
  Matrix a_in;
  Vector b_in;
  Vector lo;
  Vector up;

  Index n() const { return c.size(); }
  double objective(const Vector& x) const {
    return q.dot(x.cwiseProduct(x)) + c.dot(x) + c0;
  }
  void validate() const;
};

enum class QpStatus { optimal, infeasible, unbounded, max_iter };

std::string to_string(QpStatus status);

struct QpSolution {
  QpStatus status = QpStatus::max_iter;
  Vector x;
  double objective = 0.0;
  Vector eq_duals;  // one per a_eq row
  Vector in_duals;  // one per a_in row, >= 0
  Vector lo_duals;  // one per variable, >= 0 (0 where the bound is infinite)
  Vector up_duals;
  int iterations = 0;
};

struct QpOptions {
  int max_iter = 200;
  double tol = 1e-9;  // residual targets scale with the problem data
};

/// Deterministic given the input. Infeasible and unbounded instances are
/// reported through the status, not exceptions; numerical breakdown throws.
QpSolution solve_qp(const QuadraticProgram& p, const QpOptions& options = {});

/// Max-norm KKT residuals of a candidate solution, for checks and reports:
/// {primal feasibility, stationarity, complementary slackness}.
struct KktResiduals {
  double primal = 0.0;
  double stationarity = 0.0;
  double complementarity = 0.0;
};

KktResiduals kkt_residuals(const QuadraticProgram& p, const QpSolution& sol);

}  // namespace dgopf
