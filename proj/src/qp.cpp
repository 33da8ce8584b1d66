#include "dgopf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dgopf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void QuadraticProgram::validate() const {
  const Index nv = n();
  if (q.size() != nv || lo.size() != nv || up.size() != nv) {
    throw Error("qp: q/lo/up must match the variable count");
  }
  if (q.size() > 0 && q.minCoeff() < 0.0) {
    throw Error("qp: negative curvature (problem not convex)");
  }
  if (a_eq.size() > 0 && (a_eq.cols() != nv || a_eq.rows() != b_eq.size())) {
    throw Error("qp: equality system dimensions inconsistent");
  }
  if (a_in.size() > 0 && (a_in.cols() != nv || a_in.rows() != b_in.size())) {
    throw Error("qp: inequality system dimensions inconsistent");
  }
  for (Index i = 0; i < nv; ++i) {
    if (lo[i] > up[i]) {
      throw Error("qp: lo > up for variable " + std::to_string(i));
    }
  }
}

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::unbounded: return "unbounded";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

namespace {

// Inequalities with the bounds folded in: rows of a_in, then finite upper
// bounds, then finite lower bounds (negated).
struct Folded {
  Matrix g;     // m x n
  Vector h;     // m
  std::vector<Index> up_vars;  // variable index per upper-bound row
  std::vector<Index> lo_vars;
};

Folded fold_inequalities(const QuadraticProgram& p) {
  const Index nv = p.n();
  const Index mi = p.a_in.rows();
  Folded f;
  for (Index i = 0; i < nv; ++i) {
    if (p.up[i] < kInf) f.up_vars.push_back(i);
  }
  for (Index i = 0; i < nv; ++i) {
    if (p.lo[i] > -kInf) f.lo_vars.push_back(i);
  }
  const Index m = mi + static_cast<Index>(f.up_vars.size()) +
                  static_cast<Index>(f.lo_vars.size());
  f.g = Matrix::Zero(m, nv);
  f.h = Vector::Zero(m);
  if (mi > 0) {
    f.g.topRows(mi) = p.a_in;
    f.h.head(mi) = p.b_in;
  }
  Index r = mi;
  for (Index i : f.up_vars) {
    f.g(r, i) = 1.0;
    f.h[r] = p.up[i];
    ++r;
  }
  for (Index i : f.lo_vars) {
    f.g(r, i) = -1.0;
    f.h[r] = -p.lo[i];
    ++r;
  }
  return f;
}

struct KktSolver {
  Eigen::PartialPivLU<Matrix> lu;
  Index nv = 0, me = 0;

  // Factors [H + G'WG + dx*I, A'; A, -dy*I].
  void factor(const Matrix& hess, const Matrix& a_eq, const Matrix& g,
              const Vector& w, double dx, double dy) {
    nv = hess.rows();
    me = a_eq.rows();
    Matrix kkt = Matrix::Zero(nv + me, nv + me);
    kkt.topLeftCorner(nv, nv) = hess;
    if (g.rows() > 0) {
      kkt.topLeftCorner(nv, nv) +=
          g.transpose() * w.asDiagonal() * g;
    }
    kkt.topLeftCorner(nv, nv).diagonal().array() += dx;
    if (me > 0) {
      kkt.topRightCorner(nv, me) = a_eq.transpose();
      kkt.bottomLeftCorner(me, nv) = a_eq;
      kkt.bottomRightCorner(me, me).diagonal().array() -= dy;
    }
    lu.compute(kkt);
  }

  // Solves for (dx, dy) given the reduced right-hand side.
  void solve(const Vector& rx, const Vector& ry, Vector* dx,
             Vector* dy) const {
    Vector rhs(nv + me);
    rhs.head(nv) = rx;
    rhs.tail(me) = ry;
    const Vector sol = lu.solve(rhs);
    *dx = sol.head(nv);
    *dy = sol.tail(me);
  }
};

double max_step(const Vector& v, const Vector& dv) {
  double alpha = 1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

}  // namespace

QpSolution solve_qp(const QuadraticProgram& p, const QpOptions& options) {
  p.validate();
  const Index nv = p.n();
  const Index me = p.a_eq.rows();
  const Folded f = fold_inequalities(p);
  const Index mi = f.g.rows();
  const Matrix hess = (2.0 * p.q).asDiagonal();

  const double b_scale =
      1.0 + (me > 0 ? p.b_eq.lpNorm<Eigen::Infinity>() : 0.0) +
      (mi > 0 ? f.h.lpNorm<Eigen::Infinity>() : 0.0);
  const double c_scale = 1.0 + (nv > 0 ? p.c.lpNorm<Eigen::Infinity>() : 0.0);
  const double tol_p = options.tol * b_scale;
  const double tol_d = options.tol * c_scale;
  const double tol_c =
      std::max(1e-9, 1e3 * std::numeric_limits<double>::epsilon() * b_scale *
                         c_scale);
  const double reg = 1e-12;

  QpSolution out;
  out.x = Vector::Zero(nv);

  KktSolver kkt;

  // Pure equality-constrained problem: one Newton solve.
  if (mi == 0) {
    kkt.factor(hess, p.a_eq, f.g, Vector(), reg, reg);
    Vector x, y;
    kkt.solve(-p.c, p.b_eq, &x, &y);
    const double stat =
        (hess * x + p.c + (me > 0 ? Vector(p.a_eq.transpose() * y)
                                  : Vector(Vector::Zero(nv))))
            .lpNorm<Eigen::Infinity>();
    out.x = x;
    out.eq_duals = y;
    out.in_duals = Vector::Zero(p.a_in.rows());
    out.lo_duals = Vector::Zero(nv);
    out.up_duals = Vector::Zero(nv);
    out.objective = p.objective(x);
    out.iterations = 1;
    out.status = stat <= 100.0 * tol_d ? QpStatus::optimal
                                       : QpStatus::unbounded;
    return out;
  }

  // Starting point: regularized equality-constrained solve, then shifted
  // slacks/duals.
  Vector x, y0;
  {
    Matrix h0 = hess;
    h0.diagonal().array() += 1.0;
    kkt.factor(h0, p.a_eq, Matrix::Zero(0, nv), Vector(), reg, reg);
    kkt.solve(-p.c, p.b_eq, &x, &y0);
  }
  Vector y = Vector::Zero(me);
  Vector s(mi), z(mi);
  {
    const Vector gap = f.h - f.g * x;
    const double shift = std::max(1.0, -2.0 * gap.minCoeff());
    for (Index i = 0; i < mi; ++i) s[i] = std::max(gap[i] + shift, 1.0);
    z.setOnes();
  }

  const int max_iter = std::max(options.max_iter, 1);
  double last_rp = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    const Vector r_d = hess * x + p.c +
                       (me > 0 ? Vector(p.a_eq.transpose() * y)
                               : Vector(Vector::Zero(nv))) +
                       f.g.transpose() * z;
    const Vector r_p = me > 0 ? Vector(p.a_eq * x - p.b_eq) : Vector();
    const Vector r_g = f.g * x + s - f.h;
    const double mu = s.dot(z) / static_cast<double>(mi);
    const double comp_max = (s.array() * z.array()).maxCoeff();

    const double rp_norm =
        std::max(me > 0 ? r_p.lpNorm<Eigen::Infinity>() : 0.0,
                 r_g.lpNorm<Eigen::Infinity>());
    const double rd_norm = r_d.lpNorm<Eigen::Infinity>();
    last_rp = rp_norm;

    if (rp_norm <= tol_p && rd_norm <= tol_d && comp_max <= tol_c) {
      out.status = QpStatus::optimal;
      out.iterations = it;
      break;
    }

    // Divergence checks: an exploding dual with a tight Farkas certificate
    // flags primal infeasibility; an exploding primal flags unboundedness.
    const double dual_mag = z.lpNorm<Eigen::Infinity>() +
                            (me > 0 ? y.lpNorm<Eigen::Infinity>() : 0.0);
    if (dual_mag > 1e9 * c_scale) {
      const Vector farkas = (me > 0 ? Vector(p.a_eq.transpose() * y)
                                    : Vector(Vector::Zero(nv))) +
                            f.g.transpose() * z;
      const double duality_gain =
          (me > 0 ? p.b_eq.dot(y) : 0.0) + f.h.dot(z);
      if (farkas.lpNorm<Eigen::Infinity>() <= 1e-6 * dual_mag &&
          duality_gain < -1e-8 * dual_mag) {
        out.status = QpStatus::infeasible;
        out.iterations = it;
        break;
      }
    }
    if (x.lpNorm<Eigen::Infinity>() > 1e10 * b_scale && rp_norm <= tol_p) {
      out.status = QpStatus::unbounded;
      out.iterations = it;
      break;
    }

    const Vector w = z.cwiseQuotient(s);
    kkt.factor(hess, p.a_eq, f.g, w, reg, reg);

    // Affine (predictor) direction.
    Vector rc_aff = s.cwiseProduct(z);
    Vector rx = -r_d - f.g.transpose() *
                           ((z.cwiseProduct(r_g) - rc_aff).cwiseQuotient(s));
    Vector dx, dy;
    kkt.solve(rx, me > 0 ? Vector(-r_p) : Vector(), &dx, &dy);
    Vector ds = -r_g - f.g * dx;
    Vector dz = -(rc_aff + z.cwiseProduct(ds)).cwiseQuotient(s);

    const double a_p_aff = max_step(s, ds);
    const double a_d_aff = max_step(z, dz);
    const double mu_aff = (s + a_p_aff * ds).dot(z + a_d_aff * dz) /
                          static_cast<double>(mi);
    const double sigma =
        std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);

    // Corrector.
    Vector rc = rc_aff + ds.cwiseProduct(dz);
    rc.array() -= sigma * mu;
    rx = -r_d -
         f.g.transpose() * ((z.cwiseProduct(r_g) - rc).cwiseQuotient(s));
    kkt.solve(rx, me > 0 ? Vector(-r_p) : Vector(), &dx, &dy);
    ds = -r_g - f.g * dx;
    dz = -(rc + z.cwiseProduct(ds)).cwiseQuotient(s);

    const double a_p = std::min(1.0, 0.99 * max_step(s, ds));
    const double a_d = std::min(1.0, 0.99 * max_step(z, dz));
    x += a_p * dx;
    s += a_p * ds;
    y += a_d * dy;
    z += a_d * dz;

    if (!x.allFinite() || !s.allFinite() || !z.allFinite()) {
      throw Error("solve_qp: iterates became non-finite (iteration " +
                  std::to_string(it) + ")");
    }
    out.iterations = it;
    if (it == max_iter) out.status = QpStatus::max_iter;
  }

  // Iteration budget exhausted without ever restoring primal feasibility.
  if (out.status == QpStatus::max_iter && last_rp > 1e-6 * b_scale) {
    out.status = QpStatus::infeasible;
  }

  out.x = x;
  out.objective = p.objective(x);
  out.eq_duals = y;
  const Index mi_decl = p.a_in.rows();
  out.in_duals = z.head(mi_decl);
  out.lo_duals = Vector::Zero(nv);
  out.up_duals = Vector::Zero(nv);
  Index r = mi_decl;
  for (Index i : f.up_vars) out.up_duals[i] = z[r++];
  for (Index i : f.lo_vars) out.lo_duals[i] = z[r++];
  return out;
}

KktResiduals kkt_residuals(const QuadraticProgram& p, const QpSolution& sol) {
  KktResiduals res;
  const Vector& x = sol.x;
  const Index nv = p.n();
  double primal = 0.0;
  if (p.a_eq.rows() > 0) {
    primal = (p.a_eq * x - p.b_eq).lpNorm<Eigen::Infinity>();
  }
  if (p.a_in.rows() > 0) {
    primal = std::max(primal, (p.a_in * x - p.b_in).maxCoeff());
  }
  for (Index i = 0; i < nv; ++i) {
    if (p.lo[i] > -kInf) primal = std::max(primal, p.lo[i] - x[i]);
    if (p.up[i] < kInf) primal = std::max(primal, x[i] - p.up[i]);
  }
  res.primal = std::max(primal, 0.0);

  Vector grad = (2.0 * p.q).asDiagonal() * x + p.c;
  if (p.a_eq.rows() > 0) grad += p.a_eq.transpose() * sol.eq_duals;
  if (p.a_in.rows() > 0) grad += p.a_in.transpose() * sol.in_duals;
  grad += sol.up_duals - sol.lo_duals;
  res.stationarity = grad.lpNorm<Eigen::Infinity>();

  double comp = 0.0;
  if (p.a_in.rows() > 0) {
    const Vector slack = p.b_in - p.a_in * x;
    comp = (sol.in_duals.array() * slack.array()).abs().maxCoeff();
  }
  for (Index i = 0; i < nv; ++i) {
    if (p.lo[i] > -kInf) {
      comp = std::max(comp, std::abs(sol.lo_duals[i] * (x[i] - p.lo[i])));
    }
    if (p.up[i] < kInf) {
      comp = std::max(comp, std::abs(sol.up_duals[i] * (p.up[i] - x[i])));
    }
  }
  res.complementarity = comp;
  return res;
}

}  // namespace dgopf
