#include "dgopf/opf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace dgopf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::branch_upper: return "branch_upper";
    case ConstraintKind::branch_lower: return "branch_lower";
    case ConstraintKind::reserve_up: return "reserve_up";
    case ConstraintKind::reserve_dn: return "reserve_dn";
  }
  return "unknown";
}

Vector DispatchSolution::pack(const DecisionLayout& layout) const {
  Vector x(layout.size());
  for (Index g = 0; g < layout.n_gen; ++g) {
    x[layout.p_hat(g)] = p_hat[g];
    x[layout.r_up(g)] = r_up[g];
    x[layout.r_dn(g)] = r_dn[g];
    x[layout.alpha(g)] = alpha[g];
  }
  for (Index l = 0; l < layout.n_line; ++l) x[layout.flow(l)] = flow[l];
  return x;
}

DispatchSolution DispatchSolution::unpack(const Vector& x,
                                          const DecisionLayout& layout) {
  DispatchSolution s;
  s.p_hat.resize(layout.n_gen);
  s.r_up.resize(layout.n_gen);
  s.r_dn.resize(layout.n_gen);
  s.alpha.resize(layout.n_gen);
  s.flow.resize(layout.n_line);
  for (Index g = 0; g < layout.n_gen; ++g) {
    s.p_hat[g] = x[layout.p_hat(g)];
    s.r_up[g] = x[layout.r_up(g)];
    s.r_dn[g] = x[layout.r_dn(g)];
    s.alpha[g] = x[layout.alpha(g)];
  }
  for (Index l = 0; l < layout.n_line; ++l) s.flow[l] = x[layout.flow(l)];
  return s;
}

Index source_dim(const AmbiguitySource& source) {
  return std::visit(
      [](const auto& s) -> Index {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, AmbiguitySet>) {
          return s.dim();
        } else if constexpr (std::is_same_v<T, GmmParams>) {
          return s.dim();
        } else {
          return s.mean.size();
        }
      },
      source);
}

WcCvarResult eval_cvar(const AmbiguitySource& source, const Vector& y,
                       double beta) {
  if (y.size() == 0) {
    // No wind farms: the projected error is identically zero.
    WcCvarResult res;
    res.gradient = Vector();
    res.worst_weights = Vector::Ones(1);
    return res;
  }
  return std::visit(
      [&](const auto& s) -> WcCvarResult {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, AmbiguitySet>) {
          return wc_cvar(y, s, beta);
        } else if constexpr (std::is_same_v<T, GmmParams>) {
          return cvar_fixed(y, s, beta);
        } else {
          auto [value, grad] = moment_wc_cvar(y, s.mean, s.cov, beta);
          WcCvarResult res;
          res.cvar = value;
          res.var = value;
          res.gradient = grad;
          res.worst_weights = Vector::Ones(1);
          return res;
        }
      },
      source);
}

void SolverConfig::validate() const {
  if (!(beta_reserve > 0.0 && beta_reserve < 1.0) ||
      !(beta_branch > 0.0 && beta_branch < 1.0)) {
    throw Error("solver config: risk levels must lie in (0,1)");
  }
  if (!(tau_feas > 0.0)) throw Error("solver config: tau_feas must be > 0");
  if (max_outer_iterations < 1) {
    throw Error("solver config: need at least one outer iteration");
  }
}

ReserveThetas reserve_thetas(const AmbiguitySource& source,
                             double beta_reserve) {
  const Index w = source_dim(source);
  ReserveThetas out;
  if (w == 0) return out;
  const Vector ones = Vector::Ones(w);
  const double up = eval_cvar(source, -ones, beta_reserve).cvar;
  const double dn = eval_cvar(source, ones, beta_reserve).cvar;
  out.theta_up = std::max(up, 0.0);
  out.theta_dn = std::max(dn, 0.0);
  out.clamped_up = up < 0.0;
  out.clamped_dn = dn < 0.0;
  return out;
}

MasterProblem build_master(const NetworkCase& nc, const PtdfSet& ptdf,
                           const ReserveThetas& thetas) {
  MasterProblem mp;
  DecisionLayout& layout = mp.layout;
  layout.n_gen = static_cast<Index>(nc.generators.size());
  layout.n_line = static_cast<Index>(nc.branches.size());
  const Index n = layout.size();
  const Index ng = layout.n_gen;
  const Index nl = layout.n_line;
  const Index nw = static_cast<Index>(nc.wind_farms.size());

  double demand = 0.0;
  for (const Load& l : nc.loads) demand += l.demand;
  double wind = 0.0;
  for (const WindFarm& w : nc.wind_farms) wind += w.forecast;
  const double net_demand = demand - wind;

  double p_min_sum = 0.0, p_max_sum = 0.0;
  for (const Generator& g : nc.generators) {
    p_min_sum += g.p_min;
    p_max_sum += g.p_max;
  }
  if (net_demand < p_min_sum - 1e-9 || net_demand > p_max_sum + 1e-9) {
    throw Error("infeasible dispatch: net demand " + std::to_string(net_demand) +
                " MW outside generation range [" + std::to_string(p_min_sum) +
                ", " + std::to_string(p_max_sum) + "]");
  }

  QuadraticProgram& qp = mp.qp;
  qp.q = Vector::Zero(n);
  qp.c = Vector::Zero(n);
  qp.lo = Vector::Constant(n, -kInf);
  qp.up = Vector::Constant(n, kInf);
  for (Index g = 0; g < ng; ++g) {
    const Generator& gen = nc.generators[g];
    qp.q[layout.p_hat(g)] = gen.cost_c2;
    qp.c[layout.p_hat(g)] = gen.cost_c1;
    qp.c0 += gen.cost_c0;
    qp.c[layout.r_up(g)] = gen.c_up;
    qp.c[layout.r_dn(g)] = gen.c_dn;
    qp.lo[layout.p_hat(g)] = gen.p_min;
    qp.up[layout.p_hat(g)] = gen.p_max;
    qp.lo[layout.r_up(g)] = 0.0;
    qp.up[layout.r_up(g)] = gen.r_up_max;
    qp.lo[layout.r_dn(g)] = 0.0;
    qp.up[layout.r_dn(g)] = gen.r_dn_max;
    qp.lo[layout.alpha(g)] = 0.0;
    qp.up[layout.alpha(g)] = 1.0;
  }
  // Without wind there is no recourse uncertainty and the flow limits are
  // plain deterministic bounds.
  if (nw == 0) {
    for (Index l = 0; l < nl; ++l) {
      if (nc.branches[l].flow_limit) {
        qp.lo[layout.flow(l)] = -*nc.branches[l].flow_limit;
        qp.up[layout.flow(l)] = *nc.branches[l].flow_limit;
      }
    }
  }

  // Equalities: power balance, participation sum, flow definitions.
  const Index me = 2 + nl;
  qp.a_eq = Matrix::Zero(me, n);
  qp.b_eq = Vector::Zero(me);
  for (Index g = 0; g < ng; ++g) qp.a_eq(0, layout.p_hat(g)) = 1.0;
  qp.b_eq[0] = net_demand;
  for (Index g = 0; g < ng; ++g) qp.a_eq(1, layout.alpha(g)) = 1.0;
  qp.b_eq[1] = 1.0;
  for (Index l = 0; l < nl; ++l) {
    const Index row = 2 + l;
    qp.a_eq(row, layout.flow(l)) = 1.0;
    for (Index g = 0; g < ng; ++g) {
      qp.a_eq(row, layout.p_hat(g)) = -ptdf.h_gen(l, g);
    }
    double rhs = 0.0;
    for (Index w = 0; w < nw; ++w) {
      rhs += ptdf.h_wind(l, w) * nc.wind_farms[w].forecast;
    }
    for (Index d = 0; d < static_cast<Index>(nc.loads.size()); ++d) {
      rhs -= ptdf.h_load(l, d) * nc.loads[d].demand;
    }
    qp.b_eq[row] = rhs;
  }

  // Inequalities: headroom coupling, then the theta reserve rows.
  const bool use_theta = nw > 0;
  const Index mi = 2 * ng + (use_theta ? 2 * ng : 0);
  qp.a_in = Matrix::Zero(mi, n);
  qp.b_in = Vector::Zero(mi);
  for (Index g = 0; g < ng; ++g) {
    qp.a_in(2 * g, layout.p_hat(g)) = 1.0;  // p + R_up <= p_max
    qp.a_in(2 * g, layout.r_up(g)) = 1.0;
    qp.b_in[2 * g] = nc.generators[g].p_max;
    qp.a_in(2 * g + 1, layout.p_hat(g)) = -1.0;  // -p + R_dn <= -p_min
    qp.a_in(2 * g + 1, layout.r_dn(g)) = 1.0;
    qp.b_in[2 * g + 1] = -nc.generators[g].p_min;
  }
  if (use_theta) {
    for (Index g = 0; g < ng; ++g) {
      Index row = 2 * ng + 2 * g;
      qp.a_in(row, layout.alpha(g)) = thetas.theta_up;
      qp.a_in(row, layout.r_up(g)) = -1.0;
      ++row;
      qp.a_in(row, layout.alpha(g)) = thetas.theta_dn;
      qp.a_in(row, layout.r_dn(g)) = -1.0;
    }
  }
  qp.validate();
  return mp;
}

std::vector<RandomConstraintSpec> assemble_random_constraints(
    const NetworkCase& nc, const PtdfSet& ptdf, const DecisionLayout& layout,
    const SolverConfig& config) {
  std::vector<RandomConstraintSpec> specs;
  const Index n = layout.size();
  const Index ng = layout.n_gen;
  const Index nw = static_cast<Index>(nc.wind_farms.size());

  for (Index l = 0; l < layout.n_line; ++l) {
    if (!nc.branches[l].flow_limit) continue;
    const double limit = *nc.branches[l].flow_limit;
    for (int side = 0; side < 2; ++side) {
      RandomConstraintSpec spec;
      spec.kind = side == 0 ? ConstraintKind::branch_upper
                            : ConstraintKind::branch_lower;
      spec.entity = static_cast<int>(l);
      spec.beta = config.beta_branch;
      const double sign = side == 0 ? 1.0 : -1.0;
      spec.exposure_const = Vector::Zero(nw);
      spec.exposure_coef = Matrix::Zero(nw, n);
      for (Index w = 0; w < nw; ++w) {
        spec.exposure_const[w] = sign * ptdf.h_wind(l, w);
        for (Index g = 0; g < ng; ++g) {
          spec.exposure_coef(w, layout.alpha(g)) = -sign * ptdf.h_gen(l, g);
        }
      }
      spec.threshold_const = limit;
      spec.threshold_coef = Vector::Zero(n);
      spec.threshold_coef[layout.flow(l)] = -sign;
      specs.push_back(std::move(spec));
    }
  }

  for (Index g = 0; g < ng; ++g) {
    for (int side = 0; side < 2; ++side) {
      RandomConstraintSpec spec;
      spec.kind =
          side == 0 ? ConstraintKind::reserve_up : ConstraintKind::reserve_dn;
      spec.entity = static_cast<int>(g);
      spec.beta = config.beta_reserve;
      spec.handled_by_theta = true;
      const double sign = side == 0 ? -1.0 : 1.0;
      spec.exposure_const = Vector::Zero(nw);
      spec.exposure_coef = Matrix::Zero(nw, n);
      for (Index w = 0; w < nw; ++w) {
        spec.exposure_coef(w, layout.alpha(g)) = sign;
      }
      spec.threshold_const = 0.0;
      spec.threshold_coef = Vector::Zero(n);
      spec.threshold_coef[side == 0 ? layout.r_up(g) : layout.r_dn(g)] = 1.0;
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

namespace {

struct CutRow {
  int spec_index = 0;
  Vector coefficients;
  double rhs = 0.0;
  int inactive_streak = 0;
};

}  // namespace

DroResult solve_dro_opf(const NetworkCase& nc, const PtdfSet& ptdf,
                        const AmbiguitySource& source,
                        const SolverConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Index nw = static_cast<Index>(nc.wind_farms.size());
  if (nw > 0 && source_dim(source) != nw) {
    throw Error("ambiguity source dimension does not match the wind farms");
  }

  DroResult out;
  SolveReport& report = out.report;
  if (nw > 0) {
    report.thetas = reserve_thetas(source, config.beta_reserve);
    if (report.thetas.clamped_up) {
      report.warnings.push_back(
          "worst-case upward reserve requirement was negative; clamped to 0");
    }
    if (report.thetas.clamped_dn) {
      report.warnings.push_back(
          "worst-case downward reserve requirement was negative; clamped to 0");
    }
  }

  MasterProblem mp = build_master(nc, ptdf, report.thetas);
  const auto specs =
      assemble_random_constraints(nc, ptdf, mp.layout, config);
  std::vector<int> branch_spec_ids;
  for (size_t k = 0; k < specs.size(); ++k) {
    if (!specs[k].handled_by_theta) branch_spec_ids.push_back(static_cast<int>(k));
  }

  const Matrix base_a_in = mp.qp.a_in;
  const Vector base_b_in = mp.qp.b_in;
  std::vector<CutRow> cuts;

  Vector x;
  double objective = 0.0;
  int total_cuts = 0;
  int iter = 0;
  for (iter = 1; iter <= config.max_outer_iterations; ++iter) {
    // Master with the accumulated cut rows.
    const Index m0 = base_a_in.rows();
    const Index mc = static_cast<Index>(cuts.size());
    mp.qp.a_in.resize(m0 + mc, mp.layout.size());
    mp.qp.b_in.resize(m0 + mc);
    mp.qp.a_in.topRows(m0) = base_a_in;
    mp.qp.b_in.head(m0) = base_b_in;
    for (Index i = 0; i < mc; ++i) {
      mp.qp.a_in.row(m0 + i) = cuts[i].coefficients.transpose();
      mp.qp.b_in[m0 + i] = cuts[i].rhs;
    }

    const QpSolution master = solve_qp(mp.qp, config.qp);
    if (master.status == QpStatus::infeasible) {
      report.status = SolveStatus::dr_infeasible;
      if (cuts.empty()) {
        // No cuts yet: the conflict sits in the theta reserve rows.
        for (size_t k = 0; k < specs.size(); ++k) {
          if (specs[k].handled_by_theta) {
            report.violated_specs.push_back(static_cast<int>(k));
          }
        }
      }
      for (const CutRow& cut : cuts) {
        report.violated_specs.push_back(cut.spec_index);
      }
      std::sort(report.violated_specs.begin(), report.violated_specs.end());
      report.violated_specs.erase(std::unique(report.violated_specs.begin(),
                                              report.violated_specs.end()),
                                  report.violated_specs.end());
      break;
    }
    if (master.status != QpStatus::optimal) {
      throw Error("master QP did not converge (status " +
                  to_string(master.status) + ", iteration " +
                  std::to_string(iter) + ")");
    }
    x = master.x;
    objective = master.objective;

    // Evaluate the worst-case CVaR of every branch spec at the optimum.
    const Index nb = static_cast<Index>(branch_spec_ids.size());
    std::vector<WcCvarResult> results(nb);
    std::vector<Vector> exposures(nb);
    std::vector<double> violation(nb, 0.0);
    parallel_for(nb, config.threads, [&](Index i) {
      const RandomConstraintSpec& spec = specs[branch_spec_ids[i]];
      exposures[i] = spec.exposure_at(x);
      results[i] = eval_cvar(source, exposures[i], spec.beta);
      violation[i] = results[i].cvar - spec.threshold_at(x);
    });

    IterationRecord record;
    record.iter = iter;
    record.objective = objective;
    record.max_violation =
        nb > 0 ? *std::max_element(violation.begin(), violation.end()) : 0.0;

    for (Index i = 0; i < nb; ++i) {
      if (violation[i] <= config.tau_feas) continue;
      const RandomConstraintSpec& spec = specs[branch_spec_ids[i]];
      const CuttingPlane plane = cutting_plane(results[i], exposures[i]);
      CutRow cut;
      cut.spec_index = branch_spec_ids[i];
      cut.coefficients =
          (plane.coefficients.transpose() * spec.exposure_coef).transpose() -
          spec.threshold_coef;
      cut.rhs = spec.threshold_const - plane.constant -
                plane.coefficients.dot(spec.exposure_const);
      cuts.push_back(std::move(cut));
      record.cuts_added.push_back(branch_spec_ids[i]);
      ++total_cuts;
    }
    report.iterations.push_back(record);

    if (record.cuts_added.empty()) {
      report.status = SolveStatus::converged;
      break;
    }

    // Optional pruning of cuts that stayed slack for 5 straight iterations.
    if (config.drop_inactive_cuts) {
      for (CutRow& cut : cuts) {
        const double slack = cut.rhs - cut.coefficients.dot(x);
        if (slack > 1e-6 * (1.0 + std::abs(cut.rhs))) {
          ++cut.inactive_streak;
        } else {
          cut.inactive_streak = 0;
        }
      }
      std::erase_if(cuts, [](const CutRow& c) { return c.inactive_streak >= 5; });
    }

    if (iter == config.max_outer_iterations) {
      report.status = SolveStatus::iteration_limit;
    }
  }

  if (x.size() > 0) {
    out.solution = DispatchSolution::unpack(x, mp.layout);
    out.solution.objective = objective;
    out.solution.iterations = static_cast<int>(report.iterations.size());
    out.solution.cuts_added = total_cuts;
    report.final_slacks =
        check_feasibility(out.solution, specs, source, config);
  }
  for (const CutRow& cut : cuts) {
    out.cuts.push_back({cut.spec_index, cut.coefficients, cut.rhs});
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

std::vector<ConstraintSlack> check_feasibility(
    const DispatchSolution& sol, const std::vector<RandomConstraintSpec>& specs,
    const AmbiguitySource& source, const SolverConfig& config) {
  DecisionLayout layout;
  layout.n_gen = sol.p_hat.size();
  layout.n_line = sol.flow.size();
  const Vector x = sol.pack(layout);
  std::vector<ConstraintSlack> out(specs.size());
  parallel_for(static_cast<Index>(specs.size()), config.threads, [&](Index k) {
    const RandomConstraintSpec& spec = specs[k];
    ConstraintSlack cs;
    cs.kind = spec.kind;
    cs.entity = spec.entity;
    const Vector y = spec.exposure_at(x);
    cs.cvar = eval_cvar(source, y, spec.beta).cvar;
    cs.threshold = spec.threshold_at(x);
    cs.slack = cs.threshold - cs.cvar;
    out[k] = cs;
  });
  return out;
}

}  // namespace dgopf
