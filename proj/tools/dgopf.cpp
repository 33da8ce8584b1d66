// Batch CLI: scenario generation, GMM fitting, ambiguity-set construction,
// dispatch solves, out-of-sample validation and model comparison.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dgopf/ambiguity.hpp"
#include "dgopf/case_model.hpp"
#include "dgopf/gmm.hpp"
#include "dgopf/opf.hpp"
#include "dgopf/oracle.hpp"
#include "dgopf/serde.hpp"
#include "dgopf/special.hpp"
#include "dgopf/wccvar.hpp"

namespace {

using namespace dgopf;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumerical = 4;

struct GlobalOpts {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int threads = 1;
};

std::string joined_path(const std::string& dir, const std::string& name) {
  if (name.empty()) return name;
  if (std::filesystem::path(name).is_absolute()) return name;
  return (std::filesystem::path(dir) / name).string();
}

RunManifest make_manifest(const std::string& command, const GlobalOpts& g,
                          const std::vector<std::string>& flags,
                          const std::map<std::string, std::string>& inputs) {
  RunManifest m;
  m.command = command;
  // The hash covers content-affecting parameters only; output locations
  // are excluded.
  std::string flat = command;
  for (size_t i = 0; i < flags.size(); ++i) {
    const std::string& f = flags[i];
    if (f == "--out" || f == "--out-dir" || f == "--gmm-out") {
      ++i;
      continue;
    }
    if (f.rfind("--out=", 0) == 0 || f.rfind("--out-dir=", 0) == 0 ||
        f.rfind("--gmm-out=", 0) == 0) {
      continue;
    }
    flat += "\n" + f;
  }
  m.config_hash = sha256_hex(flat);
  m.seed = g.seed;
  for (const auto& [path, content] : inputs) {
    m.input_digests[path] = sha256_hex(content);
  }
  return m;
}

NetworkCase load_case(const std::string& path) {
  const std::string text = read_file(path);
  if (text.find("mpc.") != std::string::npos) return parse_matpower(text);
  return parse_json_case(text);
}

// Worst-case density of the aggregate error 1'xi for the reserve exposures,
// sampled on a grid for plotting.
std::string density_csv(const AmbiguitySource& source, double beta_reserve) {
  const Index w = source_dim(source);
  if (w == 0) return "";
  const Vector ones = Vector::Ones(w);
  const WcCvarResult up = eval_cvar(source, -ones, beta_reserve);
  const WcCvarResult dn = eval_cvar(source, ones, beta_reserve);
  if (up.worst_means.empty() || dn.worst_means.empty()) return "";

  auto aggregate_mixture = [&](const WcCvarResult& res, Vector* mu,
                               Vector* sd) {
    const Index m = res.worst_weights.size();
    mu->resize(m);
    sd->resize(m);
    for (Index k = 0; k < m; ++k) {
      (*mu)[k] = ones.dot(res.worst_means[k]);
      (*sd)[k] = std::sqrt(
          std::max(ones.dot(res.worst_covs[k] * ones), 1e-300));
    }
  };
  Vector mu_up, sd_up, mu_dn, sd_dn;
  aggregate_mixture(up, &mu_up, &sd_up);
  aggregate_mixture(dn, &mu_dn, &sd_dn);

  double lo = 1e300, hi = -1e300;
  for (Index k = 0; k < mu_up.size(); ++k) {
    lo = std::min({lo, mu_up[k] - 6 * sd_up[k], mu_dn[k] - 6 * sd_dn[k]});
    hi = std::max({hi, mu_up[k] + 6 * sd_up[k], mu_dn[k] + 6 * sd_dn[k]});
  }
  std::ostringstream out;
  out << "aggregate_error_mw,pdf_worst_up,pdf_worst_dn\n";
  const int grid = 400;
  for (int i = 0; i <= grid; ++i) {
    const double x = lo + (hi - lo) * i / grid;
    double pdf_up = 0.0, pdf_dn = 0.0;
    for (Index k = 0; k < mu_up.size(); ++k) {
      pdf_up += up.worst_weights[k] * norm_pdf(x, mu_up[k], sd_up[k]);
      pdf_dn += dn.worst_weights[k] * norm_pdf(x, mu_dn[k], sd_dn[k]);
    }
    out << x << "," << pdf_up << "," << pdf_dn << "\n";
  }
  return out.str();
}

struct SolveFiles {
  DroResult result;
  AmbiguitySource source;
};

AmbiguitySource load_source(const std::string& model,
                            const std::string& text) {
  if (model == "dg") return ambiguity_from_json(text);
  if (model == "na") return gmm_from_json(text);
  if (model == "m") {
    // Accept either a moment file or a GMM to take moments from.
    try {
      return moment_from_json(text);
    } catch (const Error&) {
      const GmmParams params = gmm_from_json(text);
      MomentSet ms;
      gmm_moments(params, &ms.mean, &ms.cov);
      return ms;
    }
  }
  throw Error("unknown model '" + model + "' (dg|na|m)");
}

std::string dispatch_csv(const NetworkCase& nc, const DispatchSolution& sol) {
  std::ostringstream out;
  out << "generator,bus,p_hat_mw,r_up_mw,r_dn_mw,alpha\n";
  for (Index g = 0; g < sol.p_hat.size(); ++g) {
    out << g << "," << nc.generators[g].bus << "," << sol.p_hat[g] << ","
        << sol.r_up[g] << "," << sol.r_dn[g] << "," << sol.alpha[g] << "\n";
  }
  out << "\nline,from,to,flow_mw,limit_mw\n";
  for (Index l = 0; l < sol.flow.size(); ++l) {
    const Branch& br = nc.branches[l];
    out << l << "," << br.from_bus << "," << br.to_bus << "," << sol.flow[l]
        << "," << (br.flow_limit ? *br.flow_limit : 0.0) << "\n";
  }
  return out.str();
}

int run_solve_pipeline(const NetworkCase& nc, const AmbiguitySource& source,
                       const SolverConfig& config, const RunManifest& manifest,
                       const GlobalOpts& g, const std::string& prefix,
                       DroResult* out_result) {
  const PtdfSet ptdf = build_ptdf(nc);
  DroResult res = solve_dro_opf(nc, ptdf, source, config);
  RunManifest m = manifest;
  m.wall_seconds = res.report.wall_seconds;
  write_file(joined_path(g.out_dir, prefix + "solution.json"),
             dispatch_to_json(res.solution, &m));
  write_file(joined_path(g.out_dir, prefix + "solution.csv"),
             dispatch_csv(nc, res.solution));
  write_file(joined_path(g.out_dir, prefix + "report.json"),
             solve_report_to_json(res.report));
  const std::string density = density_csv(source, config.beta_reserve);
  if (!density.empty()) {
    write_file(joined_path(g.out_dir, prefix + "wc_density.csv"), density);
  }
  if (out_result) *out_result = res;
  if (res.report.status == SolveStatus::dr_infeasible) {
    std::ostringstream what;
    what << "model infeasible under the DR-CVaR cuts; violated specs:";
    for (int k : res.report.violated_specs) what << " " << k;
    std::cerr << what.str() << "\n";
    return kExitInfeasible;
  }
  if (res.report.status == SolveStatus::iteration_limit) {
    std::cerr << "outer iteration limit reached before feasibility\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributionally robust DC-OPF with GMM ambiguity sets"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "Deterministic RNG seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs")
      ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (1 = serial)")
      ->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic forecast errors");
  std::string gen_spec, gen_out = "scenarios.csv";
  Index gen_n = 1000;
  gen->add_option("--spec", gen_spec, "Marginal/correlation spec (TOML)")
      ->required();
  gen->add_option("-n,--count", gen_n, "Number of scenarios")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Output CSV")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a GMM by EM with BIC selection");
  std::string fit_data, fit_out = "fit.json", fit_gmm_out = "gmm.json";
  int fit_mlo = 1, fit_mhi = 6;
  fit->add_option("--data", fit_data, "Sample CSV")->required();
  fit->add_option("--m-min", fit_mlo, "Smallest component count")
      ->capture_default_str();
  fit->add_option("--m-max", fit_mhi, "Largest component count")
      ->capture_default_str();
  fit->add_option("--out", fit_out, "Fit summary JSON")->capture_default_str();
  fit->add_option("--gmm-out", fit_gmm_out, "Parameters JSON")
      ->capture_default_str();

  // ambiguity
  auto* amb = app.add_subcommand("ambiguity", "Bootstrap an ambiguity set");
  std::string amb_data, amb_out = "ambiguity.json";
  double amb_delta = 0.95;
  int amb_n = 2000, amb_mlo = 1, amb_mhi = 6;
  amb->add_option("--data", amb_data, "Sample CSV")->required();
  amb->add_option("--delta", amb_delta, "Confidence level")
      ->capture_default_str();
  amb->add_option("--resamples", amb_n, "Bootstrap resamples")
      ->capture_default_str();
  amb->add_option("--m-min", amb_mlo)->capture_default_str();
  amb->add_option("--m-max", amb_mhi)->capture_default_str();
  amb->add_option("--out", amb_out, "Ambiguity set JSON")
      ->capture_default_str();

  // solve
  auto* solve = app.add_subcommand("solve", "Solve the dispatch model");
  std::string solve_case, solve_unc, solve_model = "dg";
  SolverConfig solve_cfg;
  solve->add_option("--case", solve_case, "Case file (.m or .json)")
      ->required();
  solve->add_option("--uncertainty", solve_unc,
                    "Ambiguity / GMM / moment JSON")
      ->required();
  solve->add_option("--model", solve_model, "dg | na | m")
      ->capture_default_str();
  solve->add_option("--beta-reserve", solve_cfg.beta_reserve)
      ->capture_default_str();
  solve->add_option("--beta-branch", solve_cfg.beta_branch)
      ->capture_default_str();
  solve->add_option("--tau-feas", solve_cfg.tau_feas)->capture_default_str();
  solve->add_option("--max-iterations", solve_cfg.max_outer_iterations)
      ->capture_default_str();
  solve->add_flag("--drop-inactive-cuts", solve_cfg.drop_inactive_cuts);

  // validate
  auto* val = app.add_subcommand("validate", "Out-of-sample test of a solution");
  std::string val_sol, val_case, val_scen, val_out = "oos.json";
  std::string val_unc, val_model = "dg";
  double val_beta_reserve = 0.02, val_beta_branch = 0.04;
  val->add_option("--solution", val_sol, "Solution JSON")->required();
  val->add_option("--case", val_case, "Case file")->required();
  val->add_option("--scenarios", val_scen, "Scenario CSV")->required();
  val->add_option("--beta-reserve", val_beta_reserve)->capture_default_str();
  val->add_option("--beta-branch", val_beta_branch)->capture_default_str();
  val->add_option("--uncertainty", val_unc,
                  "Optional uncertainty JSON: also dump the analytic "
                  "worst-case CVaR per constraint");
  val->add_option("--model", val_model, "Interpretation of --uncertainty")
      ->capture_default_str();
  val->add_option("--out", val_out, "Report JSON")->capture_default_str();

  // compare
  auto* cmp = app.add_subcommand("compare", "Run dg/na/m models side by side");
  std::string cmp_case, cmp_data, cmp_truth;
  double cmp_delta = 0.95;
  int cmp_resamples = 500, cmp_mlo = 1, cmp_mhi = 4;
  Index cmp_oos_n = 100000;
  SolverConfig cmp_cfg;
  cmp->add_option("--case", cmp_case, "Case file")->required();
  cmp->add_option("--data", cmp_data, "Training sample CSV")->required();
  cmp->add_option("--truth", cmp_truth,
                  "Generator spec TOML for out-of-sample scenarios");
  cmp->add_option("--delta", cmp_delta)->capture_default_str();
  cmp->add_option("--resamples", cmp_resamples)->capture_default_str();
  cmp->add_option("--m-min", cmp_mlo)->capture_default_str();
  cmp->add_option("--m-max", cmp_mhi)->capture_default_str();
  cmp->add_option("--oos-n", cmp_oos_n, "Out-of-sample scenario count")
      ->capture_default_str();
  cmp->add_option("--beta-reserve", cmp_cfg.beta_reserve)
      ->capture_default_str();
  cmp->add_option("--beta-branch", cmp_cfg.beta_branch)
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> flags;
  for (int i = 1; i < argc; ++i) flags.emplace_back(argv[i]);

  const auto cmd_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         cmd_start)
        .count();
  };

  try {
    std::error_code ec;
    std::filesystem::create_directories(g.out_dir, ec);

    if (*gen) {
      std::string spec_text;
      SynthSpec spec;
      try {
        spec_text = read_file(gen_spec);
        spec = synth_spec_from_toml(spec_text);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInput;
      }
      const SynthResult result = synth_wind_errors(spec, gen_n, g.seed);
      for (const std::string& w : result.warnings) {
        std::cerr << "warning: " << w << "\n";
      }
      RunManifest m =
          make_manifest("gen-data", g, flags, {{gen_spec, spec_text}});
      write_file(joined_path(g.out_dir, gen_out),
                 samples_to_csv(result.scenarios.rows, result.scenarios.columns,
                                manifest_comment_lines(m)));
      return kExitOk;
    }

    if (*fit) {
      std::string csv;
      SampleSet data;
      try {
        csv = read_file(fit_data);
        data = samples_from_csv(csv);
        validate_samples(data);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInput;
      }
      const FitResult result =
          select_m_bic(data, fit_mlo, fit_mhi, g.seed, {}, g.threads);
      RunManifest m = make_manifest("fit", g, flags, {{fit_data, csv}});
      m.wall_seconds = elapsed();
      write_file(joined_path(g.out_dir, fit_out),
                 attach_manifest(fit_to_json(result), m));
      write_file(joined_path(g.out_dir, fit_gmm_out),
                 gmm_to_json(result.params));
      return kExitOk;
    }

    if (*amb) {
      std::string csv;
      SampleSet data;
      try {
        csv = read_file(amb_data);
        data = samples_from_csv(csv);
        validate_samples(data);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInput;
      }
      if (amb_n < 2) {
        std::cerr << "ambiguity: N >= 2 bootstrap resamples required\n";
        return kExitInput;
      }
      const AmbiguityBuild build = build_ambiguity_set(
          data, amb_delta, amb_n, amb_mlo, amb_mhi, g.seed, {}, g.threads);
      for (const std::string& w : build.warnings) {
        std::cerr << "warning: " << w << "\n";
      }
      RunManifest m = make_manifest("ambiguity", g, flags, {{amb_data, csv}});
      m.wall_seconds = elapsed();
      write_file(joined_path(g.out_dir, amb_out),
                 ambiguity_to_json(build.set, &m));
      write_file(joined_path(g.out_dir, "base_gmm.json"),
                 gmm_to_json(build.base.params));
      return kExitOk;
    }

    if (*solve) {
      NetworkCase nc;
      AmbiguitySource source;
      std::string case_text, unc_text;
      try {
        case_text = read_file(solve_case);
        unc_text = read_file(solve_unc);
        nc = load_case(solve_case);
        source = load_source(solve_model, unc_text);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInput;
      }
      solve_cfg.threads = g.threads;
      RunManifest m = make_manifest(
          "solve", g, flags, {{solve_case, case_text}, {solve_unc, unc_text}});
      DroResult result;
      return run_solve_pipeline(nc, source, solve_cfg, m, g, "", &result);
    }

    if (*val) {
      DispatchSolution sol;
      NetworkCase nc;
      ScenarioSet scenarios;
      std::string sol_text, case_text, scen_text;
      try {
        sol_text = read_file(val_sol);
        case_text = read_file(val_case);
        scen_text = read_file(val_scen);
        sol = dispatch_from_json(sol_text);
        nc = load_case(val_case);
        const SampleSet s = samples_from_csv(scen_text);
        scenarios.rows = s.rows;
        scenarios.columns = s.columns;
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInput;
      }
      const PtdfSet ptdf = build_ptdf(nc);
      DecisionLayout layout;
      layout.n_gen = static_cast<Index>(nc.generators.size());
      layout.n_line = static_cast<Index>(nc.branches.size());
      SolverConfig cfg;
      cfg.beta_reserve = val_beta_reserve;
      cfg.beta_branch = val_beta_branch;
      const auto specs = assemble_random_constraints(nc, ptdf, layout, cfg);
      const OosReport report = out_of_sample_test(sol, specs, scenarios);
      RunManifest m = make_manifest("validate", g, flags,
                                    {{val_sol, sol_text},
                                     {val_case, case_text},
                                     {val_scen, scen_text}});
      m.wall_seconds = elapsed();
      write_file(joined_path(g.out_dir, val_out), oos_to_json(report, &m));

      // Optional analytic diagnostics alongside the empirical report.
      if (!val_unc.empty()) {
        AmbiguitySource source;
        try {
          source = load_source(val_model, read_file(val_unc));
        } catch (const Error& e) {
          std::cerr << e.what() << "\n";
          return kExitInput;
        }
        const Vector x = sol.pack(layout);
        nlohmann::json diag = nlohmann::json::array();
        for (size_t k = 0; k < specs.size(); ++k) {
          const Vector y = specs[k].exposure_at(x);
          const WcCvarResult res = eval_cvar(source, y, specs[k].beta);
          nlohmann::json entry;
          entry["kind"] = to_string(specs[k].kind);
          entry["entity"] = specs[k].entity;
          entry["threshold"] = specs[k].threshold_at(x);
          entry["result"] = nlohmann::json::parse(wccvar_to_json(res));
          diag.push_back(entry);
        }
        write_file(joined_path(g.out_dir, "wc_diagnostics.json"),
                   diag.dump(2) + "\n");
      }
      std::cout << (report.pass ? "PASS" : "FAIL") << "\n";
      return kExitOk;
    }

    if (*cmp) {
      std::string case_text, data_text;
      NetworkCase nc;
      SampleSet data;
      try {
        case_text = read_file(cmp_case);
        data_text = read_file(cmp_data);
        nc = load_case(cmp_case);
        data = samples_from_csv(data_text);
        validate_samples(data);
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInput;
      }
      cmp_cfg.threads = g.threads;
      const PtdfSet ptdf = build_ptdf(nc);

      const AmbiguityBuild build =
          build_ambiguity_set(data, cmp_delta, cmp_resamples, cmp_mlo, cmp_mhi,
                              g.seed, {}, g.threads);
      MomentSet moments;
      moments.mean = data.rows.colwise().mean();
      const Matrix centered = data.rows.rowwise() - moments.mean.transpose();
      moments.cov = centered.transpose() * centered /
                    std::max<Index>(data.observations() - 1, 1);

      // Out-of-sample scenarios: from the declared truth when given, else
      // from the fitted GMM.
      ScenarioSet scenarios;
      if (!cmp_truth.empty()) {
        const SynthSpec truth = synth_spec_from_toml(read_file(cmp_truth));
        scenarios = synth_wind_errors(truth, cmp_oos_n, g.seed + 7).scenarios;
      } else {
        const SampleSet s =
            gmm_sample(build.base.params, cmp_oos_n, g.seed + 7);
        scenarios.rows = s.rows;
        scenarios.columns = s.columns;
      }

      struct Row {
        std::string model;
        double cost = 0.0;
        double max_violation = 0.0;
        double upward_reserve = 0.0;
        double seconds = 0.0;
        std::string status;
      };
      std::vector<Row> rows;
      nlohmann::json detail = nlohmann::json::object();
      const std::vector<std::pair<std::string, AmbiguitySource>> models = {
          {"na", build.base.params},
          {"dg", build.set},
          {"m", moments},
      };
      DecisionLayout layout;
      layout.n_gen = static_cast<Index>(nc.generators.size());
      layout.n_line = static_cast<Index>(nc.branches.size());
      const auto specs = assemble_random_constraints(nc, ptdf, layout, cmp_cfg);
      for (const auto& [name, source] : models) {
        const DroResult res = solve_dro_opf(nc, ptdf, source, cmp_cfg);
        Row row;
        row.model = name;
        row.cost = res.solution.objective;
        row.upward_reserve = res.solution.r_up.sum();
        row.seconds = res.report.wall_seconds;
        row.status = res.report.status == SolveStatus::converged
                         ? "converged"
                         : (res.report.status == SolveStatus::dr_infeasible
                                ? "dr_infeasible"
                                : "iteration_limit");
        const OosReport oos = out_of_sample_test(res.solution, specs, scenarios);
        row.max_violation = 0.0;
        for (const OosRow& r : oos.rows) {
          row.max_violation = std::max(row.max_violation, r.violation);
        }
        detail[name] = {{"cost", row.cost},
                        {"upward_reserve_mw", row.upward_reserve},
                        {"max_violation_mw", row.max_violation},
                        {"solve_seconds", row.seconds},
                        {"status", row.status},
                        {"oos", nlohmann::json::parse(oos_to_json(oos))}};
        rows.push_back(row);
      }

      std::ostringstream csv;
      csv << "model,cost,max_violation,upward_reserve_MW,solve_seconds\n";
      for (const Row& r : rows) {
        csv << r.model << "," << r.cost << "," << r.max_violation << ","
            << r.upward_reserve << "," << r.seconds << "\n";
      }
      RunManifest m = make_manifest(
          "compare", g, flags, {{cmp_case, case_text}, {cmp_data, data_text}});
      m.wall_seconds = elapsed();
      write_file(joined_path(g.out_dir, "compare.csv"), csv.str());
      detail["manifest"] = nlohmann::json::parse(
          attach_manifest("{}", m))["manifest"];
      write_file(joined_path(g.out_dir, "compare.json"), detail.dump(2) + "\n");
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
