// Batch front end: scenario files in, solutions / forces / checks / sweep
// tables out. Exit codes: 0 success (and all checks passed), 1 checks failed,
// 2 validation error, 3 solver non-convergence, 4 inadmissible law/charge.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mufield/line.hpp>
#include <mufield/scenario.hpp>

namespace fs = std::filesystem;
using namespace mufield;

namespace {

enum class Mode { Solve, Force, Check, Sweep };

struct CommonArgs {
  std::string scenario;
  std::string out = ".";
  double tol = 0.0;
  int max_iter = 0;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--scenario", a.scenario, "scenario file (TOML)")->required();
  cmd->add_option("--out", a.out, "output directory (created if missing)");
  cmd->add_option("--tol", a.tol, "override solver tolerance");
  cmd->add_option("--max-iter", a.max_iter, "override the Newton iteration cap");
  cmd->add_flag("--quiet", a.quiet, "suppress the console summary");
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ScenarioError("cannot write '" + p.string() + "'");
  out << contents;
}

std::string law_line(const MediumLaw& law) {
  std::ostringstream os;
  os << law.name << " (beta0 " << detail::fmt_double(law.beta0) << ", a0 "
     << detail::fmt_double(law.a0) << ", G " << detail::fmt_double(law.G) << ", D " << law.D
     << (law.conformal() ? ", conformal)" : ")");
  return os.str();
}

template <int D>
std::string grid_line(const Grid<D>& g) {
  std::ostringstream os;
  for (int a = 0; a < D; ++a) os << (a ? "x" : "") << g.n[a];
  os << " cells on ";
  for (int a = 0; a < D; ++a)
    os << (a ? " x " : "") << "[" << detail::fmt_double(g.lo[a]) << ", "
       << detail::fmt_double(g.hi[a]) << "]";
  return os.str();
}

template <int D>
void summarize_forces(std::ostringstream& sum,
                      const std::vector<std::pair<int, ForceReport<D>>>& reports) {
  for (const auto& [idx, rep] : reports) {
    sum << "force " << rep.body_id << ": (";
    for (int a = 0; a < D; ++a) sum << (a ? ", " : "") << detail::fmt_double(rep.force[a]);
    sum << "), |F| " << detail::fmt_double(norm<D>(rep.force)) << ", cross-surface dev "
        << detail::fmt_double(rep.cross_surface_deviation) << "\n";
  }
}

int check_counts(const std::vector<DiagnosticsReport>& checks, int* fails) {
  int pass = 0, fail = 0;
  for (const DiagnosticsReport& r : checks) {
    if (r.status == "pass") ++pass;
    if (r.status == "fail") ++fail;
  }
  if (fails) *fails = fail;
  return pass;
}

template <int D>
int run_sweep(const ScenarioDoc& sd, const Scenario<D>& base, const CommonArgs& args,
              std::ostringstream& sum) {
  if (base.sweep.axis.empty())
    throw ScenarioError("sweep requested but the scenario has no [sweep] table");

  std::vector<SweepRow<D>> rows;
  int total_failed = 0;
  for (double v : base.sweep.values) {
    ScenarioDoc sdv = with_axis_value(sd, base.sweep.axis, v);
    Scenario<D> sc = build_scenario<D>(sdv);
    if (args.tol > 0.0) sc.opts.tol = args.tol;
    if (args.max_iter > 0) sc.opts.max_iter = args.max_iter;
    FieldSolution<D> sol = solve_scenario<D>(sc);

    SweepRow<D> row;
    row.axis = v;
    row.converged = sol.converged;
    row.iterations = sol.iterations;
    row.residual = sol.residual;
    row.energy = energy<D>(sol).direct;
    if (base.outputs.forces) row.forces = scenario_forces<D>(sol, sc);
    if (base.outputs.diagnostics) {
      std::vector<DiagnosticsReport> checks = run_checks<D>(sol, sc);
      int fail = 0;
      row.checks_passed = check_counts(checks, &fail);
      row.checks_failed = fail;
      row.checks_inapplicable = static_cast<int>(checks.size()) - row.checks_passed - fail;
      total_failed += fail;
      for (const DiagnosticsReport& r : checks) {
        if (!row.check_states.empty()) row.check_states += ";";
        row.check_states += r.name + ":" + r.status;
      }
    }
    sum << "  " << base.sweep.axis << " = " << detail::fmt_double(v) << ": iters "
        << row.iterations << ", residual " << detail::fmt_double(row.residual);
    if (base.outputs.forces && !row.forces.empty())
      sum << ", |F0| " << detail::fmt_double(norm<D>(row.forces.front().second.force));
    if (base.outputs.diagnostics)
      sum << ", checks " << row.checks_passed << "/" << row.checks_failed << "/"
          << row.checks_inapplicable;
    sum << "\n";
    rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  write_sweep_csv<D>(csv, base.sweep.axis, rows, base.hash, base.outputs.forces,
                     base.outputs.diagnostics);
  write_file(fs::path(args.out) / "sweep.csv", csv.str());
  sum << "wrote sweep.csv (" << rows.size() << " rows)\n";
  return total_failed > 0 ? 1 : 0;
}

template <int D>
int run_typed(Mode mode, const ScenarioDoc& sd, const CommonArgs& args) {
  Scenario<D> sc = build_scenario<D>(sd);
  if (args.tol > 0.0) sc.opts.tol = args.tol;
  if (args.max_iter > 0) sc.opts.max_iter = args.max_iter;
  fs::create_directories(args.out);

  std::ostringstream sum;
  sum << "mufield " << tool_version() << "\n";
  sum << "scenario " << sd.path << " (hash " << hash_hex(sc.hash) << ")";
  if (!sc.title.empty()) sum << ": " << sc.title;
  sum << "\nlaw: " << law_line(sc.law) << "\n";
  sum << "grid: " << grid_line<D>(sc.grid) << "\n";
  sum << "bodies: " << sc.cfg.bodies.size() << "\n";

  int code = 0;
  if (mode == Mode::Sweep) {
    code = run_sweep<D>(sd, sc, args, sum);
  } else {
    FieldSolution<D> sol = solve_scenario<D>(sc);
    sum << "solve: " << (sol.converged ? "converged" : "NOT converged") << " in "
        << sol.iterations << " steps, residual " << detail::fmt_double(sol.residual) << "\n";
    if (std::optional<double> rs = saturation_radius<D>(sc.law, sc.cfg, sc.grid))
      sum << "saturation radius (w = 0.9) of the total-charge radial profile: "
          << detail::fmt_double(*rs) << "\n";

    {
      std::ostringstream js;
      write_solution_json<D>(js, sol, sc);
      write_file(fs::path(args.out) / "solution.json", js.str());
    }
    if (mode == Mode::Solve || sc.outputs.solve) {
      std::ostringstream ft;
      write_field_text<D>(ft, sol, sc.hash);
      write_file(fs::path(args.out) / "phi.txt", ft.str());
      sum << "wrote phi.txt and solution.json\n";
    }
    if (mode == Mode::Force || sc.outputs.forces) {
      auto reports = scenario_forces<D>(sol, sc);
      std::ostringstream jl;
      write_forces_jsonl<D>(jl, reports, sc.hash);
      write_file(fs::path(args.out) / "forces.jsonl", jl.str());
      summarize_forces<D>(sum, reports);
    }
    if (mode == Mode::Check || sc.outputs.diagnostics) {
      std::vector<DiagnosticsReport> checks = run_checks<D>(sol, sc);
      std::ostringstream js, csv;
      write_reports_json(js, checks, artifact_meta_json(sc.hash));
      csv << "# mufield " << tool_version() << " scenario " << hash_hex(sc.hash) << "\n";
      write_reports_csv(csv, checks);
      write_file(fs::path(args.out) / "checks.json", js.str());
      write_file(fs::path(args.out) / "checks.csv", csv.str());
      int fail = 0;
      int pass = check_counts(checks, &fail);
      sum << "checks: " << pass << " pass / " << fail << " fail / "
          << (checks.size() - pass - fail) << " inapplicable\n";
      for (const DiagnosticsReport& r : checks)
        sum << "  [" << r.status << "] " << r.name
            << (r.note.empty() ? "" : " (" + r.note + ")") << "\n";
      if (fail > 0) code = 1;
    }
  }

  sum << "exit: " << code << "\n";
  write_file(fs::path(args.out) / "summary.txt", sum.str());
  if (!args.quiet) std::cout << sum.str();
  return code;
}

int run_scenario_command(Mode mode, const CommonArgs& args) {
  ScenarioDoc sd = read_scenario_file(args.scenario);
  int D = scenario_dimension(sd);
  if (D == 3) return run_typed<3>(mode, sd, args);
  if (D == 2) return run_typed<2>(mode, sd, args);
  throw ScenarioError("'law.D': grid scenarios support D = 2 or 3 (for D = 1 use `calc force1d`)");
}

struct LawArgs {
  std::string name = "linear";
  double beta = 1.0;
  double gamma = 1.4;
  double a0 = 1.0;
  double G = 0.0;
  int D = 3;
  bool has_G = false;
};

void add_law_flags(CLI::App* cmd, LawArgs& a) {
  cmd->add_option("--law", a.name, "medium law name")->required();
  cmd->add_option("--beta", a.beta, "power-law exponent");
  cmd->add_option("--gamma", a.gamma, "adiabatic index (ideal-gas-flow)");
  cmd->add_option("--a0", a.a0, "field-strength scale");
  cmd->add_option("--G", a.G, "coupling")->each([&a](const std::string&) { a.has_G = true; });
  cmd->add_option("--D", a.D, "dimension");
}

MediumLaw make_law(const LawArgs& a) {
  LawParams p;
  p.beta = a.beta;
  p.gamma = a.gamma;
  p.a0 = a.a0;
  if (a.has_G) p.G = a.G;
  p.D = a.D;
  return builtin_law(a.name, p);
}

int calc_radial(const LawArgs& la, double Q, double r0, double r1, int count,
                const std::string& out) {
  MediumLaw law = make_law(la);
  RadialSolution rs = solve_radial(law, [Q](double) { return Q; }, log_spaced(r0, r1, count));

  std::ostringstream os;
  std::ostringstream params;
  params << la.name << " Q=" << detail::fmt_double(Q) << " r=[" << detail::fmt_double(r0) << ","
         << detail::fmt_double(r1) << "," << count << "]";
  os << "# mufield " << tool_version() << " calc radial " << params.str() << " hash "
     << hash_hex(fnv1a64(params.str())) << "\n";
  os << "r,w,g,phi\n";
  for (std::size_t i = 0; i < rs.r.size(); ++i)
    os << detail::fmt_double(rs.r[i]) << ',' << detail::fmt_double(rs.w[i]) << ','
       << detail::fmt_double(rs.g[i]) << ',' << detail::fmt_double(rs.phi[i]) << "\n";
  if (out == "-")
    std::cout << os.str();
  else
    write_file(out, os.str());

  std::cout << "law: " << law_line(law) << "\n";
  if (std::isfinite(rs.w09_radius))
    std::cout << "saturation radius (w = 0.9): " << detail::fmt_double(rs.w09_radius) << "\n";
  if (rs.anchored) std::cout << "potential anchored to phi = 0 at the outermost radius\n";
  return 0;
}

int calc_force1d(const LawArgs& la, double q, double Q) {
  LawArgs l1 = la;
  l1.D = 1;
  MediumLaw law = make_law(l1);
  double literal = force_1d(law, q, Q);
  Force1DCalibration cal = calibrate_force_1d(law);
  std::cout << "force_1d literal: " << detail::fmt_double(literal) << "\n";
  std::cout << "calibration constant: " << detail::fmt_double(cal.constant) << " (spread "
            << detail::fmt_double(cal.max_rel_spread) << " over " << cal.samples
            << " samples)\n";
  std::cout << "force_1d calibrated: " << detail::fmt_double(cal.constant * literal) << "\n";
  return 0;
}

int calc_twobody(int D, double q1, double q2, double ell, double G, double a0) {
  double f = two_body_force_conformal(D, q1, q2, ell, G, a0);
  TwoBodyQuery q = make_two_body_query(builtin_law("power", {.beta = double(D - 2), .a0 = a0,
                                                             .G = G, .D = D}),
                                       q1, q2, ell);
  std::cout << "force: " << detail::fmt_double(f) << " (positive = attraction)\n";
  std::cout << "eta: " << detail::fmt_double(q.eta) << ", zeta(eta): "
            << detail::fmt_double(conformal_zeta(D, q.eta)) << "\n";
  return 0;
}

int calc_largecharge(const LawArgs& la, double q, double dq, double sep) {
  MediumLaw law = make_law(la);
  if (la.D == 3) {
    Vec<3> R{};
    std::vector<std::pair<Vec<3>, double>> pts = {{{sep, 0.0, 0.0}, dq}};
    Vec<3> f = large_charge_force<3>(law, q, R, pts);
    std::cout << "force on the large charge: (" << detail::fmt_double(f[0]) << ", "
              << detail::fmt_double(f[1]) << ", " << detail::fmt_double(f[2]) << ")\n";
  } else if (la.D == 2) {
    Vec<2> R{};
    std::vector<std::pair<Vec<2>, double>> pts = {{{sep, 0.0}, dq}};
    Vec<2> f = large_charge_force<2>(law, q, R, pts);
    std::cout << "force on the large charge: (" << detail::fmt_double(f[0]) << ", "
              << detail::fmt_double(f[1]) << ")\n";
  } else {
    throw ScenarioError("calc largecharge supports D = 2 or 3");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mufield: nonlinear-medium field solver and theorem checks"};
  app.require_subcommand(1);

  CommonArgs solve_args, force_args, check_args, sweep_args;
  add_common(app.add_subcommand("solve", "solve a scenario and write the field"), solve_args);
  add_common(app.add_subcommand("force", "solve and integrate body forces"), force_args);
  add_common(app.add_subcommand("check", "solve and run the diagnostic battery"), check_args);
  add_common(app.add_subcommand("sweep", "re-solve along the scenario's sweep axis"),
             sweep_args);

  CLI::App* calc = app.add_subcommand("calc", "closed-form calculators");
  calc->require_subcommand(1);

  LawArgs radial_law;
  double radial_Q = 1.0, radial_r0 = 1e-2, radial_r1 = 10.0;
  int radial_count = 64;
  std::string radial_out = "-";
  CLI::App* cradial = calc->add_subcommand("radial", "point-charge radial profile");
  add_law_flags(cradial, radial_law);
  cradial->add_option("--Q", radial_Q, "total charge")->required();
  cradial->add_option("--r0", radial_r0, "innermost radius");
  cradial->add_option("--r1", radial_r1, "outermost radius");
  cradial->add_option("--count", radial_count, "number of radii");
  cradial->add_option("--out", radial_out, "CSV path, or - for stdout");

  LawArgs f1_law;
  double f1_q = 1.0, f1_Q = 1.0;
  CLI::App* cf1 = calc->add_subcommand("force1d", "two-charge force on the line");
  add_law_flags(cf1, f1_law);
  cf1->add_option("--q", f1_q, "first charge")->required();
  cf1->add_option("--Q", f1_Q, "second charge")->required();

  int tb_D = 3;
  double tb_q1 = 1.0, tb_q2 = 1.0, tb_ell = 1.0, tb_G = 1.0, tb_a0 = 1.0;
  CLI::App* ctb = calc->add_subcommand("twobody", "scale-free two-body closed form");
  ctb->add_option("--D", tb_D, "dimension");
  ctb->add_option("--q1", tb_q1, "first charge")->required();
  ctb->add_option("--q2", tb_q2, "second charge")->required();
  ctb->add_option("--ell", tb_ell, "separation")->required();
  ctb->add_option("--G", tb_G, "coupling");
  ctb->add_option("--a0", tb_a0, "field-strength scale");

  LawArgs lc_law;
  double lc_q = 1000.0, lc_dq = 1.0, lc_sep = 1.0;
  CLI::App* clc = calc->add_subcommand("largecharge", "test distribution near a large charge");
  add_law_flags(clc, lc_law);
  clc->add_option("--q", lc_q, "large charge")->required();
  clc->add_option("--dq", lc_dq, "test charge")->required();
  clc->add_option("--sep", lc_sep, "separation")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("solve")) return run_scenario_command(Mode::Solve, solve_args);
    if (app.got_subcommand("force")) return run_scenario_command(Mode::Force, force_args);
    if (app.got_subcommand("check")) return run_scenario_command(Mode::Check, check_args);
    if (app.got_subcommand("sweep")) return run_scenario_command(Mode::Sweep, sweep_args);
    if (calc->got_subcommand("radial"))
      return calc_radial(radial_law, radial_Q, radial_r0, radial_r1, radial_count, radial_out);
    if (calc->got_subcommand("force1d")) return calc_force1d(f1_law, f1_q, f1_Q);
    if (calc->got_subcommand("twobody"))
      return calc_twobody(tb_D, tb_q1, tb_q2, tb_ell, tb_G, tb_a0);
    if (calc->got_subcommand("largecharge"))
      return calc_largecharge(lc_law, lc_q, lc_dq, lc_sep);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
