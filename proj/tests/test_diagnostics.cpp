#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "mufield/diagnostics.hpp"
#include "mufield/radial.hpp"
#include "oracles.hpp"

using namespace mufield;
using Catch::Approx;

namespace {

Body<3> point3(Vec<3> pos, double q, double lambda) {
  Body<3> b;
  b.kind = BodyKind::Point;
  b.position = pos;
  b.q = q;
  b.lambda = lambda;
  return b;
}

// Smooth compact sphere profile with total charge Q.
Body<3> smooth_sphere(Vec<3> pos, double Q, double R) {
  double rho0 = Q / (bump_ball_integral(3) * R * R * R);
  Body<3> b;
  b.kind = BodyKind::Sphere;
  b.position = pos;
  b.radius = R;
  b.profile = [rho0, R](double r) {
    double u = 1.0 - (r / R) * (r / R);
    return rho0 * u * u * u;
  };
  return b;
}

FieldSolution<3> solve_decay(const MediumLaw& law, const ChargeConfiguration<3>& cfg,
                             double extent, int n, double tol) {
  auto g = Grid<3>::make({-extent, -extent, -extent}, {extent, extent, extent}, {n, n, n});
  SolveOptions opts;
  opts.tol = tol;
  return solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, opts);
}

// V for a radially layered blob in the linear medium, from the shell balance
// r^2 phi' = G M(r): V = G int M M' / r dr, done with test-side quadrature.
double linear_blob_virial(const Body<3>& b, double G) {
  int n = 4000;
  double R = b.radius, dr = R / n;
  std::vector<double> M(n + 1, 0.0);
  for (int i = 1; i <= n; ++i) {
    double r0 = (i - 1) * dr, r1 = i * dr;
    double f0 = 4.0 * pi() * r0 * r0 * b.profile(r0);
    double f1 = 4.0 * pi() * r1 * r1 * b.profile(r1);
    M[i] = M[i - 1] + 0.5 * (f0 + f1) * dr;
  }
  double V = 0.0;
  for (int i = 1; i <= n; ++i) {
    double r = (i - 0.5) * dr;
    double Mm = 0.5 * (M[i - 1] + M[i]);
    double Mp = (M[i] - M[i - 1]) / dr;
    V += G * Mm * Mp / r * dr;
  }
  return V;
}

}  // namespace

TEST_CASE("scalar virial relation closes on a linear-medium blob", "[diagnostics]") {
  auto law = builtin_law("linear", {});
  ChargeConfiguration<3> cfg;
  cfg.bodies = {smooth_sphere({0, 0, 0}, 2.0, 0.45)};
  auto sol = solve_decay(law, cfg, 1.0, 40, 1e-10);
  REQUIRE(sol.converged);

  auto surf = SurfaceSpec<3>::box({0, 0, 0}, {0.8, 0.8, 0.8}, 20);
  VirialScalar vs = virial_scalar<3>(sol, surf);
  double V_ref = linear_blob_virial(cfg.bodies[0], law.G);

  INFO("lhs=" << vs.lhs << " rhs=" << vs.rhs << " oracle=" << V_ref);
  REQUIRE(vs.lhs == Approx(V_ref).epsilon(0.03));
  REQUIRE(std::abs(vs.lhs - vs.rhs) < 0.03 * std::abs(vs.lhs));

  // V does not depend on the origin (total self-force vanishes).
  VirialScalar vs2 = virial_scalar<3>(sol, surf, {0.3, -0.2, 0.1});
  REQUIRE(std::abs(vs2.lhs - vs.lhs) < 0.02 * std::abs(vs.lhs));
  REQUIRE(std::abs(vs2.lhs - vs2.rhs) < 0.04 * std::abs(vs.lhs));

  // Centered radial blob: the vector counterpart vanishes by symmetry.
  VirialVector<3> uv = virial_vector_U<3>(sol, surf);
  for (int a = 0; a < 3; ++a) {
    REQUIRE(std::abs(uv.lhs[a]) < 1e-6 * std::abs(vs.lhs));
    REQUIRE(std::abs(uv.rhs[a]) < 1e-3 * std::abs(vs.lhs));
  }

  REQUIRE_THROWS_AS(conformal_virial_reference(law, 1.0), ValidationError);
}

TEST_CASE("scale-free medium virial matches the net-charge formula", "[diagnostics]") {
  LawParams p;
  p.beta = 1.0;
  auto law = builtin_law("power", p);
  REQUIRE(law.conformal());

  double Q = 1.5;
  // d = 3/2, Ghat = G a0: reference reduces to (2/3) sqrt(G a0) Q^{3/2}.
  double ref = conformal_virial_reference(law, Q);
  REQUIRE(ref == Approx((2.0 / 3.0) * std::sqrt(law.G * law.a0) * std::pow(Q, 1.5)).epsilon(1e-12));

  ChargeConfiguration<3> cfg;
  cfg.bodies = {smooth_sphere({0, 0, 0}, Q, 0.3)};
  auto sol = solve_decay(law, cfg, 1.0, 40, 1e-10);
  REQUIRE(sol.converged);

  auto surf = SurfaceSpec<3>::box({0, 0, 0}, {0.8, 0.8, 0.8}, 20);
  VirialScalar vs = virial_scalar<3>(sol, surf);
  INFO("lhs=" << vs.lhs << " rhs=" << vs.rhs << " ref=" << ref
              << " volume=" << vs.volume_term);
  // F_hat = D/2 kills the volume integrand; everything sits in the surface.
  REQUIRE(std::abs(vs.volume_term) < 1e-10 * std::abs(vs.lhs));
  REQUIRE(vs.lhs == Approx(ref).epsilon(0.03));
  REQUIRE(vs.rhs == Approx(ref).epsilon(0.04));
}

TEST_CASE("virial integrals vanish on a vacuum solution", "[diagnostics]") {
  auto law = builtin_law("linear", {});
  ChargeConfiguration<3> cfg;
  auto sol = solve_decay(law, cfg, 1.0, 16, 1e-10);
  REQUIRE(sol.converged);

  auto surf = SurfaceSpec<3>::box({0, 0, 0}, {0.7, 0.7, 0.7}, 8);
  VirialScalar vs = virial_scalar<3>(sol, surf);
  REQUIRE(std::abs(vs.lhs) < 1e-14);
  REQUIRE(std::abs(vs.rhs) < 1e-14);
  VirialVector<3> uv = virial_vector_U<3>(sol, surf);
  for (int a = 0; a < 3; ++a) {
    REQUIRE(std::abs(uv.lhs[a]) < 1e-14);
    REQUIRE(std::abs(uv.rhs[a]) < 1e-14);
  }
  REQUIRE(scalar_virial_identity<3>(sol).residual == 0.0);
}

TEST_CASE("vector virial closes and shifts with the origin", "[diagnostics]") {
  auto law = builtin_law("mond-simple", {});
  ChargeConfiguration<3> cfg;
  cfg.bodies = {smooth_sphere({-0.35, 0, 0}, 1.2, 0.3), smooth_sphere({0.4, 0.1, 0}, 0.6, 0.25)};
  auto sol = solve_decay(law, cfg, 1.2, 40, 1e-10);
  REQUIRE(sol.converged);

  auto surf = SurfaceSpec<3>::box({0, 0, 0}, {0.95, 0.95, 0.95}, 20);
  VirialScalar vs = virial_scalar<3>(sol, surf);
  VirialVector<3> uv = virial_vector_U<3>(sol, surf);
  double scale = std::abs(vs.lhs);
  for (int a = 0; a < 3; ++a) scale = std::max(scale, std::abs(uv.lhs[a]));
  INFO("U lhs = (" << uv.lhs[0] << "," << uv.lhs[1] << "," << uv.lhs[2] << "), rhs = ("
                   << uv.rhs[0] << "," << uv.rhs[1] << "," << uv.rhs[2] << "), V = " << vs.lhs);
  for (int a = 0; a < 3; ++a) REQUIRE(std::abs(uv.lhs[a] - uv.rhs[a]) < 0.06 * scale);

  // Moving the origin by -a adds V a.
  Vec<3> a{0.25, -0.15, 0.1};
  VirialVector<3> shifted = virial_vector_U<3>(sol, surf, {-a[0], -a[1], -a[2]});
  for (int c = 0; c < 3; ++c) {
    double expect = uv.lhs[c] + vs.lhs * a[c];
    REQUIRE(std::abs(shifted.lhs[c] - expect) < 0.05 * (std::abs(vs.lhs * a[c]) + scale));
  }
}

TEST_CASE("potential-energy balance identity", "[diagnostics]") {
  auto law = builtin_law("linear", {});
  ChargeConfiguration<3> cfg;
  cfg.bodies = {smooth_sphere({0, 0, 0}, 2.0, 0.45)};
  auto sol = solve_decay(law, cfg, 1.0, 40, 1e-10);
  REQUIRE(sol.converged);

  ScalarVirialReport rep = scalar_virial_identity<3>(sol);
  INFO("source=" << rep.source_term << " field=" << rep.field_term
                 << " boundary=" << rep.boundary_term << " residual=" << rep.residual);
  REQUIRE(rep.applicable);
  REQUIRE(rep.source_term < 0.0);
  REQUIRE(rep.field_term > 0.0);
  REQUIRE(rep.residual < 0.02);

  SECTION("residual grows linearly under a deliberate perturbation") {
    double pmax = 0.0;
    for (double v : sol.phi) pmax = std::max(pmax, std::abs(v));
    auto perturbed = [&](double amp) {
      FieldSolution<3> bad = sol;
      bad.grid.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
        Vec<3> x = bad.grid.center(i);
        double r2 = dot<3>(x, x) / (0.5 * 0.5);
        if (r2 >= 1.0) return;
        double u = 1.0 - r2;
        bad.phi[k] += amp * pmax * u * u * u;
      });
      return scalar_virial_identity<3>(bad).residual;
    };
    double r1 = perturbed(0.02), r2 = perturbed(0.04), r3 = perturbed(0.08);
    INFO("base=" << rep.residual << " r1=" << r1 << " r2=" << r2 << " r3=" << r3);
    REQUIRE(r1 > 3.0 * rep.residual);
    REQUIRE(r2 / r1 > 1.5);
    REQUIRE(r2 / r1 < 2.5);
    REQUIRE(r3 / r2 > 1.5);
    REQUIRE(r3 / r2 < 2.5);
  }

  SECTION("charged scale-free system is flagged inapplicable") {
    auto mond = builtin_law("mond-simple", {});
    ChargeConfiguration<3> c2;
    c2.bodies = {smooth_sphere({0, 0, 0}, 1.0, 0.35)};
    auto s2 = solve_decay(mond, c2, 1.0, 24, 1e-8);
    ScalarVirialReport r2 = scalar_virial_identity<3>(s2);
    REQUIRE_FALSE(r2.applicable);
    REQUIRE_FALSE(r2.reason.empty());
  }

  SECTION("non-decay boundary is flagged inapplicable") {
    auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {16, 16, 16});
    ChargeConfiguration<3> empty;
    auto s3 = solve_grid<3>(law, empty, BoundaryCondition<3>::uniform_gradient({0.3, 0, 0}), g,
                            SolveOptions{});
    ScalarVirialReport r3 = scalar_virial_identity<3>(s3);
    REQUIRE_FALSE(r3.applicable);
    REQUIRE(r3.reason == "needs a decay boundary");
  }
}

TEST_CASE("far-field decay exponents", "[diagnostics]") {
  SECTION("linear medium, net charge: field falls as 1/r^2") {
    auto law = builtin_law("linear", {});
    ChargeConfiguration<3> cfg;
    cfg.bodies = {smooth_sphere({0, 0, 0}, 2.0, 0.4)};
    auto sol = solve_decay(law, cfg, 1.0, 40, 1e-9);
    DecayReport d = decay_exponent<3>(sol);
    INFO("grad slope " << d.grad_slope << ", phi slope " << d.phi_slope << ", cells "
                       << d.grad_cells);
    REQUIRE(d.has_reference);
    REQUIRE(d.reference == Approx(-2.0));
    REQUIRE(d.grad_slope == Approx(-2.0).margin(0.1));
    REQUIRE(d.phi_slope == Approx(-1.0).margin(0.15));
  }

  SECTION("power medium beta = 1, net charge: field falls as 1/r") {
    LawParams p;
    p.beta = 1.0;
    auto law = builtin_law("power", p);
    ChargeConfiguration<3> cfg;
    cfg.bodies = {smooth_sphere({0, 0, 0}, 1.5, 0.4)};
    auto sol = solve_decay(law, cfg, 1.0, 40, 1e-9);
    DecayReport d = decay_exponent<3>(sol);
    INFO("grad slope " << d.grad_slope);
    REQUIRE(d.has_reference);
    REQUIRE(d.reference == Approx(-1.0));
    REQUIRE(d.grad_slope == Approx(-1.0).margin(0.1));
  }

  SECTION("neutral scale-free pair: potential keeps the 1/r dipole-like form") {
    LawParams p;
    p.beta = 1.0;
    auto law = builtin_law("power", p);
    ChargeConfiguration<3> cfg;
    cfg.bodies = {smooth_sphere({0.35, 0, 0}, 0.9, 0.3), smooth_sphere({-0.35, 0, 0}, -0.9, 0.3)};

    // Pass 1 pins zero at the walls, which is wrong by exactly the dipole
    // term under test, so only an interior window is trustworthy. Fit the
    // K x/r^2 amplitude there, re-solve with that form imposed at the walls,
    // and demand self-consistency: the interior amplitude must survive and
    // the far shell must show the 1/r decay.
    auto sol1 = solve_decay(law, cfg, 1.8, 48, 1e-9);
    auto fit_amp = [](const FieldSolution<3>& s, double* rel_rms) {
      double sb = 0.0, sbb = 0.0, spp = 0.0;
      s.grid.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
        if (s.sources.pinned[k]) return;
        Vec<3> x = s.grid.center(i);
        double r = norm<3>(x);
        if (r < 0.55 || r > 0.95) return;
        double b = x[0] / (r * r);
        sb += s.phi[k] * b;
        sbb += b * b;
        spp += s.phi[k] * s.phi[k];
      });
      double K = sb / sbb;
      // residual of the one-parameter form, relative to the signal size
      if (rel_rms) *rel_rms = std::sqrt(std::max(0.0, 1.0 - sb * sb / (sbb * spp)));
      return K;
    };
    double rms1 = 0.0;
    double K1 = fit_amp(sol1, &rms1);
    INFO("pass-1 amplitude " << K1 << ", form residual " << rms1);
    REQUIRE(rms1 < 0.2);

    DecayReport d1 = decay_exponent<3>(sol1, {1, 0, 0});
    INFO("pass-1 phi slope " << d1.phi_slope << " over " << d1.phi_cells << " cells");
    REQUIRE_FALSE(d1.has_reference);
    REQUIRE(d1.phi_cells > 100);
    // the grounded wall can only steepen the measured decay
    REQUIRE(d1.phi_slope < -0.9);

    auto g = sol1.grid;
    SolveOptions opts;
    opts.tol = 1e-9;
    opts.initial = sol1.phi;
    auto bc = BoundaryCondition<3>::dirichlet([K1](const Vec<3>& x) {
      double r2 = dot<3>(x, x);
      return K1 * x[0] / r2;
    });
    auto sol2 = solve_grid<3>(law, cfg, bc, g, opts);
    REQUIRE(sol2.converged);

    double rms2 = 0.0;
    double K2 = fit_amp(sol2, &rms2);
    // shell slope of the corrected solve, same shell and cone the report uses
    std::vector<double> xs, ys;
    sol2.grid.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
      if (sol2.sources.pinned[k]) return;
      Vec<3> x = sol2.grid.center(i);
      double r = norm<3>(x);
      if (r < 0.9 || r > 1.44) return;
      if (std::abs(x[0]) < 0.8 * r) return;
      if (std::abs(sol2.phi[k]) < 1e-14) return;
      xs.push_back(std::log(r));
      ys.push_back(std::log(std::abs(sol2.phi[k])));
    });
    REQUIRE(xs.size() > 100);
    LineFit lf = fit_line(xs, ys);
    INFO("pass-2 amplitude " << K2 << " (form residual " << rms2 << "), shell slope "
                             << lf.slope << " over " << xs.size() << " cells");
    REQUIRE(K2 == Approx(K1).epsilon(0.10));
    REQUIRE(rms2 < 0.15);
    REQUIRE(lf.slope == Approx(-1.0).margin(0.2));
  }

  SECTION("vacuum has no usable far-field shell") {
    auto law = builtin_law("linear", {});
    ChargeConfiguration<3> cfg;
    auto sol = solve_decay(law, cfg, 1.0, 16, 1e-10);
    REQUIRE_THROWS_AS(decay_exponent<3>(sol), ValidationError);
  }
}

TEST_CASE("comparison principle orders potentials", "[diagnostics]") {
  auto law = builtin_law("linear", {});
  ChargeConfiguration<3> base;
  base.bodies = {smooth_sphere({0.05, 0, 0}, 1.0, 0.35)};
  auto s1 = solve_decay(law, base, 1.0, 32, 1e-9);
  auto s1b = solve_decay(law, base, 1.0, 32, 1e-9);

  SECTION("equal sources tie to solver precision") {
    auto v = comparison_check<3>(s1, s1b, 1e-8);
    REQUIRE(v.status == ComparisonStatus::Pass);
    REQUIRE(std::abs(v.max_diff) < 1e-10);
  }

  SECTION("adding charge lowers the potential everywhere") {
    ChargeConfiguration<3> more = base;
    more.bodies.push_back(smooth_sphere({-0.45, 0.3, 0}, 0.5, 0.2));
    auto s2 = solve_decay(law, more, 1.0, 32, 1e-9);

    auto v = comparison_check<3>(s2, s1, 1e-6);
    INFO("max diff " << v.max_diff << " reason " << v.reason);
    REQUIRE(v.status == ComparisonStatus::Pass);
    REQUIRE(v.max_diff < 0.0);

    auto swapped = comparison_check<3>(s1, s2, 1e-6);
    REQUIRE(swapped.status == ComparisonStatus::Inapplicable);
    REQUIRE(swapped.reason.find("ordering") != std::string::npos);
  }

  SECTION("mismatched discretizations are inapplicable") {
    auto coarse = solve_decay(law, base, 1.0, 24, 1e-9);
    auto v = comparison_check<3>(s1, coarse, 1e-6);
    REQUIRE(v.status == ComparisonStatus::Inapplicable);
  }

  SECTION("field points outward on enclosing convex surfaces") {
    REQUIRE(outward_gradient_min<3>(s1, SurfaceSpec<3>::sphere({0, 0, 0}, 0.7, 12)) > 0.0);
    REQUIRE(outward_gradient_min<3>(s1, SurfaceSpec<3>::box({0, 0, 0}, {0.62, 0.62, 0.62}, 12)) >
            0.0);
  }
}

TEST_CASE("push-pull force directions", "[diagnostics]") {
  auto linear = builtin_law("linear", {});
  auto mond = builtin_law("mond-simple", {});
  auto pair_grid = Grid<3>::make({-1.3, -1.3, -1.3}, {1.3, 1.3, 1.3}, {40, 40, 40});
  auto trio_grid = Grid<3>::make({-1.45, -1.45, -1.45}, {1.45, 1.45, 1.45}, {48, 48, 48});

  std::vector<PushPullScenario<3>> battery;
  {
    PushPullScenario<3> sc;
    sc.name = "same-sign pair attracts (linear)";
    sc.law = linear;
    sc.cfg.bodies = {point3({-0.4, 0, 0}, 1.0, 0.26), point3({0.4, 0, 0}, 1.0, 0.26)};
    sc.grid = pair_grid;
    sc.direction = {1, 0, 0};
    battery.push_back(sc);
  }
  {
    PushPullScenario<3> sc;
    sc.name = "opposite-sign pair repels (linear)";
    sc.law = linear;
    sc.cfg.bodies = {point3({-0.4, 0, 0}, 1.0, 0.26), point3({0.4, 0, 0}, -1.0, 0.26)};
    sc.grid = pair_grid;
    sc.direction = {-1, 0, 0};
    battery.push_back(sc);
  }
  {
    PushPullScenario<3> sc;
    sc.name = "same-sign pair attracts (mond)";
    sc.law = mond;
    sc.cfg.bodies = {point3({-0.4, 0, 0}, 0.8, 0.26), point3({0.4, 0, 0}, 0.8, 0.26)};
    sc.grid = pair_grid;
    sc.direction = {1, 0, 0};
    battery.push_back(sc);
  }
  {
    PushPullScenario<3> sc;
    sc.name = "three-body crossing (mond)";
    sc.law = mond;
    sc.cfg.bodies = {point3({0, 0, 0}, 0.9, 0.25), point3({0.71, 0, 0}, 0.8, 0.25),
                     point3({-0.71, 0, 0}, -0.8, 0.25)};
    sc.grid = trio_grid;
    sc.direction = {1, 0, 0};
    battery.push_back(sc);
  }

  PushPullBattery result = pushpull_battery<3>(battery);
  REQUIRE(result.checks.size() == battery.size());
  for (const auto& c : result.checks) {
    INFO(c.name << ": F.d = " << c.measured << ", error bar " << c.error_bar << " (" << c.note
                << ")");
    CHECK(c.status == "pass");
  }
  REQUIRE(result.summary.status == "pass");
  REQUIRE(result.summary.measured == Approx(double(battery.size())));

  PushPullScenario<3> overlapping = battery[0];
  overlapping.cfg.bodies[1] = point3({-0.2, 0.6, 0}, 1.0, 0.26);
  REQUIRE_THROWS_AS(pushpull_check<3>(overlapping), ValidationError);
}

TEST_CASE("enclosed charge bounded by the bare-field reading", "[diagnostics]") {
  auto surf = SurfaceSpec<3>::sphere({0, 0, 0}, 0.7, 16);

  SECTION("mu = 1 medium reads the same charge both ways") {
    auto law = builtin_law("linear", {});
    ChargeConfiguration<3> cfg;
    cfg.bodies = {smooth_sphere({0, 0, 0}, 2.0, 0.4)};
    auto sol = solve_decay(law, cfg, 1.0, 32, 1e-9);
    ChargeBoundReport cb = charge_bound_check<3>(sol, surf);
    REQUIRE(cb.applicable);
    REQUIRE(cb.Q == Approx(cb.Q_star).margin(1e-13));
    REQUIRE(cb.Q == Approx(2.0).epsilon(0.02));
  }

  SECTION("mu < 1 medium under-reads: Q < Q*") {
    auto law = builtin_law("mond-simple", {});
    ChargeConfiguration<3> cfg;
    cfg.bodies = {smooth_sphere({0, 0, 0}, 2.0, 0.4)};
    auto sol = solve_decay(law, cfg, 1.0, 40, 1e-9);
    ChargeBoundReport cb = charge_bound_check<3>(sol, surf);
    REQUIRE(cb.applicable);
    REQUIRE(cb.Q <= cb.Q_star + 1e-9);
    REQUIRE(cb.Q_star - cb.Q > 0.1 * cb.Q);
    REQUIRE(cb.Q == Approx(2.0).epsilon(0.03));

    // Radial quadrature of the same blob pins the bare-field value.
    auto rad = solve_radial(law, enclosed_charge(3, cfg.bodies[0].profile, 0.4),
                            log_spaced(0.005, 3.0, 4096));
    std::size_t j = 0;
    while (j + 1 < rad.r.size() && rad.r[j + 1] < 0.7) ++j;
    double t = (0.7 - rad.r[j]) / (rad.r[j + 1] - rad.r[j]);
    double w = (1.0 - t) * rad.w[j] + t * rad.w[j + 1];
    double q_star_ref = 0.7 * 0.7 * law.a0 * w / law.G;
    INFO("Q=" << cb.Q << " Q*=" << cb.Q_star << " radial Q* " << q_star_ref);
    REQUIRE(cb.Q_star == Approx(q_star_ref).epsilon(0.03));
  }

  SECTION("mu > 1 medium is out of scope") {
    LawParams p;
    p.G = -1.0;
    auto law = builtin_law("born-infeld", p);
    ChargeConfiguration<3> cfg;
    cfg.bodies = {smooth_sphere({0, 0, 0}, 1.0, 0.35)};
    auto sol = solve_decay(law, cfg, 1.0, 24, 1e-8);
    ChargeBoundReport cb = charge_bound_check<3>(sol, surf);
    REQUIRE_FALSE(cb.applicable);
    REQUIRE(cb.reason.find("mu > 1") != std::string::npos);
  }

  SECTION("mixed-sign sources are out of scope") {
    auto law = builtin_law("linear", {});
    ChargeConfiguration<3> cfg;
    cfg.bodies = {point3({-0.3, 0, 0}, 1.0, 0.26), point3({0.3, 0, 0}, -1.0, 0.26)};
    auto sol = solve_decay(law, cfg, 1.0, 32, 1e-8);
    ChargeBoundReport cb = charge_bound_check<3>(sol, surf);
    REQUIRE_FALSE(cb.applicable);
    REQUIRE(cb.reason.find("mixed-sign") != std::string::npos);
  }
}

TEST_CASE("report batteries serialize to JSON and CSV", "[diagnostics]") {
  std::vector<DiagnosticsReport> reports;
  reports.push_back(make_check("close", "lhs matches rhs", 1.0, 1.001, 0.01));
  reports.push_back(make_check("far", "lhs matches rhs", 2.0, 1.0, 0.1, 0.02,
                               "note, with \"quotes\""));
  DiagnosticsReport na;
  na.name = "skipped";
  na.statement = "hypothesis check";
  na.status = "inapplicable";
  na.note = "precondition failed";
  na.measured = std::numeric_limits<double>::quiet_NaN();
  reports.push_back(na);

  REQUIRE(reports[0].passed());
  REQUIRE_FALSE(reports[1].passed());

  std::ostringstream js;
  write_reports_json(js, reports);
  std::string j = js.str();
  INFO(j);
  REQUIRE(j.find("\"passed\": 1") != std::string::npos);
  REQUIRE(j.find("\"failed\": 1") != std::string::npos);
  REQUIRE(j.find("\"inapplicable\": 1") != std::string::npos);
  REQUIRE(j.find("\\\"quotes\\\"") != std::string::npos);
  REQUIRE(j.find("\"measured\": null") != std::string::npos);

  std::ostringstream cs;
  write_reports_csv(cs, reports);
  std::string c = cs.str();
  INFO(c);
  REQUIRE(c.find("name,status,measured") == 0);
  REQUIRE(c.find("\"note, with \"\"quotes\"\"\"") != std::string::npos);
  REQUIRE(std::count(c.begin(), c.end(), '\n') == 4);
}
