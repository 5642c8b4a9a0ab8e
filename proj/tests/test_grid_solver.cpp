#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mufield/grid_solver.hpp"
#include "mufield/line.hpp"
#include "mufield/radial.hpp"
#include "oracles.hpp"

using namespace mufield;

namespace {

Body<3> point3(Vec<3> pos, double q, double lambda) {
  Body<3> b;
  b.kind = BodyKind::Point;
  b.position = pos;
  b.q = q;
  b.lambda = lambda;
  return b;
}

// Piecewise-linear interpolation in log r of a radial solution column.
double radial_interp(const RadialSolution& sol, const std::vector<double>& col, double r) {
  const auto& rs = sol.r;
  auto it = std::upper_bound(rs.begin(), rs.end(), r);
  std::size_t i = (it == rs.begin()) ? 0 : static_cast<std::size_t>(it - rs.begin()) - 1;
  if (i + 1 >= rs.size()) i = rs.size() - 2;
  double t = (std::log(r) - std::log(rs[i])) / (std::log(rs[i + 1]) - std::log(rs[i]));
  return (1.0 - t) * col[i] + t * col[i + 1];
}

// Central-difference gradient magnitude at an interior cell, test-side.
double grad_mag(const Grid<3>& g, const std::vector<double>& phi, const std::array<int, 3>& i) {
  double s = 0.0;
  std::int64_t k = g.idx(i);
  for (int a = 0; a < 3; ++a) {
    double d = (phi[k + g.stride[a]] - phi[k - g.stride[a]]) / (2.0 * g.h[a]);
    s += d * d;
  }
  return std::sqrt(s);
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

}  // namespace

TEST_CASE("vacuum with an imposed uniform gradient is solved exactly", "[solver]") {
  for (const char* kind : {"linear", "mond-simple"}) {
    auto law = builtin_law(kind, {});
    auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {16, 16, 16});
    ChargeConfiguration<3> cfg;
    Vec<3> g0{0.31, -0.22, 0.47};
    SolveOptions opts;
    opts.tol = 1e-12;
    auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::uniform_gradient(g0), g, opts);
    REQUIRE(sol.converged);
    double worst = 0.0;
    g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
      double expect = -dot<3>(g0, g.center(i));
      worst = std::max(worst, std::abs(sol.phi[k] - expect));
    });
    REQUIRE(worst < 1e-10);
    REQUIRE(residual_norm<3>(sol) < 1e-12);
  }
}

TEST_CASE("linear point charge reproduces the Coulomb potential", "[solver]") {
  auto law = builtin_law("linear", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {40, 40, 40});
  Vec<3> pos{0.07, -0.04, 0.03};
  double q = 1.5;
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(point3(pos, q, 0.21));
  auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, 1e-10);
  REQUIRE(sol.converged);

  std::vector<double> ref(g.total);
  g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
    ref[k] = -q / norm<3>(sub<3>(g.center(i), pos));
  });
  double worst_phi = 0.0, worst_g = 0.0;
  g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
    double r = norm<3>(sub<3>(g.center(i), pos));
    if (r < 0.35 || r > 0.65) return;
    worst_phi = std::max(worst_phi, std::abs(sol.phi[k] - ref[k]) / std::abs(ref[k]));
    double g_ref = grad_mag(g, ref, i);
    worst_g = std::max(worst_g, std::abs(grad_mag(g, sol.phi, i) - g_ref) / g_ref);
  });
  REQUIRE(worst_phi < 0.01);
  REQUIRE(worst_g < 0.03);
}

TEST_CASE("centered sphere matches the radial solution off the linear regime", "[solver]") {
  auto law = builtin_law("mond-simple", {});
  double Q = 3.0, R = 0.3;
  auto body = smooth_sphere({0, 0, 0}, Q, R);

  auto M = enclosed_charge(3, body.profile, R);
  auto radial = solve_radial(law, M, log_spaced(0.005, 4.0, 4096));

  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {48, 48, 48});
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(body);
  auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, 1e-9);
  REQUIRE(sol.converged);

  double worst = 0.0;
  std::int64_t counted = 0;
  g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
    (void)k;
    double r = norm<3>(g.center(i));
    if (r < 0.35 || r > 0.6) return;
    double g_ref = std::abs(radial_interp(radial, radial.g, r));
    worst = std::max(worst, std::abs(grad_mag(g, sol.phi, i) - g_ref) / g_ref);
    ++counted;
  });
  REQUIRE(counted > 1000);
  REQUIRE(worst < 0.02);
}

TEST_CASE("residual of an interpolated exact solution scales as h^2", "[solver]") {
  auto law = builtin_law("linear", {});
  double Q = 2.0, R = 0.45;
  auto body = smooth_sphere({0, 0, 0}, Q, R);
  auto M = enclosed_charge(3, body.profile, R);
  auto radial = solve_radial(law, M, log_spaced(1e-4, 4.0, 8192));

  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(body);

  auto residual_at = [&](int n) {
    auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {n, n, n});
    FieldSolution<3> sol;
    sol.grid = g;
    sol.law = law;
    sol.bc = BoundaryCondition<3>::decay();
    sol.sources = discretize<3>(cfg, g, law);
    apply_boundary<3>(sol.bc, g, law, cfg, sol.sources);
    sol.phi.resize(g.total);
    g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
      double r = std::max(norm<3>(g.center(i)), 1e-4);
      sol.phi[k] = radial_interp(radial, radial.phi, r);
    });
    return residual_norm<3>(sol);
  };

  double r16 = residual_at(16);
  double r32 = residual_at(32);
  REQUIRE(r32 < r16);
  REQUIRE(r16 / r32 > 2.6);
  REQUIRE(r16 / r32 < 6.5);
}

TEST_CASE("an unconverged iterate is flagged with residual above tol", "[solver]") {
  auto law = builtin_law("mond-simple", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {20, 20, 20});
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(point3({0, 0, 0}, 1.0, 0.45));
  SolveOptions opts;
  opts.tol = 1e-12;
  opts.max_iter = 1;
  opts.throw_on_max_iter = false;
  auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, opts);
  REQUIRE_FALSE(sol.converged);
  REQUIRE(sol.residual > opts.tol);
  REQUIRE(residual_norm<3>(sol) == Catch::Approx(sol.residual).epsilon(1e-10));

  SolveOptions throwing = opts;
  throwing.throw_on_max_iter = true;
  REQUIRE_THROWS_AS(solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, throwing),
                    ConvergenceError);
}

TEST_CASE("accepted steps never increase the energy for G>0, mirrored for G<0", "[solver]") {
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {24, 24, 24});
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(point3({0.05, 0, 0}, 1.1, 0.4));

  auto mond = builtin_law("mond-simple", {});
  auto solp = solve_grid<3>(mond, cfg, BoundaryCondition<3>::decay(), g, 1e-9);
  REQUIRE(solp.energy_history.size() >= 2);
  for (std::size_t i = 1; i < solp.energy_history.size(); ++i)
    REQUIRE(solp.energy_history[i] <=
            solp.energy_history[i - 1] + 1e-12 * std::abs(solp.energy_history[i - 1]));

  LawParams bip;
  bip.G = -1.0;
  auto bi = builtin_law("born-infeld", bip);
  auto soln = solve_grid<3>(bi, cfg, BoundaryCondition<3>::decay(), g, 1e-9);
  for (std::size_t i = 1; i < soln.energy_history.size(); ++i)
    REQUIRE(soln.energy_history[i] >=
            soln.energy_history[i - 1] - 1e-12 * std::abs(soln.energy_history[i - 1]));

  auto rep = energy<3>(soln);
  REQUIRE(rep.direct > 0.0);  // G<0 solutions carry positive energy
}

TEST_CASE("distinct initializations converge to the same field", "[solver]") {
  auto law = builtin_law("mond-simple", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {24, 24, 24});
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(point3({0.04, -0.06, 0.02}, 1.0, 0.4));
  SolveOptions opts;
  opts.tol = 1e-11;
  opts.max_iter = 200;
  auto a = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, opts);

  Rng rng(1234);
  SolveOptions opts2 = opts;
  opts2.initial.resize(g.total);
  for (auto& v : opts2.initial) v = rng.uniform(-0.5, 0.5);
  auto b = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, opts2);

  double worst = 0.0;
  for (std::int64_t k = 0; k < g.total; ++k)
    worst = std::max(worst, std::abs(a.phi[k] - b.phi[k]));
  REQUIRE(worst < 10.0 * 1e-8);
}

TEST_CASE("one-dimensional grid solve matches the closed-form line solution", "[solver]") {
  LawParams lp;
  lp.D = 1;
  auto law = builtin_law("mond-simple", lp);
  std::vector<LineCharge> charges{{-0.3, 0.8}, {0.1, 0.6}, {0.25, -0.2}};
  auto line = solve_1d(law, charges);

  auto g = Grid<1>::make({-1}, {1}, {640});
  ChargeConfiguration<1> cfg;
  for (const auto& c : charges) {
    Body<1> b;
    b.kind = BodyKind::Point;
    b.position = {c.x};
    b.q = c.q;
    b.lambda = 0.02;
    cfg.bodies.push_back(b);
  }
  auto bc = BoundaryCondition<1>::dirichlet([&](const Vec<1>& x) { return line.phi(x[0]); });
  auto sol = solve_grid<1>(law, cfg, bc, g, 1e-11);
  REQUIRE(sol.converged);

  // Sample mu(w) phi' between the charges and outside them.
  auto flux_at = [&](double x) {
    int i = static_cast<int>((x - g.lo[0]) / g.h[0]);
    std::int64_t k = g.idx({i});
    double slope = (sol.phi[k + 1] - sol.phi[k - 1]) / (2.0 * g.h[0]);
    double w = std::abs(slope) / law.a0;
    return medium_eval(law, w).mu * slope;
  };
  // Interior fluxes follow the cumulative charge sums (Gauss in 1D).
  REQUIRE(flux_at(-0.62) == Catch::Approx(line.flux[0]).margin(4e-3));
  REQUIRE(flux_at(-0.10) == Catch::Approx(line.flux[1]).margin(4e-3));
  REQUIRE(flux_at(0.18) == Catch::Approx(line.flux[2]).margin(4e-3));
  REQUIRE(flux_at(0.62) == Catch::Approx(line.flux[3]).margin(4e-3));
}

TEST_CASE("similarity scaling commutes with the grid solve", "[solver]") {
  auto law = builtin_law("mond-simple", {});
  double lambda = 2.5;
  double q = 1.3, width = 0.35;
  Vec<3> pos{0.08, -0.05, 0.0};

  auto g1 = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {24, 24, 24});
  ChargeConfiguration<3> c1;
  c1.bodies.push_back(point3(pos, q, width));
  auto s1 = solve_grid<3>(law, c1, BoundaryCondition<3>::decay(), g1, 1e-11);

  auto scaled_fields = scale_configuration<3>(g1, s1.phi, s1.sources.rho, lambda);

  auto g2 = scaled_fields.grid;
  ChargeConfiguration<3> c2;
  c2.bodies.push_back(
      point3(scaled<3>(pos, lambda), q * lambda * lambda, width * lambda));
  auto s2 = solve_grid<3>(law, c2, BoundaryCondition<3>::decay(), g2, 1e-11);

  double worst = 0.0, scale = 0.0;
  for (std::int64_t k = 0; k < g2.total; ++k) {
    worst = std::max(worst, std::abs(s2.phi[k] - scaled_fields.phi[k]));
    scale = std::max(scale, std::abs(s2.phi[k]));
  }
  REQUIRE(worst < 1e-6 * scale);
}

TEST_CASE("effective charge density recovers the source", "[solver]") {
  auto law = builtin_law("linear", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {32, 32, 32});
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(point3({0.06, 0.02, -0.04}, 1.4, 0.36));
  auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, 1e-10);

  auto rho_star = effective_charge_density<3>(sol, law);
  double sum = 0.0, worst = 0.0, rho_max = 0.0;
  for (std::int64_t k = 0; k < g.total; ++k) {
    sum += rho_star[k];
    rho_max = std::max(rho_max, std::abs(sol.sources.rho[k]));
  }
  sum *= g.cell_volume();
  REQUIRE(sum == Catch::Approx(1.4).epsilon(0.01));
  g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
    if (g.in_boundary_band(i, 4)) return;
    worst = std::max(worst, std::abs(rho_star[k] - sol.sources.rho[k]));
  });
  REQUIRE(worst < 0.10 * rho_max);
}

TEST_CASE("dirichlet bodies obey the maximum principle", "[solver]") {
  auto law = builtin_law("linear", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {32, 32, 32});
  ChargeConfiguration<3> cfg;
  Body<3> cond;
  cond.kind = BodyKind::BoundaryDirichlet;
  cond.position = {0, 0, 0};
  cond.radius = 0.22;
  cond.surface_value = 2.0;
  cfg.bodies.push_back(cond);
  auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, 1e-10);
  REQUIRE(sol.converged);

  double lo = 1e300, hi = -1e300;
  for (double v : sol.phi) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  REQUIRE(lo > -1e-9);
  REQUIRE(hi <= 2.0 + 1e-9);

  // Decaying along the axis away from the held sphere.
  double prev = 2.0;
  for (int i = 17; i < 30; ++i) {
    double v = sol.phi[g.idx({i, 16, 16})];
    REQUIRE(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("dictated-flux obstacles source the right exterior field", "[solver]") {
  auto law = builtin_law("linear", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {32, 32, 32});
  double q_eff = 1.2;
  ChargeConfiguration<3> cfg;
  Body<3> obst;
  obst.kind = BodyKind::BoundaryNeumann;
  obst.position = {0, 0, 0};
  obst.radius = 0.25;
  obst.surface_value = 4.0 * pi() * law.G * q_eff;  // total dictated flux
  cfg.bodies.push_back(obst);
  auto sol = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, 1e-10);
  REQUIRE(sol.converged);
  REQUIRE(total_charge<3>(cfg, &law) == Catch::Approx(q_eff).epsilon(1e-12));

  double worst = 0.0;
  g.for_each_cell([&](const std::array<int, 3>& i, std::int64_t k) {
    double r = norm<3>(g.center(i));
    if (r < 0.42 || r > 0.62) return;
    double ref = -q_eff / r;
    worst = std::max(worst, std::abs(sol.phi[k] - ref) / std::abs(ref));
  });
  REQUIRE(worst < 0.03);
}

TEST_CASE("multilevel continuation reaches the single-level answer", "[solver]") {
  auto law = builtin_law("mond-simple", {});
  auto g = Grid<3>::make({-1, -1, -1}, {1, 1, 1}, {32, 32, 32});
  ChargeConfiguration<3> cfg;
  cfg.bodies.push_back(point3({0.05, 0.03, 0.0}, 1.0, 0.28));
  SolveOptions opts;
  opts.tol = 1e-10;
  auto direct = solve_grid<3>(law, cfg, BoundaryCondition<3>::decay(), g, opts);
  auto nested = solve_grid_multilevel<3>(law, cfg, BoundaryCondition<3>::decay(), g, opts, 8);
  REQUIRE(nested.converged);
  double worst = 0.0;
  for (std::int64_t k = 0; k < g.total; ++k)
    worst = std::max(worst, std::abs(direct.phi[k] - nested.phi[k]));
  REQUIRE(worst < 1e-7);
}
