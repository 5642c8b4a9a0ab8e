#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mufield/line.hpp"
#include "oracles.hpp"

using namespace mufield;
using Catch::Approx;

namespace {
MediumLaw lin(double G = 1.0, double a0 = 1.0) {
  LawParams p;
  p.G = G;
  p.a0 = a0;
  return builtin_law("linear", p);
}
}  // namespace

TEST_CASE("single charge carries antisymmetric flux", "[line]") {
  auto law = lin(1.3);
  auto sol = solve_1d(law, {{0.0, 2.5}});
  CHECK(sol.flux[0] == Approx(-1.3 * 2.5));
  CHECK(sol.flux[1] == Approx(+1.3 * 2.5));
  CHECK(sol.slope[0] == Approx(-sol.slope[1]));
}

TEST_CASE("flux vanishes outside a neutral pair", "[line]") {
  auto law = lin();
  auto sol = solve_1d(law, {{-1.0, 0.75}, {1.0, -0.75}});
  CHECK(sol.flux[0] == 0.0);
  CHECK(sol.flux[2] == 0.0);
  CHECK(sol.flux[1] == Approx(2.0 * 0.75));
}

TEST_CASE("segment fluxes follow cumulative charge", "[line]") {
  auto law = lin(0.8);
  std::vector<LineCharge> cs = {{-2.0, 1.0}, {0.5, -0.4}, {3.0, 2.2}};
  auto sol = solve_1d(law, cs);
  double total = 1.0 - 0.4 + 2.2;
  double partial = 0.0;
  for (int k = 0; k <= 3; ++k) {
    CHECK(sol.flux[k] == Approx(0.8 * (2.0 * partial - total)));
    if (k < 3) partial += cs[k].q;
  }
}

TEST_CASE("linear fields superpose", "[line]") {
  auto law = lin(1.0);
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    int n = rng.uniform_int(2, 5);
    std::vector<LineCharge> cs;
    for (int i = 0; i < n; ++i) cs.push_back({rng.uniform(-5.0, 5.0), rng.uniform(-2.0, 2.0)});
    auto sol = solve_1d(law, cs);
    // Each charge alone contributes slope G q sgn(x - x_i).
    for (double x : {-7.3, -0.11, 2.6, 8.1}) {
      double expect = 0.0;
      bool on_charge = false;
      for (auto& c : sol.charges) {
        if (x == c.x) on_charge = true;
        expect += law.G * c.q * (x > c.x ? 1.0 : -1.0);
      }
      if (on_charge) continue;
      int k = sol.segment_of(x);
      CHECK(sol.slope[k] == Approx(expect).margin(1e-12));
    }
    double total_force = 0.0;
    for (int i = 0; i < n; ++i) {
      double expect = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        expect -= sol.charges[i].q * law.G * sol.charges[j].q *
                  sgn(sol.charges[i].x - sol.charges[j].x);
      }
      double f = line_force(law, sol, i);
      CHECK(f == Approx(expect).margin(1e-10));
      total_force += f;
    }
    CHECK(total_force == Approx(0.0).margin(1e-10));
  }
}

TEST_CASE("forces across the whole system cancel for nonlinear media too", "[line]") {
  for (auto kind : {"power", "mond-simple", "born-infeld"}) {
    auto law = builtin_law(kind);
    std::vector<LineCharge> cs = {{-1.5, 0.4}, {0.0, -0.2}, {2.0, 0.55}};
    auto sol = solve_1d(law, cs);
    double total = 0.0;
    for (int i = 0; i < 3; ++i) total += line_force(law, sol, i);
    CHECK(total == Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("segment fields invert the flux relation", "[line]") {
  auto law = builtin_law("mond-simple");
  auto sol = solve_1d(law, {{0.0, 0.9}, {1.0, 0.3}});
  for (std::size_t k = 0; k < sol.flux.size(); ++k) {
    double z = std::abs(sol.flux[k]) / law.a0;
    if (z == 0.0) {
      CHECK(sol.w[k] == 0.0);
      continue;
    }
    double w_ref = oracle::bisect([&](double w) { return w * law.mu(w); }, 0.0, 100.0, z);
    CHECK(sol.w[k] == Approx(w_ref).epsilon(1e-9));
    CHECK(sol.slope[k] == Approx(law.a0 * w_ref * sgn(sol.flux[k])).epsilon(1e-9));
  }
}

TEST_CASE("bounded media refuse over-saturated segments", "[line]") {
  auto law = builtin_law("area-min");
  CHECK_THROWS_AS(solve_1d(law, {{0.0, 5.0}, {1.0, 5.0}}), SaturationError);
}

TEST_CASE("potential is continuous piecewise-linear", "[line]") {
  auto law = lin();
  auto sol = solve_1d(law, {{-1.0, 1.0}, {2.0, -0.5}});
  CHECK(sol.phi(-1.0) == 0.0);
  for (double x : {-3.0, -1.0, 0.0, 1.9999, 2.0, 4.5}) {
    double eps = 1e-7;
    double left = sol.phi(x - eps), right = sol.phi(x + eps);
    CHECK(right - left == Approx(0.0).margin(1e-5));
  }
  int k = sol.segment_of(0.0);
  double slope_fd = (sol.phi(0.5) - sol.phi(-0.5)) / 1.0;
  CHECK(slope_fd == Approx(sol.slope[k]));
}
