#pragma once

// Spherically symmetric configurations: Gauss's theorem fixes nu(w) at every
// radius, so the field is algebraic and phi follows by one quadrature.

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mufield/closed_form.hpp"
#include "mufield/medium.hpp"

namespace mufield {

struct RadialSolution {
  std::vector<double> r;
  std::vector<double> g;    // dphi/dr
  std::vector<double> w;    // |g| / a0
  std::vector<double> phi;
  bool anchored = false;    // true: phi(r_max) = 0 convention (log-type far field)
  double w09_radius = std::numeric_limits<double>::quiet_NaN();  // outermost r with w >= 0.9
  double total_charge = 0.0;
};

/// Enclosed charge of a radial density profile supported on [0, support_radius],
/// plus an optional point charge at the center. Tabulated cumulative quadrature.
inline std::function<double(double)> enclosed_charge(int D, std::function<double(double)> rho,
                                                     double support_radius, double point_q = 0.0) {
  const int n = 4096;
  auto table = std::make_shared<std::vector<double>>(n + 1, 0.0);
  double h = support_radius / n;
  double aD = solid_angle(D);
  auto f = [rho, D](double t) { return (t <= 0.0 && D > 1) ? 0.0 : rho(t) * std::pow(t, D - 1); };
  auto seg = [f](double a, double b) {
    return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
  };
  for (int i = 0; i < n; ++i) (*table)[i + 1] = (*table)[i] + aD * seg(i * h, (i + 1) * h);
  return [table, seg, n, h, support_radius, point_q, aD](double r) -> double {
    if (r <= 0.0) return point_q;
    if (r >= support_radius) return point_q + table->back();
    int i = std::min(n - 1, static_cast<int>(r / h));
    return point_q + (*table)[i] + aD * seg(i * h, r);
  };
}

inline RadialSolution solve_radial(const MediumLaw& law,
                                   const std::function<double(double)>& M_enclosed,
                                   const std::vector<double>& r_grid) {
  if (r_grid.size() < 2) throw std::invalid_argument("solve_radial: need at least two radii");
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    if (r_grid[i] <= 0.0 || (i > 0 && r_grid[i] <= r_grid[i - 1]))
      throw std::invalid_argument("solve_radial: radii must be positive and ascending");
  }

  RadialSolution sol;
  sol.r = r_grid;
  const int n = static_cast<int>(r_grid.size());
  sol.g.resize(n);
  sol.w.resize(n);
  sol.phi.resize(n);

  auto field_at = [&](double r) -> double {
    try {
      return radial_field(law, M_enclosed, r);
    } catch (const SaturationError& e) {
      std::ostringstream os;
      os << "solve_radial: admissibility fails at r=" << r << " (" << e.what() << ")";
      throw SaturationError(os.str());
    }
  };

  for (int i = 0; i < n; ++i) {
    sol.g[i] = field_at(r_grid[i]);
    sol.w[i] = std::abs(sol.g[i]) / law.a0;
    if (sol.w[i] >= 0.9 && !(sol.w09_radius > r_grid[i])) sol.w09_radius = r_grid[i];
  }

  double r_max = r_grid.back();
  sol.total_charge = M_enclosed(r_max);
  double p = law.gamma0() * (law.D - 1);  // far-field decay exponent of g

  if (sol.total_charge == 0.0) {
    sol.phi[n - 1] = 0.0;  // field vanishes outside the support
  } else if (p > 1.0 + 1e-9) {
    // Convergent tail: integrate g outward with the enclosed charge frozen,
    // then close with the measured power tail.
    double Q = sol.total_charge;
    auto g_ext = [&](double s) {
      return radial_field(law, [Q](double) { return Q; }, s);
    };
    double R_far = 64.0 * r_max;
    double tail_scale = std::abs(sol.g[n - 1]) * r_max;
    double outer = integrate(g_ext, r_max, R_far, 1e-12 * std::max(tail_scale, 1e-30));
    double tail = g_ext(R_far) * R_far / (p - 1.0);
    sol.phi[n - 1] = -(outer + tail);
  } else {
    // Logarithmic or slower-decaying potential: anchor at the outer radius.
    sol.phi[n - 1] = 0.0;
    sol.anchored = true;
  }

  for (int i = n - 2; i >= 0; --i) {
    double a = r_grid[i], b = r_grid[i + 1];
    double gm = field_at(0.5 * (a + b));
    double seg = (b - a) / 6.0 * (sol.g[i] + 4.0 * gm + sol.g[i + 1]);
    sol.phi[i] = sol.phi[i + 1] - seg;
  }
  return sol;
}

}  // namespace mufield
