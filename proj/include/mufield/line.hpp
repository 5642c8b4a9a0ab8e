#pragma once

// One-dimensional configurations admit an exact solution: the flux m = mu phi'
// is piecewise constant, fixed segment by segment by Gauss's theorem, with the
// symmetric boundary condition m(+inf) = -m(-inf) that nullifies the force on
// the system as a whole.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mufield/medium.hpp"

namespace mufield {

struct LineCharge {
  double x = 0.0;
  double q = 0.0;
};

struct LineSolution {
  std::vector<LineCharge> charges;  // sorted by position
  std::vector<double> flux;         // m_k = mu phi' on segment k; size charges+1
  std::vector<double> w;            // |phi'| / a0 per segment
  std::vector<double> slope;        // phi' per segment
  double total_charge = 0.0;
  double a0 = 1.0;
  double G = 1.0;

  // Piecewise-linear potential anchored at the leftmost charge.
  double phi(double x) const {
    double p = 0.0;
    double cur = charges.front().x;
    if (x >= cur) {
      for (std::size_t k = 1; k < charges.size(); ++k) {
        double nxt = charges[k].x;
        if (x < nxt) return p + slope[k] * (x - cur);
        p += slope[k] * (nxt - cur);
        cur = nxt;
      }
      return p + slope.back() * (x - cur);
    }
    return slope.front() * (x - cur);
  }

  int segment_of(double x) const {
    int k = 0;
    while (k < static_cast<int>(charges.size()) && x > charges[k].x) ++k;
    return k;
  }
};

inline LineSolution solve_1d(const MediumLaw& law, std::vector<LineCharge> charges) {
  if (charges.empty()) throw std::invalid_argument("solve_1d: no charges");
  std::sort(charges.begin(), charges.end(), [](const LineCharge& a, const LineCharge& b) { return a.x < b.x; });

  LineSolution sol;
  sol.charges = charges;
  sol.a0 = law.a0;
  sol.G = law.G;
  for (const auto& c : charges) sol.total_charge += c.q;

  const int n = static_cast<int>(charges.size());
  sol.flux.resize(n + 1);
  sol.w.resize(n + 1);
  sol.slope.resize(n + 1);
  double partial = 0.0;
  for (int k = 0; k <= n; ++k) {
    // alpha_1 = 2: the flux jump across charge q is 2 G q.
    sol.flux[k] = law.G * (2.0 * partial - sol.total_charge);
    sol.w[k] = nu_inverse(law, std::abs(sol.flux[k]) / law.a0);
    sol.slope[k] = law.a0 * sol.w[k] * sgn(sol.flux[k]);
    if (k < n) partial += charges[k].q;
  }
  return sol;
}

/// Momentum-flux force on charge i: the one-dimensional stress is
/// (a0^2 / 2 alpha_1 G) chi(w), and the force is its drop across the body.
inline double line_force(const MediumLaw& law, const LineSolution& sol, int i) {
  if (i < 0 || i >= static_cast<int>(sol.charges.size())) throw std::out_of_range("line_force: bad index");
  double c = law.a0 * law.a0 / (2.0 * solid_angle(1) * law.G);
  double chi_l = medium_eval(law, sol.w[i]).chi;
  double chi_r = medium_eval(law, sol.w[i + 1]).chi;
  return c * (chi_l - chi_r);
}

}  // namespace mufield
