#pragma once

// Analytic field and force results used both as standalone calculators and as
// oracles for the grid solver.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mufield/line.hpp"
#include "mufield/math.hpp"
#include "mufield/medium.hpp"

namespace mufield {

/// Signed radial derivative of phi at radius r, from Gauss's theorem:
/// nu(w(r)) = |G| M(r) / (a0 r^{D-1}).
inline double radial_field(const MediumLaw& law, const std::function<double(double)>& M_enclosed,
                           double r) {
  if (r <= 0.0) throw std::invalid_argument("radial_field: r must be > 0");
  double M = M_enclosed(r);
  if (M == 0.0) return 0.0;
  double z = std::abs(law.G) * std::abs(M) / (law.a0 * std::pow(r, law.D - 1));
  return law.a0 * nu_inverse(law, z) * sgn(law.G * M);
}

/// Literal evaluation of the 1D two-charge force formula as printed:
/// F = (a0^2/8G) [chi(w+) - chi(w-)], w± from fluxes |G||q±Q|/(2 a0).
/// Positive value points from q toward Q.
inline double force_1d(const MediumLaw& law, double q, double Q) {
  double zp = std::abs(law.G) * std::abs(q + Q) / (2.0 * law.a0);
  double zm = std::abs(law.G) * std::abs(q - Q) / (2.0 * law.a0);
  double chip = medium_eval(law, nu_inverse(law, zp)).chi;
  double chim = medium_eval(law, nu_inverse(law, zm)).chi;
  return law.a0 * law.a0 / (8.0 * law.G) * (chip - chim);
}

/// The printed 1D formula carries convention-dependent constants. We pin its
/// w± arguments to the side fields actually measured by solve_1d and fit the
/// single remaining prefactor against the momentum-flux force line_force.
struct Force1DCalibration {
  double constant = 0.0;        // fitted multiplier on the printed prefactor
  double max_rel_spread = 0.0;  // worst per-sample deviation from the fit
  int samples = 0;
};

namespace detail {
inline double force_1d_at_measured_fields(const MediumLaw& law, const LineSolution& sol) {
  double chi_l = medium_eval(law, sol.w[0]).chi;
  double chi_m = medium_eval(law, sol.w[1]).chi;
  return law.a0 * law.a0 / (8.0 * law.G) * (chi_l - chi_m);
}
}  // namespace detail

inline Force1DCalibration calibrate_force_1d(const MediumLaw& law) {
  double s = law.bounded_nu() ? 0.5 * law.a0 * law.nu_sup / std::abs(law.G)
                              : law.a0 / std::abs(law.G);
  const std::vector<std::pair<double, double>> pairs = {
      {0.3, 0.7}, {0.5, 0.5}, {0.2, 0.9}, {0.45, 0.15}, {0.65, 0.3}, {-0.4, 0.55}};
  Force1DCalibration cal;
  std::vector<double> ratios;
  for (auto [pq, pQ] : pairs) {
    double q = s * pq, Q = s * pQ;
    LineSolution sol = solve_1d(law, {{0.0, q}, {1.0, Q}});
    double oracle = line_force(law, sol, 0);
    double printed = detail::force_1d_at_measured_fields(law, sol);
    if (printed == 0.0) continue;
    ratios.push_back(oracle / printed);
  }
  if (ratios.empty()) throw std::runtime_error("calibrate_force_1d: no usable samples");
  double sum = 0.0;
  for (double r : ratios) sum += r;
  cal.constant = sum / ratios.size();
  for (double r : ratios) cal.max_rel_spread = std::max(cal.max_rel_spread, std::abs(r / cal.constant - 1.0));
  cal.samples = static_cast<int>(ratios.size());
  return cal;
}

inline double force_1d_calibrated(const MediumLaw& law, double q, double Q,
                                  const Force1DCalibration& cal) {
  LineSolution sol = solve_1d(law, {{0.0, q}, {1.0, Q}});
  return cal.constant * detail::force_1d_at_measured_fields(law, sol);
}

inline double force_1d_calibrated(const MediumLaw& law, double q, double Q) {
  return force_1d_calibrated(law, q, Q, calibrate_force_1d(law));
}

/// Force on a large charge q at R from a small distribution given as point
/// charges, via the exact radial field of q sampled at each element.
template <int D>
Vec<D> large_charge_force(const MediumLaw& law, double q, const Vec<D>& R,
                          const std::vector<std::pair<Vec<D>, double>>& points) {
  Vec<D> f{};
  double sq = sgn(q * law.G);
  for (const auto& [pos, qi] : points) {
    Vec<D> dr = sub<D>(pos, R);
    double dist = norm<D>(dr);
    if (dist <= 0.0) throw std::invalid_argument("large_charge_force: element overlaps the charge");
    double z = std::abs(q * law.G) / (law.a0 * std::pow(dist, D - 1));
    double mag = sq * law.a0 * nu_inverse(law, z) * qi / dist;
    for (int a = 0; a < D; ++a) f[a] += mag * dr[a];
  }
  return f;
}

/// Density version: midpoint quadrature over the box [lo, hi] with Richardson
/// refinement until the requested relative change.
template <int D>
Vec<D> large_charge_force(const MediumLaw& law, double q, const Vec<D>& R,
                          const std::function<double(const Vec<D>&)>& rho, const Vec<D>& lo,
                          const Vec<D>& hi, double rel_tol = 1e-6) {
  auto level = [&](int n) -> Vec<D> {
    std::vector<std::pair<Vec<D>, double>> pts;
    double cellv = 1.0;
    Vec<D> h{};
    for (int a = 0; a < D; ++a) {
      h[a] = (hi[a] - lo[a]) / n;
      cellv *= h[a];
    }
    int total = 1;
    for (int a = 0; a < D; ++a) total *= n;
    pts.reserve(total);
    for (int idx = 0; idx < total; ++idx) {
      int rem = idx;
      Vec<D> x{};
      for (int a = D - 1; a >= 0; --a) {
        x[a] = lo[a] + (rem % n + 0.5) * h[a];
        rem /= n;
      }
      double m = rho(x) * cellv;
      if (m != 0.0) pts.emplace_back(x, m);
    }
    return large_charge_force<D>(law, q, R, pts);
  };
  int n = 8;
  Vec<D> prev = level(n);
  for (int round = 0; round < 6; ++round) {
    n *= 2;
    Vec<D> cur = level(n);
    Vec<D> rich{};
    double diff = 0.0, scale = 0.0;
    for (int a = 0; a < D; ++a) {
      rich[a] = (4.0 * cur[a] - prev[a]) / 3.0;
      diff += (cur[a] - prev[a]) * (cur[a] - prev[a]);
      scale += cur[a] * cur[a];
    }
    if (std::sqrt(diff) <= rel_tol * std::max(std::sqrt(scale), 1e-300)) return rich;
    prev = cur;
  }
  return prev;
}

/// Effective interaction energy of the large charge at R: the force above is
/// -grad_R of this. G_q(s) = int_{s_ref}^{s} nu_inverse(|qG|/(a0 t^{D-1})) dt.
template <int D>
double large_charge_potential(const MediumLaw& law, double q, const Vec<D>& R,
                              const std::vector<std::pair<Vec<D>, double>>& points,
                              double s_ref = 1.0) {
  double e = 0.0;
  double sq = sgn(q * law.G);
  for (const auto& [pos, qi] : points) {
    double dist = norm<D>(sub<D>(pos, R));
    if (dist <= 0.0) throw std::invalid_argument("large_charge_potential: element overlaps the charge");
    double g = integrate(
        [&](double t) {
          return nu_inverse(law, std::abs(q * law.G) / (law.a0 * std::pow(t, D - 1)));
        },
        s_ref, dist, 1e-12);
    e += sq * law.a0 * qi * g;
  }
  return e;
}

/// Laplacian of the per-unit-charge effective interaction kernel at distance s:
/// s(qG) a0 (D-1) (w/s) mu_hat / (1 + mu_hat).
inline double large_charge_greens_laplacian(const MediumLaw& law, double q, double s) {
  if (s <= 0.0) throw std::invalid_argument("large_charge_greens_laplacian: s must be > 0");
  double z = std::abs(q * law.G) / (law.a0 * std::pow(s, law.D - 1));
  double w = nu_inverse(law, z);
  MediumSample ms = medium_eval(law, w);
  return sgn(q * law.G) * law.a0 * (law.D - 1) * (w / s) * ms.mu_hat / (1.0 + ms.mu_hat);
}

/// Scale-free two-body force in the medium mu = w^{D-2}; positive = attraction.
inline double two_body_force_conformal(int D, double q1, double q2, double ell, double G,
                                       double a0) {
  if (D < 2) throw std::invalid_argument("two_body_force_conformal: needs D >= 2");
  if (ell <= 0.0) throw std::invalid_argument("two_body_force_conformal: needs ell > 0");
  double d = double(D) / (D - 1);
  double G_hat = G * std::pow(a0, D - 2);
  double comb = std::pow(std::abs(q1 + q2), d) - std::pow(std::abs(q1), d) - std::pow(std::abs(q2), d);
  return sgn(G) / (ell * d) * std::pow(std::abs(G_hat), d - 1) * comb;
}

/// Shape factor of the two-body force as a function of the charge ratio;
/// normalized so the test-charge limit is 1.
inline double conformal_zeta(int D, double eta) {
  if (D < 2) throw std::invalid_argument("conformal_zeta: needs D >= 2");
  if (eta == 0.0) return 1.0;
  double d = double(D) / (D - 1);
  return (std::pow(std::abs(1.0 + eta), d) - std::pow(std::abs(eta), d) - 1.0) / (d * eta);
}

struct TwoBodyQuery {
  double q1 = 0.0;  // |q1| <= |q2|
  double q2 = 0.0;
  double ell = 0.0;
  double eta = 0.0;    // q1/q2 in [-1, 1]
  double z = 0.0;      // |G q2| / (a0 ell^{D-1})
  double d = 0.0;      // D / (D-1)
  double G_hat = 0.0;  // G a0^{beta0}
};

inline TwoBodyQuery make_two_body_query(const MediumLaw& law, double q1, double q2, double ell) {
  if (ell <= 0.0) throw std::invalid_argument("make_two_body_query: needs ell > 0");
  if (q2 == 0.0 && q1 == 0.0) throw std::invalid_argument("make_two_body_query: both charges zero");
  TwoBodyQuery tb;
  if (std::abs(q1) > std::abs(q2)) std::swap(q1, q2);
  tb.q1 = q1;
  tb.q2 = q2;
  tb.ell = ell;
  tb.eta = q1 / q2;
  tb.z = std::abs(law.G * q2) / (law.a0 * std::pow(ell, law.D - 1));
  tb.d = double(law.D) / (law.D - 1);
  tb.G_hat = law.G * std::pow(law.a0, law.beta0);
  return tb;
}

struct TestForceScaling {
  double f_hat = 0.0;              // reduced force in the test-charge limit
  bool small_eta = true;           // |eta| small enough for the limit to apply
  double measured_exponent = 0.0;  // d ln f_hat / d ln ell at this z
  double reference_exponent = 0.0; // -(D-1)/(1+beta0), exact for pure powers
};

inline TestForceScaling test_force_scaling(const MediumLaw& law, double eta, double z) {
  TestForceScaling out;
  out.f_hat = nu_inverse(law, z);
  out.small_eta = std::abs(eta) < 0.1;
  double z2 = z * std::pow(2.0, -(law.D - 1));  // doubling ell
  out.measured_exponent = std::log(nu_inverse(law, z2) / out.f_hat) / std::log(2.0);
  out.reference_exponent = -(law.D - 1) * law.gamma0();
  return out;
}

}  // namespace mufield
