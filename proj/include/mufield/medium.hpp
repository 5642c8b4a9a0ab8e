#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mufield/math.hpp"

namespace mufield {

/// Thrown when a requested flux exceeds sup nu on the admissible range
/// (bounded-response media, sonic transition): point-charge inadmissible.
class SaturationError : public std::domain_error {
 public:
  explicit SaturationError(const std::string& msg) : std::domain_error(msg) {}
};

/// A constitutive law: Lagrangian density shape F(y), response mu(w) = dF/dy
/// at y = w^2, plus the physical constants of the problem.
struct MediumLaw {
  std::string name;
  std::function<double(double)> F;        // F(y), F(0) = 0
  std::function<double(double)> mu;       // mu(w) > 0 for admissible w > 0
  std::function<double(double)> mu_hat;   // optional analytic d ln mu / d ln w
  std::function<double(double)> nu_inv;   // optional analytic inverse of nu(w) = w mu(w)

  double beta0 = 0.0;  // small-argument power: mu ~ w^beta0
  double a0 = 1.0;     // field-strength scale, > 0
  double G = 1.0;      // coupling, signed, nonzero
  int D = 3;           // spatial dimension

  double w_max = std::numeric_limits<double>::infinity();   // admissible w < w_max
  double nu_sup = std::numeric_limits<double>::infinity();  // sup of nu on admissible range
  double mu0 = 1.0;                                         // limit of mu at w -> 0

  double alphaD() const { return solid_angle(D); }
  double gamma0() const { return 1.0 / (1.0 + beta0); }
  /// Conformal case beta0 = D-2: log potential, scale-free two-body force.
  bool conformal() const { return std::abs(beta0 - double(D - 2)) < 1e-12; }
  bool bounded_w() const { return std::isfinite(w_max); }
  bool bounded_nu() const { return std::isfinite(nu_sup); }
};

/// All derived scalars of a law at one field strength w = |grad phi| / a0.
struct MediumSample {
  double w = 0.0;
  double y = 0.0;       // w^2
  double F = 0.0;
  double mu = 0.0;
  double mu_hat = 0.0;  // d ln mu / d ln w
  double nu = 0.0;      // w mu
  double F_hat = 0.0;   // y F'/F
  double chi = 0.0;     // 2 mu w^2 - F = F (2 F_hat - 1)
};

inline void check_admissible(const MediumLaw& law, double w) {
  if (w < 0.0) throw std::domain_error("medium_eval: w must be >= 0");
  if (w >= law.w_max) {
    std::ostringstream os;
    os << "medium_eval: w=" << w << " outside admissible range of law '" << law.name
       << "' (w_max=" << law.w_max << ")";
    throw std::domain_error(os.str());
  }
}

inline MediumSample medium_eval(const MediumLaw& law, double w) {
  check_admissible(law, w);
  MediumSample s;
  s.w = w;
  s.y = w * w;
  if (w == 0.0) {
    // Continuity values: F ~ (2 mu0/(2+beta0)) w^{2+beta0} near zero.
    s.F = 0.0;
    s.mu = law.mu0;
    s.mu_hat = law.beta0;
    s.nu = 0.0;
    s.F_hat = 0.5 * (2.0 + law.beta0);
    s.chi = 0.0;
    return s;
  }
  s.F = law.F(s.y);
  s.mu = law.mu(w);
  if (law.mu_hat) {
    s.mu_hat = law.mu_hat(w);
  } else {
    double dw = 1e-6 * w;
    s.mu_hat = (law.mu(w + dw) - law.mu(w - dw)) * w / (2.0 * dw * s.mu);
  }
  s.nu = w * s.mu;
  // F' = mu as a function of y, so F_hat = y F'/F = w^2 mu / F.
  s.F_hat = (s.F != 0.0) ? s.y * s.mu / s.F : 0.5 * (2.0 + law.beta0);
  s.chi = 2.0 * s.mu * s.y - s.F;
  return s;
}

inline double nu(const MediumLaw& law, double w) {
  check_admissible(law, w);
  return w == 0.0 ? 0.0 : w * law.mu(w);
}

/// Unique w with w mu(w) = z. Analytic where the law provides an inverse,
/// otherwise bracketing bisection to 1e-12 relative.
inline double nu_inverse(const MediumLaw& law, double z) {
  if (z < 0.0) throw std::invalid_argument("nu_inverse: z must be >= 0");
  if (z == 0.0) return 0.0;
  if (z >= law.nu_sup) {
    std::ostringstream os;
    os << "nu_inverse: z=" << z << " exceeds sup nu=" << law.nu_sup << " of law '" << law.name
       << "': point-charge inadmissible (nu saturation)";
    throw SaturationError(os.str());
  }
  if (law.nu_inv) return law.nu_inv(z);
  auto f = [&law](double w) { return w * law.mu(w); };
  double hi;
  if (law.bounded_w()) {
    hi = law.w_max * (1.0 - 1e-15);
    if (f(hi) < z) {
      std::ostringstream os;
      os << "nu_inverse: z=" << z << " unreachable below w_max of law '" << law.name
         << "': point-charge inadmissible (nu saturation)";
      throw SaturationError(os.str());
    }
  } else {
    hi = 1.0;
    int guard = 0;
    while (f(hi) < z) {
      hi *= 2.0;
      if (++guard > 2000) {
        std::ostringstream os;
        os << "nu_inverse: z=" << z << " exceeds reachable nu of law '" << law.name
           << "': point-charge inadmissible (nu saturation)";
        throw SaturationError(os.str());
      }
    }
  }
  return bisect_increasing(f, 0.0, hi, z, 1e-12);
}

struct EllipticityReport {
  std::vector<double> w;
  std::vector<double> mu_hat;
  std::vector<std::size_t> violations;  // indices with mu_hat <= -1
  double min_two_Fhat_minus_one = std::numeric_limits<double>::infinity();
  bool pass = true;
};

inline EllipticityReport ellipticity_report(const MediumLaw& law, const std::vector<double>& w_grid) {
  if (w_grid.empty()) throw std::invalid_argument("ellipticity_report: empty grid");
  EllipticityReport rep;
  rep.w = w_grid;
  rep.mu_hat.reserve(w_grid.size());
  for (std::size_t i = 0; i < w_grid.size(); ++i) {
    MediumSample s = medium_eval(law, w_grid[i]);
    rep.mu_hat.push_back(s.mu_hat);
    if (s.mu_hat <= -1.0) {
      rep.violations.push_back(i);
      rep.pass = false;
    }
    if (s.w > 0.0) rep.min_two_Fhat_minus_one = std::min(rep.min_two_Fhat_minus_one, 2.0 * s.F_hat - 1.0);
  }
  return rep;
}

/// Build F from mu by quadrature: F(y) = int_0^y mu(sqrt(s)) ds, computed as
/// int_0^w 2 t mu(t) dt (smooth integrand for beta0 > 0 laws). Doubling
/// trapezoid to 1e-8 relative.
inline std::function<double(double)> F_from_mu(std::function<double(double)> mu_fn) {
  return [mu_fn](double y) -> double {
    if (y <= 0.0) return 0.0;
    double w = std::sqrt(y);
    auto g = [&mu_fn](double t) { return t <= 0.0 ? 0.0 : 2.0 * t * mu_fn(t); };
    int n = 8;
    double h = w / n;
    double sum = 0.5 * (g(0.0) + g(w));
    for (int i = 1; i < n; ++i) sum += g(i * h);
    double prev = sum * h;
    for (int round = 0; round < 24; ++round) {
      double mid = 0.0;
      for (int i = 0; i < n; ++i) mid += g((i + 0.5) * h);
      double cur = 0.5 * (prev + h * mid);
      n *= 2;
      h *= 0.5;
      if (std::abs(cur - prev) <= 1e-8 * std::max(std::abs(cur), 1e-300)) return cur;
      prev = cur;
    }
    return prev;
  };
}

/// Build mu from F by centered differencing at y = w^2, relative step 1e-6.
inline std::function<double(double)> mu_from_F(std::function<double(double)> F_fn) {
  return [F_fn](double w) -> double {
    double y = w * w;
    double dy = 1e-6 * std::max(y, 1e-8);
    double ylo = std::max(0.0, y - dy);
    return (F_fn(y + dy) - F_fn(ylo)) / (y + dy - ylo);
  };
}

struct LawParams {
  double beta = 1.0;           // power law exponent
  double gamma = 1.4;          // adiabatic index for ideal-gas-flow
  double a0 = 1.0;
  std::optional<double> G;     // default depends on kind
  int D = 3;
};

inline MediumLaw builtin_law(const std::string& kind, const LawParams& p = {}) {
  if (p.a0 <= 0.0) throw std::invalid_argument("builtin_law: a0 must be > 0");
  if (p.D < 1) throw std::invalid_argument("builtin_law: D must be >= 1");
  const double inf = std::numeric_limits<double>::infinity();

  MediumLaw law;
  law.name = kind;
  law.a0 = p.a0;
  law.D = p.D;

  auto set_G = [&](double dflt) { law.G = p.G.value_or(dflt); };

  if (kind == "linear") {
    law.F = [](double y) { return y; };
    law.mu = [](double) { return 1.0; };
    law.mu_hat = [](double) { return 0.0; };
    law.nu_inv = [](double z) { return z; };
    law.beta0 = 0.0;
    law.mu0 = 1.0;
    set_G(1.0);
  } else if (kind == "power") {
    const double b = p.beta;
    if (b <= -1.0) throw std::invalid_argument("builtin_law: power law needs beta > -1 (ellipticity)");
    law.F = [b](double y) { return 2.0 / (2.0 + b) * std::pow(y, 0.5 * (2.0 + b)); };
    law.mu = [b](double w) { return std::pow(w, b); };
    law.mu_hat = [b](double) { return b; };
    law.nu_inv = [b](double z) { return std::pow(z, 1.0 / (1.0 + b)); };
    law.beta0 = b;
    law.mu0 = b > 0.0 ? 0.0 : (b == 0.0 ? 1.0 : inf);
    set_G(1.0);
  } else if (kind == "area-min") {
    law.F = [](double y) { return std::sqrt(1.0 + y) - 1.0; };
    law.mu = [](double w) { return 0.5 / std::sqrt(1.0 + w * w); };
    law.mu_hat = [](double w) { return -w * w / (1.0 + w * w); };
    law.nu_inv = [](double z) { return 2.0 * z / std::sqrt(1.0 - 4.0 * z * z); };
    law.beta0 = 0.0;
    law.mu0 = 0.5;
    law.nu_sup = 0.5;
    set_G(1.0);
    if (law.G <= 0.0) throw std::invalid_argument("builtin_law: area-min law requires G > 0");
  } else if (kind == "born-infeld") {
    law.F = [](double y) { return 2.0 - 2.0 * std::sqrt(1.0 - y); };
    law.mu = [](double w) { return 1.0 / std::sqrt(1.0 - w * w); };
    law.mu_hat = [](double w) { return w * w / (1.0 - w * w); };
    law.nu_inv = [](double z) { return z / std::sqrt(1.0 + z * z); };
    law.beta0 = 0.0;
    law.mu0 = 1.0;
    law.w_max = 1.0;
    set_G(-1.0);
    if (law.G >= 0.0) throw std::invalid_argument("builtin_law: born-infeld law requires G < 0");
  } else if (kind == "mond-simple") {
    law.F = [](double y) {
      double w = std::sqrt(y);
      return w * w - 2.0 * w + 2.0 * std::log1p(w);
    };
    law.mu = [](double w) { return w / (1.0 + w); };
    law.mu_hat = [](double w) { return 1.0 / (1.0 + w); };
    law.nu_inv = [](double z) { return 0.5 * (z + std::sqrt(z * z + 4.0 * z)); };
    law.beta0 = 1.0;
    law.mu0 = 0.0;
    set_G(1.0);
  } else if (kind == "ideal-gas-flow") {
    const double g = p.gamma;
    if (g < 1.0) throw std::invalid_argument("builtin_law: ideal-gas-flow needs gamma >= 1");
    if (g == 1.0) {
      // Isothermal: density exp(-u^2/2c^2), a0 = c, sonic at w = 1.
      law.F = [](double y) { return 2.0 * (1.0 - std::exp(-0.5 * y)); };
      law.mu = [](double w) { return std::exp(-0.5 * w * w); };
      law.mu_hat = [](double w) { return -w * w; };
      law.w_max = 1.0;
      law.nu_sup = std::exp(-0.5);
    } else {
      law.F = [g](double y) { return (g - 1.0) / g * (1.0 - std::pow(1.0 - y, g / (g - 1.0))); };
      law.mu = [g](double w) { return std::pow(1.0 - w * w, 1.0 / (g - 1.0)); };
      law.mu_hat = [g](double w) { return -2.0 * w * w / ((g - 1.0) * (1.0 - w * w)); };
      law.w_max = std::sqrt((g - 1.0) / (g + 1.0));
      law.nu_sup = law.w_max * std::pow(1.0 - law.w_max * law.w_max, 1.0 / (g - 1.0));
    }
    law.beta0 = 0.0;
    law.mu0 = 1.0;
    double flowG = 1.0 / law.alphaD();
    if (p.G && std::abs(*p.G - flowG) > 1e-12 * flowG)
      throw std::invalid_argument("builtin_law: flow laws fix G = 1/alpha_D");
    law.G = flowG;
  } else if (kind == "negative-compressibility-flow") {
    law.F = [](double y) { return 2.0 * (std::exp(0.5 * y) - 1.0); };
    law.mu = [](double w) { return std::exp(0.5 * w * w); };
    law.mu_hat = [](double w) { return w * w; };
    law.beta0 = 0.0;
    law.mu0 = 1.0;
    double flowG = 1.0 / law.alphaD();
    if (p.G && std::abs(*p.G - flowG) > 1e-12 * flowG)
      throw std::invalid_argument("builtin_law: flow laws fix G = 1/alpha_D");
    law.G = flowG;
  } else {
    throw std::invalid_argument("builtin_law: unknown kind '" + kind + "'");
  }

  if (law.G == 0.0) throw std::invalid_argument("builtin_law: G must be nonzero");
  return law;
}

inline std::vector<double> log_spaced(double lo, double hi, int n) {
  if (lo <= 0.0 || hi <= lo || n < 2) throw std::invalid_argument("log_spaced: need 0 < lo < hi, n >= 2");
  std::vector<double> out(n);
  double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i) out[i] = std::exp(llo + (lhi - llo) * i / (n - 1));
  return out;
}

}  // namespace mufield
