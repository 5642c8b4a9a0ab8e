#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mufield {

template <int D>
using Vec = std::array<double, D>;

template <int D>
inline double dot(const Vec<D>& a, const Vec<D>& b) {
  double s = 0.0;
  for (int i = 0; i < D; ++i) s += a[i] * b[i];
  return s;
}

template <int D>
inline double norm(const Vec<D>& a) {
  return std::sqrt(dot<D>(a, a));
}

template <int D>
inline Vec<D> sub(const Vec<D>& a, const Vec<D>& b) {
  Vec<D> r{};
  for (int i = 0; i < D; ++i) r[i] = a[i] - b[i];
  return r;
}

template <int D>
inline Vec<D> add(const Vec<D>& a, const Vec<D>& b) {
  Vec<D> r{};
  for (int i = 0; i < D; ++i) r[i] = a[i] + b[i];
  return r;
}

template <int D>
inline Vec<D> scaled(const Vec<D>& a, double s) {
  Vec<D> r{};
  for (int i = 0; i < D; ++i) r[i] = a[i] * s;
  return r;
}

inline constexpr double pi() { return 3.141592653589793238462643383279502884; }

/// Complete solid angle in D dimensions, 2 pi^{D/2} / Gamma(D/2).
inline double solid_angle(int dim) {
  if (dim < 1) throw std::invalid_argument("solid_angle: dimension must be >= 1");
  return 2.0 * std::pow(M_PI, 0.5 * dim) / std::tgamma(0.5 * dim);
}

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Bisection for an increasing function f on [lo, hi] with f(lo) <= target <= f(hi).
/// Converges to relative tolerance rtol on the argument.
inline double bisect_increasing(const std::function<double(double)>& f, double lo, double hi,
                                double target, double rtol = 1e-13) {
  double flo = f(lo) - target;
  double fhi = f(hi) - target;
  if (flo > 0.0 || fhi < 0.0) throw std::domain_error("bisect_increasing: target not bracketed");
  for (int it = 0; it < 400; ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid) - target;
    if (fm <= 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= rtol * std::max(0.5 * (lo + hi), 1e-300)) break;
  }
  return 0.5 * (lo + hi);
}

namespace detail {
inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int max_depth = 40) {
  if (a == b) return 0.0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  int points = 0;
};

/// Least-squares straight line through (x, y) samples.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 samples");
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double det = n * sxx - sx * sx;
  if (std::abs(det) < 1e-300) throw std::domain_error("fit_line: degenerate abscissae");
  LineFit out;
  out.slope = (n * sxy - sx * sy) / det;
  out.intercept = (sy * sxx - sx * sxy) / det;
  out.points = n;
  double ss = 0;
  for (int i = 0; i < n; ++i) {
    double e = y[i] - (out.slope * x[i] + out.intercept);
    ss += e * e;
  }
  out.residual_rms = std::sqrt(ss / n);
  return out;
}

/// splitmix64: deterministic across platforms, used for all randomized scenarios.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return std::ldexp(static_cast<double>(next_u64() >> 11), -53); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
  }

 private:
  std::uint64_t state_;
};

}  // namespace mufield
