#pragma once

// Test-side reference implementations, written independently of the library
// so that agreement is evidence rather than tautology.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// Plain bisection for increasing f, halving until the bracket is tiny.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double target) {
  if (f(lo) > target || f(hi) < target) throw std::runtime_error("oracle::bisect: bad bracket");
  for (int i = 0; i < 200; ++i) {
    double m = 0.5 * (lo + hi);
    (f(m) < target ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

// Centered finite difference dF/dy.
inline double dFdy(const std::function<double(double)>& F, double y) {
  double d = 1e-6 * std::max(y, 1e-3);
  double ylo = std::max(0.0, y - d);
  return (F(y + d) - F(ylo)) / (y + d - ylo);
}

// Composite Simpson on [a,b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2) ++n;
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace oracle
