#pragma once

// Cell-centered Cartesian grid. The outermost cell layer carries boundary
// values; interior cells are solver unknowns. Faces live between adjacent
// cells; the face gradient combines the normal difference with an averaged
// tangential stencil, which keeps the discrete operator symmetric.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mufield/math.hpp"

namespace mufield {

template <int D>
struct Grid {
  Vec<D> lo{}, hi{};
  std::array<int, D> n{};
  Vec<D> h{};
  std::array<std::int64_t, D> stride{};
  std::int64_t total = 0;

  static Grid make(const Vec<D>& lo, const Vec<D>& hi, const std::array<int, D>& n) {
    Grid g;
    g.lo = lo;
    g.hi = hi;
    g.n = n;
    g.total = 1;
    for (int a = 0; a < D; ++a) {
      if (n[a] < 3) throw std::invalid_argument("Grid: need at least 3 cells per axis");
      if (hi[a] <= lo[a]) throw std::invalid_argument("Grid: empty extent");
      g.h[a] = (hi[a] - lo[a]) / n[a];
      g.total *= n[a];
    }
    std::int64_t s = 1;
    for (int a = D - 1; a >= 0; --a) {
      g.stride[a] = s;
      s *= n[a];
    }
    return g;
  }

  std::int64_t idx(const std::array<int, D>& i) const {
    std::int64_t k = 0;
    for (int a = 0; a < D; ++a) k += i[a] * stride[a];
    return k;
  }

  std::array<int, D> coords(std::int64_t k) const {
    std::array<int, D> i{};
    for (int a = 0; a < D; ++a) {
      i[a] = static_cast<int>(k / stride[a]);
      k %= stride[a];
    }
    return i;
  }

  Vec<D> center(const std::array<int, D>& i) const {
    Vec<D> x{};
    for (int a = 0; a < D; ++a) x[a] = lo[a] + (i[a] + 0.5) * h[a];
    return x;
  }

  bool is_boundary(const std::array<int, D>& i) const {
    for (int a = 0; a < D; ++a)
      if (i[a] == 0 || i[a] == n[a] - 1) return true;
    return false;
  }

  /// True inside the outermost `width` cell layers.
  bool in_boundary_band(const std::array<int, D>& i, int width) const {
    for (int a = 0; a < D; ++a)
      if (i[a] < width || i[a] >= n[a] - width) return true;
    return false;
  }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < D; ++a) v *= h[a];
    return v;
  }

  double min_spacing() const {
    double m = h[0];
    for (int a = 1; a < D; ++a) m = std::min(m, h[a]);
    return m;
  }

  bool contains(const Vec<D>& x) const {
    for (int a = 0; a < D; ++a)
      if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
  }

  template <class F>
  void for_each_cell(F&& fn) const {
    std::array<int, D> i{};
    for (std::int64_t k = 0; k < total; ++k) {
      fn(i, k);
      for (int a = D - 1; a >= 0; --a) {
        if (++i[a] < n[a]) break;
        i[a] = 0;
      }
    }
  }
};

/// A face is identified by its lower cell and its axis; it joins c and c+e_a.
/// fn(axis, lower_cell_coords, lower_cell_flat_index).
template <int D, class F>
void for_each_face(const Grid<D>& g, F&& fn) {
  for (int a = 0; a < D; ++a) {
    std::array<int, D> i{};
    for (std::int64_t k = 0; k < g.total; ++k) {
      if (i[a] < g.n[a] - 1) fn(a, i, k);
      for (int b = D - 1; b >= 0; --b) {
        if (++i[b] < g.n[b]) break;
        i[b] = 0;
      }
    }
  }
}

/// Whether the tangential stencil of face (axis, c) is fully inside the grid.
template <int D>
bool face_has_full_stencil(const Grid<D>& g, int axis, const std::array<int, D>& c) {
  for (int b = 0; b < D; ++b) {
    if (b == axis) continue;
    if (c[b] < 1 || c[b] > g.n[b] - 2) return false;
  }
  return true;
}

/// Gradient at face (axis, c): normal difference plus averaged tangential
/// central differences; tangential parts are dropped when the stencil would
/// leave the grid (such faces join two boundary cells).
template <int D>
Vec<D> face_gradient(const Grid<D>& g, const std::vector<double>& phi, int axis,
                     const std::array<int, D>& c, std::int64_t k) {
  Vec<D> gr{};
  std::int64_t kp = k + g.stride[axis];
  gr[axis] = (phi[kp] - phi[k]) / g.h[axis];
  if (face_has_full_stencil<D>(g, axis, c)) {
    for (int b = 0; b < D; ++b) {
      if (b == axis) continue;
      std::int64_t sb = g.stride[b];
      gr[b] = (phi[k + sb] - phi[k - sb] + phi[kp + sb] - phi[kp - sb]) / (4.0 * g.h[b]);
    }
  }
  return gr;
}

/// Multilinear interpolation of cell-centered values at an arbitrary point,
/// clamped to the outermost cell centers.
template <int D>
double grid_sample(const Grid<D>& g, const std::vector<double>& v, const Vec<D>& x) {
  std::array<int, D> i0{};
  std::array<double, D> t{};
  for (int a = 0; a < D; ++a) {
    double s = (x[a] - g.lo[a]) / g.h[a] - 0.5;
    s = std::min(std::max(s, 0.0), static_cast<double>(g.n[a] - 1));
    double fs = std::floor(s);
    int ia = std::min(static_cast<int>(fs), g.n[a] - 2);
    i0[a] = ia;
    t[a] = s - ia;
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << D); ++corner) {
    double w = 1.0;
    std::int64_t k = 0;
    for (int a = 0; a < D; ++a) {
      int bit = (corner >> a) & 1;
      w *= bit ? t[a] : 1.0 - t[a];
      k += static_cast<std::int64_t>(i0[a] + bit) * g.stride[a];
    }
    if (w != 0.0) acc += w * v[k];
  }
  return acc;
}

template <int D>
std::int64_t face_count(const Grid<D>& g) {
  std::int64_t total = 0;
  for (int a = 0; a < D; ++a) {
    std::int64_t cnt = 1;
    for (int b = 0; b < D; ++b) cnt *= (b == a) ? (g.n[b] - 1) : g.n[b];
    total += cnt;
  }
  return total;
}

}  // namespace mufield
