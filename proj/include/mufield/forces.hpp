#pragma once

// Field stress tensor and the two numerical force definitions on bodies:
// the surface integral of the stress and the volume integral of the
// effective charge against the field gradient.

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mufield/grid_solver.hpp"
#include "mufield/math.hpp"
#include "mufield/medium.hpp"
#include "mufield/sources.hpp"

namespace mufield {

template <int D>
using Matrix = std::array<std::array<double, D>, D>;

template <int D>
struct StressSample {
  Vec<D> position{};
  Matrix<D> P{};
  Vec<D> e{};               // unit field direction (zero at zero field)
  double along = 0.0;       // eigenvalue along e
  double transverse = 0.0;  // the D-1 equal transverse eigenvalues
  double trace = 0.0;
};

/// P = -(a0^2 / 2 alpha_D G) F (1 - 2 F_hat e x e). Tension along field
/// lines has the sign of G's energy convention; at zero field P vanishes.
template <int D>
StressSample<D> stress_tensor(const Vec<D>& gradphi, const MediumLaw& law) {
  StressSample<D> out;
  double gn = norm<D>(gradphi);
  double w = gn / law.a0;
  MediumSample s = medium_eval(law, w);
  double pref = -law.a0 * law.a0 * s.F / (2.0 * law.alphaD() * law.G);
  if (gn > 0.0) out.e = scaled<D>(gradphi, 1.0 / gn);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      out.P[i][j] = pref * ((i == j ? 1.0 : 0.0) - 2.0 * s.F_hat * out.e[i] * out.e[j]);
  out.along = pref * (1.0 - 2.0 * s.F_hat);
  out.transverse = pref;
  out.trace = pref * (D - 2.0 * s.F_hat);
  return out;
}

/// Cell-centered gradient of a solution, interpolated anywhere in the box.
/// Centered differences in the interior, one-sided next to excluded cells
/// and the box faces.
template <int D>
class GradientField {
 public:
  explicit GradientField(const FieldSolution<D>& sol) : g_(sol.grid) {
    for (int a = 0; a < D; ++a) comp_[a].assign(g_.total, 0.0);
    const auto& phi = sol.phi;
    const auto& ex = sol.sources.excluded;
    g_.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
      if (ex[k]) return;
      for (int a = 0; a < D; ++a) {
        std::int64_t s = g_.stride[a];
        bool up = i[a] + 1 < g_.n[a] && !ex[k + s];
        bool dn = i[a] - 1 >= 0 && !ex[k - s];
        if (up && dn)
          comp_[a][k] = (phi[k + s] - phi[k - s]) / (2.0 * g_.h[a]);
        else if (up)
          comp_[a][k] = (phi[k + s] - phi[k]) / g_.h[a];
        else if (dn)
          comp_[a][k] = (phi[k] - phi[k - s]) / g_.h[a];
      }
    });
  }

  Vec<D> at(const Vec<D>& x) const {
    Vec<D> out{};
    for (int a = 0; a < D; ++a) out[a] = grid_sample<D>(g_, comp_[a], x);
    return out;
  }

  Vec<D> cell(std::int64_t k) const {
    Vec<D> out{};
    for (int a = 0; a < D; ++a) out[a] = comp_[a][k];
    return out;
  }

  const Grid<D>& grid() const { return g_; }

 private:
  Grid<D> g_;
  std::array<std::vector<double>, D> comp_;
};

template <int D>
struct SurfaceSpec {
  enum class Kind { Box, Sphere };
  Kind kind = Kind::Box;
  Vec<D> center{};
  Vec<D> half{};      // box half-widths
  double radius = 0;  // sphere
  int panels = 32;    // panels per angle / per box-face axis

  static SurfaceSpec box(const Vec<D>& center, const Vec<D>& half, int panels = 32) {
    SurfaceSpec s;
    s.kind = Kind::Box;
    s.center = center;
    s.half = half;
    s.panels = panels;
    return s;
  }
  static SurfaceSpec sphere(const Vec<D>& center, double radius, int panels = 32) {
    SurfaceSpec s;
    s.kind = Kind::Sphere;
    s.center = center;
    s.radius = radius;
    s.panels = panels;
    return s;
  }

  SurfaceSpec scaled_copy(double f) const {
    SurfaceSpec s = *this;
    for (int a = 0; a < D; ++a) s.half[a] *= f;
    s.radius *= f;
    return s;
  }

  bool contains(const Vec<D>& x) const {
    if (kind == Kind::Box) {
      for (int a = 0; a < D; ++a)
        if (std::abs(x[a] - center[a]) > half[a]) return false;
      return true;
    }
    return norm<D>(sub<D>(x, center)) <= radius;
  }

  std::string describe() const {
    std::ostringstream os;
    os << (kind == Kind::Box ? "box" : "sphere") << " @ (";
    for (int a = 0; a < D; ++a) os << (a ? "," : "") << center[a];
    os << ")";
    if (kind == Kind::Box) {
      os << " half (";
      for (int a = 0; a < D; ++a) os << (a ? "," : "") << half[a];
      os << ")";
    } else {
      os << " r=" << radius;
    }
    return os.str();
  }

  /// Midpoint quadrature: fn(point, outward unit normal, area element).
  template <class F>
  void for_each_panel(F&& fn) const {
    if (kind == Kind::Box) {
      for (int a = 0; a < D; ++a) {
        for (int side = -1; side <= 1; side += 2) {
          std::int64_t count = 1;
          for (int b = 0; b < D; ++b) count *= (b == a) ? 1 : panels;
          double dA = 1.0;
          for (int b = 0; b < D; ++b)
            if (b != a) dA *= 2.0 * half[b] / panels;
          for (std::int64_t p = 0; p < count; ++p) {
            Vec<D> x = center;
            x[a] += side * half[a];
            std::int64_t rem = p;
            for (int b = 0; b < D; ++b) {
              if (b == a) continue;
              int ib = static_cast<int>(rem % panels);
              rem /= panels;
              x[b] += -half[b] + (ib + 0.5) * (2.0 * half[b] / panels);
            }
            Vec<D> nrm{};
            nrm[a] = static_cast<double>(side);
            fn(x, nrm, dA);
          }
        }
      }
      return;
    }
    if constexpr (D == 1) {
      for (int side = -1; side <= 1; side += 2) {
        Vec<D> x = center;
        x[0] += side * radius;
        Vec<D> nrm{};
        nrm[0] = side;
        fn(x, nrm, 1.0);
      }
    } else if constexpr (D == 2) {
      int m = 4 * panels;
      double dth = 2.0 * pi() / m;
      for (int i = 0; i < m; ++i) {
        double th = (i + 0.5) * dth;
        Vec<D> nrm{std::cos(th), std::sin(th)};
        Vec<D> x = add<D>(center, scaled<D>(nrm, radius));
        fn(x, nrm, radius * dth);
      }
    } else if constexpr (D == 3) {
      int mt = 2 * panels, mp = 4 * panels;
      double dth = pi() / mt, dph = 2.0 * pi() / mp;
      for (int i = 0; i < mt; ++i) {
        double th = (i + 0.5) * dth;
        for (int j = 0; j < mp; ++j) {
          double ph = (j + 0.5) * dph;
          Vec<D> nrm{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
          Vec<D> x = add<D>(center, scaled<D>(nrm, radius));
          fn(x, nrm, radius * radius * std::sin(th) * dth * dph);
        }
      }
    } else {
      throw ValidationError("sphere surfaces are implemented for D <= 3; use a box");
    }
  }
};

template <int D>
struct ForceReport {
  std::string body_id;
  Vec<D> force{};
  std::string method;
  std::vector<std::string> surfaces;
  double cross_surface_deviation = 0.0;  // relative, between the two surfaces
  double quadrature_error = 0.0;         // relative, from panel refinement
};

namespace detail {

template <int D>
Vec<D> stress_flux(const GradientField<D>& gf, const MediumLaw& law, const SurfaceSpec<D>& surf) {
  Vec<D> F{};
  surf.for_each_panel([&](const Vec<D>& x, const Vec<D>& nrm, double dA) {
    if (!gf.grid().contains(x)) throw ValidationError("force_surface: surface exits grid");
    StressSample<D> s = stress_tensor<D>(gf.at(x), law);
    for (int i = 0; i < D; ++i) {
      double Pn = 0.0;
      for (int j = 0; j < D; ++j) Pn += s.P[i][j] * nrm[j];
      F[i] -= Pn * dA;
    }
  });
  return F;
}

/// Largest factor <= want by which `surf` can grow and stay inside the free
/// region of the grid (clear of the pinned boundary band).
template <int D>
double grow_factor(const Grid<D>& g, const SurfaceSpec<D>& surf, double want) {
  double f = want;
  for (int a = 0; a < D; ++a) {
    double margin = (boundary_band_width + 1.5) * g.h[a];
    double extent = surf.kind == SurfaceSpec<D>::Kind::Box ? surf.half[a] : surf.radius;
    double room_lo = surf.center[a] - (g.lo[a] + margin);
    double room_hi = (g.hi[a] - margin) - surf.center[a];
    double room = std::min(room_lo, room_hi);
    if (extent > 0.0) f = std::min(f, room / extent);
  }
  return f;
}

}  // namespace detail

/// F = -surface integral of P . ds by midpoint quadrature of the interpolated
/// gradient. The report carries a second, rescaled surface and the relative
/// deviation between the two (a discrete momentum-conservation gauge), plus a
/// panel-refinement error estimate.
template <int D>
ForceReport<D> force_surface(const FieldSolution<D>& sol, const SurfaceSpec<D>& surf,
                             const std::string& body_id = "") {
  GradientField<D> gf(sol);
  ForceReport<D> rep;
  rep.body_id = body_id;
  rep.method = "surface";

  Vec<D> F1 = detail::stress_flux<D>(gf, sol.law, surf);
  SurfaceSpec<D> fine = surf;
  fine.panels = 2 * surf.panels;
  Vec<D> F1f = detail::stress_flux<D>(gf, sol.law, fine);

  double f = detail::grow_factor<D>(sol.grid, surf, 1.18);
  SurfaceSpec<D> other = surf.scaled_copy(f > 1.02 ? f : 0.85);
  Vec<D> F2 = detail::stress_flux<D>(gf, sol.law, other);

  rep.force = F1f;
  rep.surfaces = {surf.describe(), other.describe()};
  double scale = std::max(norm<D>(F1f), norm<D>(F2));
  rep.cross_surface_deviation = scale > 0.0 ? norm<D>(sub<D>(F1f, F2)) / scale : 0.0;
  double qscale = std::max(norm<D>(F1f), norm<D>(F1));
  rep.quadrature_error = qscale > 0.0 ? norm<D>(sub<D>(F1f, F1)) / qscale : 0.0;
  return rep;
}

/// F = -integral of rho* grad(phi) over the body's neighborhood, with rho*
/// the ambient-medium effective charge density.
template <int D>
ForceReport<D> force_volume(const FieldSolution<D>& sol, const Body<D>& body,
                            const MediumLaw& ambient) {
  std::vector<double> rho_star = effective_charge_density<D>(sol, ambient);
  GradientField<D> gf(sol);
  const Grid<D>& g = sol.grid;

  double margin = 3.0 * g.min_spacing();
  double r_in = body.bounding_radius() + margin;
  ForceReport<D> rep;
  rep.body_id = body.id;
  rep.method = "volume";
  double vol = g.cell_volume();
  std::int64_t used = 0;
  g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
    Vec<D> x = g.center(i);
    if (norm<D>(sub<D>(x, body.position)) > r_in) return;
    if (sol.sources.excluded[k]) return;
    if (rho_star[k] == 0.0) return;
    Vec<D> gr = gf.at(x);
    for (int a = 0; a < D; ++a) rep.force[a] -= rho_star[k] * gr[a] * vol;
    ++used;
  });
  if (used == 0) throw ValidationError("force_volume: body region unresolved by grid");
  return rep;
}

template <int D>
struct DalembertReport {
  Vec<D> force{};
  Vec<D> reference{};  // Q g0
  double rel_deviation = 0.0;
  double scale = 0.0;  // denominator used
};

/// Drag/lift check for a body held in an imposed uniform far field: the force
/// must equal Q g0, and in particular vanish for chargeless obstacles and
/// inclusions.
template <int D>
DalembertReport<D> dalembert_check(const FieldSolution<D>& sol, const ChargeConfiguration<D>& cfg,
                                   const Vec<D>& g0, double reference_scale = 0.0) {
  if (sol.bc.kind != BoundaryKind::UniformGradient)
    throw ValidationError("dalembert_check: solution must use a uniform-gradient boundary");

  // A far box around everything, as large as the free region allows.
  Vec<D> center{};
  for (int a = 0; a < D; ++a) center[a] = 0.5 * (sol.grid.lo[a] + sol.grid.hi[a]);
  Vec<D> half{};
  for (int a = 0; a < D; ++a)
    half[a] = 0.5 * (sol.grid.hi[a] - sol.grid.lo[a]) -
              (boundary_band_width + 2.0) * sol.grid.h[a];
  SurfaceSpec<D> surf = SurfaceSpec<D>::box(center, scaled<D>(half, 0.92), 48);

  ForceReport<D> fr = force_surface<D>(sol, surf, "system");
  DalembertReport<D> rep;
  rep.force = fr.force;
  double Q = total_charge<D>(cfg, &sol.law);
  rep.reference = scaled<D>(g0, Q);

  double q_abs = 0.0;
  for (const auto& b : cfg.bodies) q_abs += std::abs(total_charge<D>(b, &sol.law));
  rep.scale = std::max({norm<D>(rep.reference), norm<D>(g0) * q_abs, reference_scale});
  if (rep.scale <= 0.0) rep.scale = std::max(norm<D>(fr.force), 1e-300);
  rep.rel_deviation = norm<D>(sub<D>(rep.force, rep.reference)) / rep.scale;
  return rep;
}

}  // namespace mufield
