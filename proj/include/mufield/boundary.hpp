#pragma once

// Outer boundary handling for grid solves. The outermost cell layer is pinned
// to Dirichlet values supplied by one of three policies: the radial far-field
// asymptote of the total charge (decaying media), an imposed uniform gradient
// with its linearized point response, or caller-provided values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mufield/grid.hpp"
#include "mufield/math.hpp"
#include "mufield/medium.hpp"
#include "mufield/radial.hpp"
#include "mufield/sources.hpp"

namespace mufield {

enum class BoundaryKind { DecayToZero, UniformGradient, DirichletBox };

template <int D>
struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::DecayToZero;
  Vec<D> gradient{};                               // uniform-gradient far field
  std::function<double(const Vec<D>&)> values;     // dirichlet-box

  static BoundaryCondition decay() { return {}; }
  static BoundaryCondition uniform_gradient(const Vec<D>& g0) {
    BoundaryCondition bc;
    bc.kind = BoundaryKind::UniformGradient;
    bc.gradient = g0;
    return bc;
  }
  static BoundaryCondition dirichlet(std::function<double(const Vec<D>&)> f) {
    BoundaryCondition bc;
    bc.kind = BoundaryKind::DirichletBox;
    bc.values = std::move(f);
    return bc;
  }
};

namespace detail {

// phi of the far-field radial asymptote, sampled by distance from the center.
class RadialAsymptote {
 public:
  RadialAsymptote(const MediumLaw& law, double Q, double r_min, double r_max) {
    auto grid = log_spaced(0.999 * r_min, 1.001 * r_max, 2048);
    sol_ = solve_radial(law, [Q](double) { return Q; }, grid);
  }

  double phi(double r) const {
    const auto& rs = sol_.r;
    auto it = std::upper_bound(rs.begin(), rs.end(), r);
    std::size_t i = (it == rs.begin()) ? 0 : static_cast<std::size_t>(it - rs.begin()) - 1;
    if (i + 1 >= rs.size()) i = rs.size() - 2;
    double t = (std::log(r) - std::log(rs[i])) / (std::log(rs[i + 1]) - std::log(rs[i]));
    return (1.0 - t) * sol_.phi[i] + t * sol_.phi[i + 1];
  }

 private:
  RadialSolution sol_;
};

}  // namespace detail

/// Width of the pinned boundary band, in cells. Two layers keep the
/// tangential face stencils complete at every face that touches a free cell,
/// so an exactly linear potential is an exact discrete vacuum solution.
inline constexpr int boundary_band_width = 2;

/// Pins the outermost cell band of `src` to the boundary policy's values.
/// Bodies must not reach the band.
template <int D>
void apply_boundary(const BoundaryCondition<D>& bc, const Grid<D>& g, const MediumLaw& law,
                    const ChargeConfiguration<D>& cfg, DiscreteSources<D>& src) {
  double Q = total_charge<D>(cfg, &law);
  Vec<D> x0 = charge_centroid<D>(cfg, &law);

  // Collect boundary cells and their distances from the charge centroid.
  std::vector<std::pair<std::array<int, D>, std::int64_t>> bcells;
  double r_min = 0.0, r_max = 0.0;
  g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
    if (!g.in_boundary_band(i, boundary_band_width)) return;
    if (src.pinned[k] || src.excluded[k] || src.rho[k] != 0.0)
      throw ValidationError("a body reaches the grid boundary layer");
    bcells.emplace_back(i, k);
    double r = norm<D>(sub<D>(g.center(i), x0));
    if (r_min == 0.0 || r < r_min) r_min = r;
    r_max = std::max(r_max, r);
  });

  switch (bc.kind) {
    case BoundaryKind::DecayToZero: {
      if (Q == 0.0) {
        for (auto& [i, k] : bcells) {
          src.pinned[k] = 1;
          src.pinned_phi[k] = 0.0;
        }
        return;
      }
      detail::RadialAsymptote far(law, Q, r_min, r_max);
      for (auto& [i, k] : bcells) {
        src.pinned[k] = 1;
        src.pinned_phi[k] = far.phi(norm<D>(sub<D>(g.center(i), x0)));
      }
      return;
    }
    case BoundaryKind::UniformGradient: {
      double g0 = norm<D>(bc.gradient);
      double w0 = g0 / law.a0;
      MediumSample s0 = medium_eval(law, w0);
      if (s0.mu <= 0.0)
        throw ValidationError("uniform-gradient boundary needs mu > 0 at the imposed field");
      double b = std::sqrt(1.0 + s0.mu_hat);
      Vec<D> e{};
      if (g0 > 0.0) e = scaled<D>(bc.gradient, 1.0 / g0);
      for (auto& [i, k] : bcells) {
        Vec<D> dx = sub<D>(g.center(i), x0);
        double par = dot<D>(dx, e);
        double perp2 = dot<D>(dx, dx) - par * par;
        double rt = std::sqrt((par / b) * (par / b) + std::max(perp2, 0.0));
        double zeta = 0.0;
        if (Q != 0.0) {
          if (D == 2)
            zeta = law.G * Q / (s0.mu * b) * std::log(rt);
          else
            zeta = -law.G * Q / (s0.mu * b * (D - 2)) * std::pow(rt, 2 - D);
        }
        src.pinned[k] = 1;
        src.pinned_phi[k] = -dot<D>(bc.gradient, dx) + zeta;
      }
      return;
    }
    case BoundaryKind::DirichletBox: {
      if (!bc.values) throw ValidationError("dirichlet boundary needs a value function");
      for (auto& [i, k] : bcells) {
        src.pinned[k] = 1;
        src.pinned_phi[k] = bc.values(g.center(i));
      }
      return;
    }
  }
}

}  // namespace mufield
