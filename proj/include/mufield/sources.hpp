#pragma once

// Charge configurations: point charges (regularized by a compact bump),
// spheres with radial profiles, gridded densities, boundary-defined bodies,
// and medium inclusions, plus their realization on a grid.

#include <cmath>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mufield/grid.hpp"
#include "mufield/math.hpp"
#include "mufield/medium.hpp"

namespace mufield {

/// Configuration rejected before any compute; maps to CLI exit 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class BodyKind { Point, Sphere, DensityField, BoundaryDirichlet, BoundaryNeumann, MediumInclusion };

template <int D>
struct Body {
  BodyKind kind = BodyKind::Point;
  std::string id;

  Vec<D> position{};  // center (box center for density fields)
  double q = 0.0;     // point charge
  double lambda = 0.0;  // point regularization width
  double radius = 0.0;  // sphere / boundary region / inclusion radius
  std::function<double(double)> profile;  // sphere radial density

  std::vector<double> field;  // density-field values, row-major
  std::array<int, D> field_dims{};
  Vec<D> field_lo{}, field_hi{};

  double surface_value = 0.0;  // dirichlet: phi; neumann: dictated total flux
  std::optional<MediumLaw> inclusion_law;

  double bounding_radius() const {
    switch (kind) {
      case BodyKind::Point:
        return lambda;
      case BodyKind::DensityField: {
        double r2 = 0.0;
        for (int a = 0; a < D; ++a) {
          double half = 0.5 * (field_hi[a] - field_lo[a]);
          r2 += half * half;
        }
        return std::sqrt(r2);
      }
      default:
        return radius;
    }
  }
};

template <int D>
struct ChargeConfiguration {
  std::vector<Body<D>> bodies;

  void validate(double clearance = 0.0) const {
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      const auto& b = bodies[i];
      std::ostringstream path;
      path << "bodies[" << i << "]";
      if (b.kind == BodyKind::Point && b.lambda <= 0.0)
        throw ValidationError(path.str() + ": point charge needs regularization_width > 0");
      if ((b.kind == BodyKind::Sphere || b.kind == BodyKind::BoundaryDirichlet ||
           b.kind == BodyKind::BoundaryNeumann || b.kind == BodyKind::MediumInclusion) &&
          b.radius <= 0.0)
        throw ValidationError(path.str() + ": needs radius > 0");
      if (b.kind == BodyKind::Sphere && !b.profile)
        throw ValidationError(path.str() + ": sphere needs a radial profile");
      if (b.kind == BodyKind::DensityField) {
        std::int64_t expect = 1;
        for (int a = 0; a < D; ++a) expect *= b.field_dims[a];
        if (expect <= 0 || static_cast<std::int64_t>(b.field.size()) != expect)
          throw ValidationError(path.str() + ": density field size does not match dims");
      }
      for (std::size_t j = 0; j < i; ++j) {
        double d = norm<D>(sub<D>(bodies[i].position, bodies[j].position));
        if (d < bodies[i].bounding_radius() + bodies[j].bounding_radius() + clearance) {
          std::ostringstream os;
          os << "bodies[" << i << "] overlaps bodies[" << j << "]";
          throw ValidationError(os.str());
        }
      }
    }
  }
};

/// Integral of (1 - |u|^2)^3 over the unit ball.
inline double bump_ball_integral(int D) {
  return solid_angle(D) * 3.0 * std::tgamma(0.5 * D) / std::tgamma(0.5 * D + 4.0);
}

/// Source charge carried by the body itself. Boundary-dirichlet bodies and
/// inclusions carry none; neumann bodies carry their dictated flux over
/// alpha_D G (law required).
template <int D>
double total_charge(const Body<D>& b, const MediumLaw* law = nullptr) {
  switch (b.kind) {
    case BodyKind::Point:
      return b.q;
    case BodyKind::Sphere: {
      double aD = solid_angle(D);
      double integral = integrate(
          [&](double r) { return b.profile(r) * std::pow(r, D - 1); }, 0.0, b.radius, 1e-12);
      return aD * integral;
    }
    case BodyKind::DensityField: {
      double cellv = 1.0;
      for (int a = 0; a < D; ++a) cellv *= (b.field_hi[a] - b.field_lo[a]) / b.field_dims[a];
      double s = 0.0;
      for (double v : b.field) s += v;
      return s * cellv;
    }
    case BodyKind::BoundaryNeumann:
      if (!law) throw std::invalid_argument("total_charge: neumann body needs the medium law");
      return b.surface_value / (solid_angle(D) * law->G);
    case BodyKind::BoundaryDirichlet:
    case BodyKind::MediumInclusion:
      return 0.0;
  }
  return 0.0;
}

template <int D>
double total_charge(const ChargeConfiguration<D>& cfg, const MediumLaw* law = nullptr) {
  double s = 0.0;
  for (const auto& b : cfg.bodies) s += total_charge<D>(b, law);
  return s;
}

/// |charge|-weighted centroid, used to center far-field boundary values.
template <int D>
Vec<D> charge_centroid(const ChargeConfiguration<D>& cfg, const MediumLaw* law = nullptr) {
  Vec<D> c{};
  double wsum = 0.0;
  for (const auto& b : cfg.bodies) {
    double w = std::abs(total_charge<D>(b, law));
    wsum += w;
    for (int a = 0; a < D; ++a) c[a] += w * b.position[a];
  }
  if (wsum > 0.0)
    for (int a = 0; a < D; ++a) c[a] /= wsum;
  return c;
}

/// Everything the grid solver needs: densities, pinned/excluded cells, the
/// per-cell medium map, surface sources, and per-body cell lists.
template <int D>
struct DiscreteSources {
  std::vector<double> rho;          // cell-centered density
  std::vector<double> pinned_phi;   // valid where pinned
  std::vector<std::uint8_t> pinned;     // dirichlet-body cells
  std::vector<std::uint8_t> excluded;   // neumann-body cells (no unknowns, no flux)
  std::vector<std::uint16_t> law_id;    // 0 = ambient, i+1 = laws[i]
  std::vector<MediumLaw> laws;          // inclusion laws
  std::vector<std::vector<std::int64_t>> body_cells;  // per body
};

template <int D>
double sample_field(const Body<D>& b, const Vec<D>& x) {
  // Multilinear interpolation inside the body's box, zero outside.
  std::array<double, D> t{};
  std::array<int, D> i0{};
  for (int a = 0; a < D; ++a) {
    double h = (b.field_hi[a] - b.field_lo[a]) / b.field_dims[a];
    double s = (x[a] - b.field_lo[a]) / h - 0.5;
    if (s < -0.5 || s > b.field_dims[a] - 0.5) return 0.0;
    double fs = std::floor(s);
    i0[a] = static_cast<int>(fs);
    t[a] = s - fs;
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << D); ++corner) {
    double w = 1.0;
    std::int64_t idx = 0;
    bool ok = true;
    for (int a = 0; a < D; ++a) {
      int bit = (corner >> a) & 1;
      int ia = i0[a] + bit;
      w *= bit ? t[a] : 1.0 - t[a];
      if (ia < 0 || ia >= b.field_dims[a]) {
        ok = false;
        break;
      }
      idx = idx * b.field_dims[a] + ia;
    }
    if (ok && w != 0.0) acc += w * b.field[idx];
  }
  return acc;
}

template <int D>
DiscreteSources<D> discretize(const ChargeConfiguration<D>& cfg, const Grid<D>& g,
                              const MediumLaw& ambient, bool strict_resolution = true) {
  cfg.validate();
  DiscreteSources<D> out;
  out.rho.assign(g.total, 0.0);
  out.pinned_phi.assign(g.total, 0.0);
  out.pinned.assign(g.total, 0);
  out.excluded.assign(g.total, 0);
  out.law_id.assign(g.total, 0);
  out.body_cells.resize(cfg.bodies.size());

  for (std::size_t bi = 0; bi < cfg.bodies.size(); ++bi) {
    const Body<D>& b = cfg.bodies[bi];
    auto& cells = out.body_cells[bi];
    switch (b.kind) {
      case BodyKind::Point: {
        double h_max = g.h[0];
        for (int a = 1; a < D; ++a) h_max = std::max(h_max, g.h[a]);
        if (strict_resolution && b.lambda < 4.0 * h_max) {
          std::ostringstream os;
          os << "bodies[" << bi << "]: regularization width " << b.lambda
             << " under-resolved (need >= 4 cells, h=" << h_max << ")";
          throw ValidationError(os.str());
        }
        double c = bump_ball_integral(D) * std::pow(b.lambda, D);
        double raw_sum = 0.0;
        std::vector<std::pair<std::int64_t, double>> vals;
        g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          double r2 = 0.0;
          Vec<D> x = g.center(i);
          for (int a = 0; a < D; ++a) r2 += (x[a] - b.position[a]) * (x[a] - b.position[a]);
          double u2 = r2 / (b.lambda * b.lambda);
          if (u2 < 1.0) {
            double v = std::pow(1.0 - u2, 3) * b.q / c;
            vals.emplace_back(k, v);
            raw_sum += v;
          }
        });
        if (vals.empty()) {
          // Bump narrower than a cell: collapse onto the nearest cell center.
          std::array<int, D> near{};
          for (int a = 0; a < D; ++a) {
            int ia = static_cast<int>(std::floor((b.position[a] - g.lo[a]) / g.h[a]));
            near[a] = std::min(std::max(ia, 0), g.n[a] - 1);
          }
          std::int64_t k = g.idx(near);
          out.rho[k] += b.q / g.cell_volume();
          cells.push_back(k);
          break;
        }
        // Renormalize the sampled bump so the discrete total is exact.
        double scale = (raw_sum != 0.0) ? b.q / (raw_sum * g.cell_volume()) : 0.0;
        for (auto& [k, v] : vals) {
          out.rho[k] += v * scale;
          cells.push_back(k);
        }
        break;
      }
      case BodyKind::Sphere: {
        double analytic = total_charge<D>(b);
        double raw_sum = 0.0;
        std::vector<std::pair<std::int64_t, double>> vals;
        g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          double r = norm<D>(sub<D>(g.center(i), b.position));
          if (r < b.radius) {
            double v = b.profile(r);
            vals.emplace_back(k, v);
            raw_sum += v;
          }
        });
        double discrete = raw_sum * g.cell_volume();
        double scale = (discrete != 0.0 && analytic != 0.0) ? analytic / discrete : 1.0;
        for (auto& [k, v] : vals) {
          out.rho[k] += v * scale;
          cells.push_back(k);
        }
        break;
      }
      case BodyKind::DensityField: {
        double analytic = total_charge<D>(b);
        double raw_sum = 0.0;
        std::vector<std::pair<std::int64_t, double>> vals;
        g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          double v = sample_field<D>(b, g.center(i));
          if (v != 0.0) {
            vals.emplace_back(k, v);
            raw_sum += v;
          }
        });
        double discrete = raw_sum * g.cell_volume();
        double scale = (discrete != 0.0 && analytic != 0.0) ? analytic / discrete : 1.0;
        for (auto& [k, v] : vals) {
          out.rho[k] += v * scale;
          cells.push_back(k);
        }
        break;
      }
      case BodyKind::BoundaryDirichlet: {
        g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          if (norm<D>(sub<D>(g.center(i), b.position)) < b.radius) {
            out.pinned[k] = 1;
            out.pinned_phi[k] = b.surface_value;
            cells.push_back(k);
          }
        });
        break;
      }
      case BodyKind::BoundaryNeumann: {
        g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          if (norm<D>(sub<D>(g.center(i), b.position)) < b.radius) {
            out.excluded[k] = 1;
            cells.push_back(k);
          }
        });
        if (b.surface_value != 0.0) {
          // Dictated total flux, spread uniformly over the exposed surface:
          // realized as an equivalent source ring in the adjacent free cells.
          std::vector<std::int64_t> ring;
          g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
            if (out.excluded[k]) return;
            for (int a = 0; a < D; ++a) {
              for (int s = -1; s <= 1; s += 2) {
                auto j = i;
                j[a] += s;
                if (j[a] < 0 || j[a] >= g.n[a]) continue;
                if (out.excluded[g.idx(j)]) {
                  ring.push_back(k);
                  return;
                }
              }
            }
          });
          if (ring.empty()) {
            std::ostringstream os;
            os << "bodies[" << bi << "]: neumann body unresolved by grid";
            throw ValidationError(os.str());
          }
          double per_cell = b.surface_value / (solid_angle(D) * ambient.G) /
                            (static_cast<double>(ring.size()) * g.cell_volume());
          for (auto k : ring) out.rho[k] += per_cell;
        }
        break;
      }
      case BodyKind::MediumInclusion: {
        if (!b.inclusion_law) throw ValidationError("inclusion body missing its law");
        if (b.inclusion_law->G != ambient.G) {
          std::ostringstream os;
          os << "bodies[" << bi << "]: inclusion law must share the ambient coupling G";
          throw ValidationError(os.str());
        }
        if (b.inclusion_law->D != ambient.D) {
          std::ostringstream os;
          os << "bodies[" << bi << "]: inclusion law must share the ambient dimension";
          throw ValidationError(os.str());
        }
        out.laws.push_back(*b.inclusion_law);
        std::uint16_t id = static_cast<std::uint16_t>(out.laws.size());
        g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          if (norm<D>(sub<D>(g.center(i), b.position)) < b.radius) {
            out.law_id[k] = id;
            cells.push_back(k);
          }
        });
        break;
      }
    }
  }
  return out;
}

/// Reads a density array from a whitespace-separated text file whose first
/// line holds the per-axis dims (row-major data follows). The box extents
/// stay with the caller.
template <int D>
void load_density_file(Body<D>& b, std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ValidationError("density file: missing header line");
  std::istringstream hs(header);
  std::int64_t expect = 1;
  for (int a = 0; a < D; ++a) {
    if (!(hs >> b.field_dims[a]) || b.field_dims[a] <= 0)
      throw ValidationError("density file: header must list one positive dim per axis");
    expect *= b.field_dims[a];
  }
  b.field.clear();
  b.field.reserve(expect);
  double v;
  while (in >> v) b.field.push_back(v);
  if (static_cast<std::int64_t>(b.field.size()) != expect) {
    std::ostringstream os;
    os << "density file: expected " << expect << " values, got " << b.field.size();
    throw ValidationError(os.str());
  }
}

/// Similarity transformation phi_l(r) = l phi(r/l), rho_l(r) = rho(r/l)/l on a
/// grid scaled by the same factor; charges then scale by l^{D-1}.
template <int D>
struct ScaledFields {
  Grid<D> grid;
  std::vector<double> phi;
  std::vector<double> rho;
};

template <int D>
ScaledFields<D> scale_configuration(const Grid<D>& g, const std::vector<double>& phi,
                                    const std::vector<double>& rho, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("scale_configuration: lambda must be > 0");
  ScaledFields<D> out;
  Vec<D> lo = scaled<D>(g.lo, lambda), hi = scaled<D>(g.hi, lambda);
  out.grid = Grid<D>::make(lo, hi, g.n);
  out.phi.resize(phi.size());
  out.rho.resize(rho.size());
  for (std::size_t k = 0; k < phi.size(); ++k) out.phi[k] = lambda * phi[k];
  for (std::size_t k = 0; k < rho.size(); ++k) out.rho[k] = rho[k] / lambda;
  return out;
}

}  // namespace mufield
