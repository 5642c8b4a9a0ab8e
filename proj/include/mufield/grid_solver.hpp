#pragma once

// Damped-Newton minimization of the discrete field energy
//   E[phi] = sum_c h^D rho_c phi_c + (1/2 alpha_D G) sum_f V_f <a0^2 F(y_f)>
// on a cell-centered grid (V_f = h^D/D, y_f from the face gradient). The
// G<0 case maximizes E; both signs minimize J = sign(G) E, whose Hessian is
// positive definite while the medium stays elliptic. Newton directions come
// from Jacobi-preconditioned CG on the exact Hessian with an Armijo line
// search on J.
//
// Laws with a finite saturation slope are extended past
// w_cap = w_max (1 - 1e-6) by a linear-in-y energy tail, so every iterate has
// finite energy; a solution that still touches the cap is reported via
// saturated_faces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mufield/boundary.hpp"
#include "mufield/grid.hpp"
#include "mufield/math.hpp"
#include "mufield/medium.hpp"
#include "mufield/sources.hpp"

namespace mufield {

/// Solver failed to reach the requested residual; maps to CLI exit 3.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 60;
  int max_cg = 6000;
  double eps_w = 1e-8;  // Hessian-only regularization of w
  bool throw_on_max_iter = true;
  bool strict_resolution = true;  // reject under-resolved point bumps
  std::vector<double> initial;    // optional warm start (full cell array)
};

template <int D>
struct FieldSolution {
  Grid<D> grid;
  std::vector<double> phi;
  MediumLaw law;  // ambient
  DiscreteSources<D> sources;
  BoundaryCondition<D> bc;
  double tol = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::int64_t saturated_faces = 0;
  std::vector<double> energy_history;  // E at accepted iterates
};

namespace detail {

/// Compensated accumulator; keeps long energy sums accurate enough that
/// line-search comparisons stay meaningful near the minimum.
struct Kahan {
  double s = 0.0, c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
};

struct LawEntry {
  MediumLaw law;
  double a2 = 1.0;
  double w_cap = std::numeric_limits<double>::infinity();
  double y_cap = 0.0, F_cap = 0.0, mu_cap = 0.0;
};

inline LawEntry make_law_entry(const MediumLaw& law) {
  LawEntry e;
  e.law = law;
  e.a2 = law.a0 * law.a0;
  if (law.bounded_w()) {
    e.w_cap = law.w_max * (1.0 - 1e-6);
    MediumSample s = medium_eval(law, e.w_cap);
    e.y_cap = s.y;
    e.F_cap = s.F;
    e.mu_cap = s.mu;
  }
  return e;
}

struct FaceSide {
  double a2F = 0.0;      // a0^2 F(y)
  double mu = 0.0;       // flux coefficient
  double mumuhat = 0.0;  // mu * mu_hat (anisotropic Hessian part)
  bool capped = false;
};

inline FaceSide eval_side(const LawEntry& e, double g2) {
  FaceSide s;
  double y = g2 / e.a2;
  double w = std::sqrt(y);
  if (w < e.w_cap) {
    MediumSample m = medium_eval(e.law, w);
    s.a2F = e.a2 * m.F;
    s.mu = m.mu;
    s.mumuhat = m.mu * m.mu_hat;
  } else {
    s.a2F = e.a2 * (e.F_cap + e.mu_cap * (y - e.y_cap));
    s.mu = e.mu_cap;
    s.mumuhat = 0.0;
    s.capped = true;
  }
  return s;
}

struct FaceRec {
  std::int64_t k = 0;  // lower cell
  std::uint8_t axis = 0;
  std::uint8_t mask = 0;  // bit b: tangential axis b active
  std::uint16_t l1 = 0, l2 = 0;
};

template <int D>
class Assembly {
 public:
  Assembly(const Grid<D>& g, const DiscreteSources<D>& src, const MediumLaw& ambient,
           double eps_w)
      : g_(g), src_(src), eps_w_(eps_w) {
    if (ambient.D != D)
      throw ValidationError("medium law is set up for dimension " + std::to_string(ambient.D) +
                            " but the grid is " + std::to_string(D) + "-dimensional");
    sign_ = ambient.G > 0.0 ? 1.0 : -1.0;
    c0_ = 1.0 / (2.0 * ambient.alphaD() * ambient.G);
    Vf_ = g.cell_volume() / D;
    laws_.push_back(make_law_entry(ambient));
    for (const auto& law : src.laws) laws_.push_back(make_law_entry(law));

    unknown_.assign(g.total, 0);
    n_unknown_ = 0;
    for (std::int64_t k = 0; k < g.total; ++k) {
      if (!src.pinned[k] && !src.excluded[k]) {
        unknown_[k] = 1;
        ++n_unknown_;
      }
    }

    faces_.reserve(static_cast<std::size_t>(face_count(g)));
    for_each_face(g, [&](int a, const std::array<int, D>& i, std::int64_t k) {
      std::int64_t kp = k + g.stride[a];
      if (src.excluded[k] || src.excluded[kp]) return;
      FaceRec f;
      f.k = k;
      f.axis = static_cast<std::uint8_t>(a);
      f.l1 = src.law_id[k];
      f.l2 = src.law_id[kp];
      for (int b = 0; b < D; ++b) {
        if (b == a) continue;
        if (i[b] < 1 || i[b] > g.n[b] - 2) continue;
        std::int64_t sb = g.stride[b];
        if (src.excluded[k + sb] || src.excluded[k - sb] || src.excluded[kp + sb] ||
            src.excluded[kp - sb])
          continue;
        f.mask |= static_cast<std::uint8_t>(1 << b);
      }
      faces_.push_back(f);
    });
  }

  const Grid<D>& grid() const { return g_; }
  std::int64_t n_unknown() const { return n_unknown_; }
  const std::vector<std::uint8_t>& unknown() const { return unknown_; }
  double sign() const { return sign_; }
  std::size_t face_total() const { return faces_.size(); }

  Vec<D> face_grad(const std::vector<double>& phi, const FaceRec& f) const {
    Vec<D> gr{};
    int a = f.axis;
    std::int64_t kp = f.k + g_.stride[a];
    gr[a] = (phi[kp] - phi[f.k]) / g_.h[a];
    for (int b = 0; b < D; ++b) {
      if (!(f.mask & (1 << b))) continue;
      std::int64_t sb = g_.stride[b];
      gr[b] = (phi[f.k + sb] - phi[f.k - sb] + phi[kp + sb] - phi[kp - sb]) / (4.0 * g_.h[b]);
    }
    return gr;
  }

  /// Total energy E[phi]; optionally counts faces past the saturation cap.
  double energy(const std::vector<double>& phi, std::int64_t* saturated = nullptr) const {
    Kahan field;
    std::int64_t sat = 0;
    for (const FaceRec& f : faces_) {
      Vec<D> gr = face_grad(phi, f);
      double g2 = dot<D>(gr, gr);
      FaceSide s1 = eval_side(laws_[f.l1], g2);
      if (f.l1 == f.l2) {
        field.add(s1.a2F);
        if (s1.capped) ++sat;
      } else {
        FaceSide s2 = eval_side(laws_[f.l2], g2);
        field.add(0.5 * (s1.a2F + s2.a2F));
        if (s1.capped || s2.capped) ++sat;
      }
    }
    Kahan source;
    double vol = g_.cell_volume();
    for (std::int64_t k = 0; k < g_.total; ++k) source.add(src_.rho[k] * phi[k]);
    if (saturated) *saturated = sat;
    return source.s * vol + c0_ * Vf_ * field.s;
  }

  /// One Newton assembly pass: returns E, fills the J-gradient (zero at
  /// pinned/excluded cells), the per-face Hessian coefficients, and the
  /// Jacobi diagonal of the J-Hessian.
  double newton_pass(const std::vector<double>& phi, std::vector<double>& gradJ,
                     std::vector<double>& c1, std::vector<double>& c2,
                     std::vector<Vec<D>>& eh, std::vector<double>& diag,
                     std::int64_t* saturated = nullptr) const {
    gradJ.assign(g_.total, 0.0);
    diag.assign(g_.total, 0.0);
    c1.resize(faces_.size());
    c2.resize(faces_.size());
    eh.resize(faces_.size());
    Kahan field;
    std::int64_t sat = 0;
    double c0s = sign_ * c0_;  // = 1/(2 alpha_D |G|) > 0
    for (std::size_t fi = 0; fi < faces_.size(); ++fi) {
      const FaceRec& f = faces_[fi];
      Vec<D> gr = face_grad(phi, f);
      double g2 = dot<D>(gr, gr);
      double a2F, mu, mu_reg, mmh_reg;
      bool capped;
      eval_face(f, g2, a2F, mu, mu_reg, mmh_reg, capped);
      field.add(a2F);
      if (capped) ++sat;

      // Gradient scatter: t = 2 c0 V_f mu * gr (times sign for J).
      double tc = 2.0 * c0s * Vf_ * mu;
      scatter(f, scaled<D>(gr, tc), gradJ);

      // Hessian face coefficients (regularized w inside both mu and mu_hat).
      double h1 = 2.0 * c0s * Vf_ * mu_reg;
      double h2 = 2.0 * c0s * Vf_ * mmh_reg;
      Vec<D> e{};
      if (g2 > 0.0) e = scaled<D>(gr, 1.0 / std::sqrt(g2));
      else h2 = 0.0;
      c1[fi] = h1;
      c2[fi] = h2;
      eh[fi] = e;

      // Jacobi diagonal.
      int a = f.axis;
      std::int64_t kp = f.k + g_.stride[a];
      double da = (h1 + h2 * e[a] * e[a]) / (g_.h[a] * g_.h[a]);
      diag[f.k] += da;
      diag[kp] += da;
      for (int b = 0; b < D; ++b) {
        if (!(f.mask & (1 << b))) continue;
        std::int64_t sb = g_.stride[b];
        double db = (h1 + h2 * e[b] * e[b]) / (16.0 * g_.h[b] * g_.h[b]);
        diag[f.k + sb] += db;
        diag[f.k - sb] += db;
        diag[kp + sb] += db;
        diag[kp - sb] += db;
      }
    }
    double vol = g_.cell_volume();
    Kahan source;
    for (std::int64_t k = 0; k < g_.total; ++k) {
      source.add(src_.rho[k] * phi[k]);
      if (unknown_[k]) gradJ[k] += sign_ * vol * src_.rho[k];
    }
    for (std::int64_t k = 0; k < g_.total; ++k) {
      if (!unknown_[k]) {
        gradJ[k] = 0.0;
        diag[k] = 1.0;
      } else if (diag[k] <= 0.0) {
        diag[k] = 1.0;
      }
    }
    if (saturated) *saturated = sat;
    return source.s * vol + c0_ * Vf_ * field.s;
  }

  /// out = H_J v for v supported on unknowns.
  void hessian_apply(const std::vector<double>& c1, const std::vector<double>& c2,
                     const std::vector<Vec<D>>& eh, const std::vector<double>& v,
                     std::vector<double>& out) const {
    out.assign(g_.total, 0.0);
    for (std::size_t fi = 0; fi < faces_.size(); ++fi) {
      const FaceRec& f = faces_[fi];
      Vec<D> gv = face_grad(v, f);
      const Vec<D>& e = eh[fi];
      double ev = c2[fi] != 0.0 ? dot<D>(e, gv) : 0.0;
      Vec<D> u{};
      for (int a = 0; a < D; ++a) u[a] = c1[fi] * gv[a] + c2[fi] * ev * e[a];
      scatter(f, u, out);
    }
    for (std::int64_t k = 0; k < g_.total; ++k)
      if (!unknown_[k]) out[k] = 0.0;
  }

  /// Face sums of a0^2 F and a0^2 chi = 2|g|^2 mu - a0^2 F (direct and
  /// on-shell energy integrands).
  std::pair<double, double> field_integrals(const std::vector<double>& phi) const {
    double sF = 0.0, schi = 0.0;
    for (const FaceRec& f : faces_) {
      Vec<D> gr = face_grad(phi, f);
      double g2 = dot<D>(gr, gr);
      auto side = [&](std::uint16_t lid) {
        FaceSide s = eval_side(laws_[lid], g2);
        return std::pair<double, double>{s.a2F, 2.0 * g2 * s.mu - s.a2F};
      };
      auto s1 = side(f.l1);
      if (f.l1 == f.l2) {
        sF += s1.first;
        schi += s1.second;
      } else {
        auto s2 = side(f.l2);
        sF += 0.5 * (s1.first + s2.first);
        schi += 0.5 * (s1.second + s2.second);
      }
    }
    return {sF, schi};
  }

  /// Normalized residual: ||grad E|| / (h^D ||rho||), i.e. the L2 norm of the
  /// discrete div[mu grad phi] - alpha_D G rho over free cells relative to the
  /// source norm (1 replaces ||rho|| for pure-vacuum problems).
  double residual_from_grad(const std::vector<double>& gradJ) const {
    double gn = 0.0;
    for (std::int64_t k = 0; k < g_.total; ++k) gn += gradJ[k] * gradJ[k];
    double rn = 0.0;
    for (std::int64_t k = 0; k < g_.total; ++k) rn += src_.rho[k] * src_.rho[k];
    double denom = g_.cell_volume() * (rn > 0.0 ? std::sqrt(rn) : 1.0);
    return std::sqrt(gn) / denom;
  }

 private:
  void eval_face(const FaceRec& f, double g2, double& a2F, double& mu, double& mu_reg,
                 double& mmh_reg, bool& capped) const {
    const LawEntry& e1 = laws_[f.l1];
    FaceSide s1 = eval_side(e1, g2);
    FaceSide r1 = s1;
    if (std::sqrt(g2 / e1.a2) < eps_w_) r1 = eval_side(e1, eps_w_ * eps_w_ * e1.a2);
    if (f.l1 == f.l2) {
      a2F = s1.a2F;
      mu = s1.mu;
      mu_reg = r1.mu;
      mmh_reg = r1.mumuhat;
      capped = s1.capped;
      return;
    }
    const LawEntry& e2 = laws_[f.l2];
    FaceSide s2 = eval_side(e2, g2);
    FaceSide r2 = s2;
    if (std::sqrt(g2 / e2.a2) < eps_w_) r2 = eval_side(e2, eps_w_ * eps_w_ * e2.a2);
    a2F = 0.5 * (s1.a2F + s2.a2F);
    mu = 0.5 * (s1.mu + s2.mu);
    mu_reg = 0.5 * (r1.mu + r2.mu);
    mmh_reg = 0.5 * (r1.mumuhat + r2.mumuhat);
    capped = s1.capped || s2.capped;
  }

  void scatter(const FaceRec& f, const Vec<D>& t, std::vector<double>& out) const {
    int a = f.axis;
    std::int64_t kp = f.k + g_.stride[a];
    out[kp] += t[a] / g_.h[a];
    out[f.k] -= t[a] / g_.h[a];
    for (int b = 0; b < D; ++b) {
      if (!(f.mask & (1 << b))) continue;
      std::int64_t sb = g_.stride[b];
      double tb = t[b] / (4.0 * g_.h[b]);
      out[f.k + sb] += tb;
      out[f.k - sb] -= tb;
      out[kp + sb] += tb;
      out[kp - sb] -= tb;
    }
  }

  const Grid<D>& g_;
  const DiscreteSources<D>& src_;
  double eps_w_;
  double sign_ = 1.0;
  double c0_ = 0.0;
  double Vf_ = 0.0;
  std::vector<LawEntry> laws_;
  std::vector<std::uint8_t> unknown_;
  std::int64_t n_unknown_ = 0;
  std::vector<FaceRec> faces_;
};

inline double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace mufield::detail

template <int D>
FieldSolution<D> solve_grid(const MediumLaw& law, const ChargeConfiguration<D>& cfg,
                            const BoundaryCondition<D>& bc, const Grid<D>& grid,
                            const SolveOptions& opts = {}) {
  for (int a = 0; a < D; ++a)
    if (grid.n[a] < 5) throw ValidationError("solve_grid: need at least 5 cells per axis");

  FieldSolution<D> sol;
  sol.grid = grid;
  sol.law = law;
  sol.bc = bc;
  sol.tol = opts.tol;
  sol.sources = discretize<D>(cfg, grid, law, opts.strict_resolution);
  apply_boundary<D>(bc, grid, law, cfg, sol.sources);

  detail::Assembly<D> A(grid, sol.sources, law, opts.eps_w);

  // Initial iterate: warm start if given, else the total-charge radial
  // asymptote (clamped near bodies), else the mean boundary value.
  std::vector<double>& phi = sol.phi;
  if (!opts.initial.empty()) {
    if (static_cast<std::int64_t>(opts.initial.size()) != grid.total)
      throw std::invalid_argument("solve_grid: initial guess has wrong size");
    phi = opts.initial;
  } else {
    bool filled = false;
    double Q = total_charge<D>(cfg, &law);
    if (bc.kind == BoundaryKind::DecayToZero && Q != 0.0) {
      Vec<D> x0 = charge_centroid<D>(cfg, &law);
      double h_max = grid.h[0];
      for (int a = 1; a < D; ++a) h_max = std::max(h_max, grid.h[a]);
      double r_lo = 2.0 * h_max;
      double r_hi = 0.0;
      for (int corner = 0; corner < (1 << D); ++corner) {
        Vec<D> c{};
        for (int a = 0; a < D; ++a)
          c[a] = ((corner >> a) & 1) ? grid.hi[a] : grid.lo[a];
        r_hi = std::max(r_hi, norm<D>(sub<D>(c, x0)));
      }
      try {
        detail::RadialAsymptote far(law, Q, r_lo, r_hi);
        phi.resize(grid.total);
        grid.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
          double r = norm<D>(sub<D>(grid.center(i), x0));
          phi[k] = far.phi(std::max(r, r_lo));
        });
        filled = true;
      } catch (const SaturationError&) {
        // fall through to the flat start
      }
    }
    if (!filled) {
      double mean = 0.0;
      std::int64_t cnt = 0;
      for (std::int64_t k = 0; k < grid.total; ++k)
        if (sol.sources.pinned[k]) {
          mean += sol.sources.pinned_phi[k];
          ++cnt;
        }
      phi.assign(grid.total, cnt ? mean / cnt : 0.0);
    }
  }
  for (std::int64_t k = 0; k < grid.total; ++k)
    if (sol.sources.pinned[k]) phi[k] = sol.sources.pinned_phi[k];

  if (A.n_unknown() == 0) {
    sol.converged = true;
    sol.energy_history.push_back(A.energy(phi, &sol.saturated_faces));
    return sol;
  }

  std::vector<double> gradJ, c1, c2, diag, d, r, z, p, q, trial;
  std::vector<Vec<D>> eh;
  const double armijo = 1e-4;
  const double alpha_min = std::ldexp(1.0, -40);

  for (int it = 0; it <= opts.max_iter; ++it) {
    std::int64_t sat = 0;
    double E = A.newton_pass(phi, gradJ, c1, c2, eh, diag, &sat);
    if (it == 0) sol.energy_history.push_back(E);
    sol.residual = A.residual_from_grad(gradJ);
    sol.saturated_faces = sat;
    if (sol.residual < opts.tol) {
      sol.converged = true;
      break;
    }
    if (it == opts.max_iter) break;

    // PCG on H d = -gradJ, forcing ||res|| <= 0.1 ||gradJ||.
    d.assign(grid.total, 0.0);
    r = gradJ;
    for (auto& v : r) v = -v;
    double bnorm = std::sqrt(detail::vdot(r, r));
    z.resize(grid.total);
    for (std::int64_t k = 0; k < grid.total; ++k) z[k] = r[k] / diag[k];
    p = z;
    double rz = detail::vdot(r, z);
    for (int cg = 0; cg < opts.max_cg; ++cg) {
      A.hessian_apply(c1, c2, eh, p, q);
      double pq = detail::vdot(p, q);
      if (pq <= 0.0) break;
      double alpha = rz / pq;
      for (std::int64_t k = 0; k < grid.total; ++k) {
        d[k] += alpha * p[k];
        r[k] -= alpha * q[k];
      }
      if (std::sqrt(detail::vdot(r, r)) <= 0.1 * bnorm) break;
      for (std::int64_t k = 0; k < grid.total; ++k) z[k] = r[k] / diag[k];
      double rz2 = detail::vdot(r, z);
      double beta = rz2 / rz;
      rz = rz2;
      for (std::int64_t k = 0; k < grid.total; ++k) p[k] = z[k] + beta * p[k];
    }

    double gd = detail::vdot(gradJ, d);
    if (!(gd < 0.0)) {  // fall back to steepest descent
      d = gradJ;
      for (auto& v : d) v = -v;
      gd = -detail::vdot(gradJ, gradJ);
      if (gd == 0.0) {
        sol.converged = true;
        break;
      }
    }

    double J = A.sign() * E;
    double alpha = 1.0;
    trial.resize(grid.total);
    while (true) {
      for (std::int64_t k = 0; k < grid.total; ++k) trial[k] = phi[k] + alpha * d[k];
      double Jt = A.sign() * A.energy(trial);
      // Near the minimum the decrease drops below the rounding resolution of
      // the energy sum; the fuzz term keeps full Newton steps acceptable there.
      double fuzz = 1e-14 * (std::abs(J) + std::abs(Jt));
      if (Jt <= J + armijo * alpha * gd + fuzz) {
        phi.swap(trial);
        sol.energy_history.push_back(A.sign() * Jt);
        break;
      }
      alpha *= 0.5;
      if (alpha < alpha_min)
        throw ConvergenceError("solve_grid: line search stalled (energy not decreasing)");
    }
    sol.iterations = it + 1;
  }

  if (!sol.converged && opts.throw_on_max_iter) {
    std::ostringstream os;
    os << "solve_grid: residual " << sol.residual << " above tol " << opts.tol << " after "
       << sol.iterations << " iterations";
    throw ConvergenceError(os.str());
  }
  return sol;
}

template <int D>
FieldSolution<D> solve_grid(const MediumLaw& law, const ChargeConfiguration<D>& cfg,
                            const BoundaryCondition<D>& bc, const Grid<D>& grid, double tol) {
  SolveOptions opts;
  opts.tol = tol;
  return solve_grid<D>(law, cfg, bc, grid, opts);
}

/// Normalized residual of the stored iterate (same norm the solver uses).
template <int D>
double residual_norm(const FieldSolution<D>& sol) {
  detail::Assembly<D> A(sol.grid, sol.sources, sol.law, 1e-8);
  std::vector<double> gradJ, c1, c2, diag;
  std::vector<Vec<D>> eh;
  A.newton_pass(sol.phi, gradJ, c1, c2, eh, diag);
  return A.residual_from_grad(gradJ);
}

struct EnergyReport {
  double direct = 0.0;    // E = int rho phi + (a0^2/2 alpha_D G) int F
  double on_shell = 0.0;  // -(a0^2/2 alpha_D G) int chi, valid on solutions
  double discrepancy = 0.0;
  bool divergent = false;  // conformal law with net charge: E is box-dependent
};

template <int D>
EnergyReport energy(const FieldSolution<D>& sol) {
  detail::Assembly<D> A(sol.grid, sol.sources, sol.law, 1e-8);
  EnergyReport rep;
  auto [sF, schi] = A.field_integrals(sol.phi);
  double c0 = 1.0 / (2.0 * sol.law.alphaD() * sol.law.G);
  double Vf = sol.grid.cell_volume() / D;
  double source = 0.0;
  for (std::int64_t k = 0; k < sol.grid.total; ++k) source += sol.sources.rho[k] * sol.phi[k];
  rep.direct = source * sol.grid.cell_volume() + c0 * Vf * sF;
  rep.on_shell = -c0 * Vf * schi;
  double scale = std::max(std::abs(rep.direct), std::abs(rep.on_shell));
  rep.discrepancy = scale > 0.0 ? std::abs(rep.direct - rep.on_shell) / scale : 0.0;

  double Q = 0.0;
  for (std::int64_t k = 0; k < sol.grid.total; ++k) Q += sol.sources.rho[k];
  Q *= sol.grid.cell_volume();
  rep.divergent = sol.law.conformal() && std::abs(Q) > 1e-12;
  return rep;
}

/// rho* = (alpha_D G)^{-1} div[mu_ambient grad phi]: the source density that
/// reproduces the solution's field in a uniform ambient medium. Zero on cells
/// without a complete face neighborhood.
template <int D>
std::vector<double> effective_charge_density(const FieldSolution<D>& sol,
                                             const MediumLaw& ambient) {
  if (ambient.D != D)
    throw ValidationError("effective_charge_density: medium law dimension mismatch");
  const Grid<D>& g = sol.grid;
  detail::LawEntry amb = detail::make_law_entry(ambient);

  // Normal flux mu(|grad|) grad_a at every admissible face, stored per face.
  std::vector<std::vector<double>> flux(D);
  for (int a = 0; a < D; ++a) flux[a].assign(g.total, 0.0);  // indexed by lower cell
  std::vector<std::vector<std::uint8_t>> have(D);
  for (int a = 0; a < D; ++a) have[a].assign(g.total, 0);

  for_each_face(g, [&](int a, const std::array<int, D>& i, std::int64_t k) {
    std::int64_t kp = k + g.stride[a];
    if (sol.sources.excluded[k] || sol.sources.excluded[kp]) return;
    Vec<D> gr{};
    gr[a] = (sol.phi[kp] - sol.phi[k]) / g.h[a];
    for (int b = 0; b < D; ++b) {
      if (b == a) continue;
      if (i[b] < 1 || i[b] > g.n[b] - 2) continue;
      std::int64_t sb = g.stride[b];
      if (sol.sources.excluded[k + sb] || sol.sources.excluded[k - sb] ||
          sol.sources.excluded[kp + sb] || sol.sources.excluded[kp - sb])
        continue;
      gr[b] = (sol.phi[k + sb] - sol.phi[k - sb] + sol.phi[kp + sb] - sol.phi[kp - sb]) /
              (4.0 * g.h[b]);
    }
    detail::FaceSide s = detail::eval_side(amb, dot<D>(gr, gr));
    flux[a][k] = s.mu * gr[a];
    have[a][k] = 1;
  });

  std::vector<double> rho_star(g.total, 0.0);
  double aG = ambient.alphaD() * ambient.G;
  g.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
    if (sol.sources.excluded[k]) return;
    double div = 0.0;
    for (int a = 0; a < D; ++a) {
      if (i[a] == 0 || i[a] == g.n[a] - 1) return;
      std::int64_t km = k - g.stride[a];
      if (!have[a][k] || !have[a][km]) return;
      div += (flux[a][k] - flux[a][km]) / g.h[a];
    }
    rho_star[k] = div / aG;
  });
  return rho_star;
}

/// Interpolates a coarse solution onto a fine grid (warm start).
template <int D>
std::vector<double> prolong(const Grid<D>& coarse, const std::vector<double>& phi,
                            const Grid<D>& fine) {
  std::vector<double> out(fine.total);
  fine.for_each_cell([&](const std::array<int, D>& i, std::int64_t k) {
    out[k] = grid_sample<D>(coarse, phi, fine.center(i));
  });
  return out;
}

/// Solves through a nested sequence of grids (each axis halved while even and
/// above `min_cells`), warm-starting each level from the previous one.
template <int D>
FieldSolution<D> solve_grid_multilevel(const MediumLaw& law, const ChargeConfiguration<D>& cfg,
                                       const BoundaryCondition<D>& bc, const Grid<D>& grid,
                                       const SolveOptions& opts = {}, int min_cells = 16) {
  std::vector<Grid<D>> levels{grid};
  while (true) {
    const Grid<D>& top = levels.back();
    std::array<int, D> half{};
    bool ok = true;
    for (int a = 0; a < D; ++a) {
      if (top.n[a] % 2 != 0 || top.n[a] / 2 < min_cells) ok = false;
      half[a] = top.n[a] / 2;
    }
    if (!ok) break;
    levels.push_back(Grid<D>::make(grid.lo, grid.hi, half));
  }

  SolveOptions level_opts = opts;
  level_opts.initial.clear();
  FieldSolution<D> sol;
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    bool finest = (it + 1 == levels.rend());
    if (!sol.phi.empty()) level_opts.initial = prolong<D>(sol.grid, sol.phi, *it);
    if (!finest) {
      // Coarse levels only seed the next one; accept whatever they reach,
      // including under-resolved point bumps.
      level_opts.throw_on_max_iter = false;
      level_opts.strict_resolution = false;
    } else {
      level_opts.throw_on_max_iter = opts.throw_on_max_iter;
      level_opts.strict_resolution = opts.strict_resolution;
    }
    sol = solve_grid<D>(law, cfg, bc, *it, level_opts);
  }
  return sol;
}

}  // namespace mufield
