#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rational.hpp"

namespace fh {

struct Equilibrium {
  Vec3 point = Vec3::Zero();  // v component is exactly 0
  double residual = 0.0;      // max(|f|, |g|)
  std::array<cplx, 3> eigenvalues{};
};

struct SearchBox {
  double u_min = -1, u_max = 2, w_min = -1, w_max = 1;
};

inline Equilibrium make_equilibrium(const ModelDefinition& m, const WaveParameters& p, double u,
                                    double w) {
  Equilibrium e;
  e.point = Vec3(u, 0.0, w);
  e.residual = std::max(std::abs(m.f(u, w, p.alpha)), std::abs(m.g(u, w, p.alpha)));
  e.eigenvalues = eigenvalues_3x3(tw_jacobian(m, p, e.point));
  return e;
}

// Newton on (f, g) = 0 from every node of a grid_density x grid_density seed grid.
inline std::vector<Equilibrium> find_equilibria(const ModelDefinition& m, const WaveParameters& p,
                                                const SearchBox& box, int grid_density = 20,
                                                double tol = 1e-12) {
  require_speed(p);
  if (!(box.u_max > box.u_min) || !(box.w_max > box.w_min) || grid_density < 1)
    throw PreconditionError("find_equilibria: degenerate search box");
  const double du = box.u_max - box.u_min, dw = box.w_max - box.w_min;
  std::vector<Vec2> roots;
  for (int i = 0; i < grid_density; ++i) {
    for (int j = 0; j < grid_density; ++j) {
      Vec2 x(box.u_min + du * (i + 0.5) / grid_density, box.w_min + dw * (j + 0.5) / grid_density);
      bool ok = false;
      for (int it = 0; it < 60; ++it) {
        Vec2 F(m.f(x(0), x(1), p.alpha), m.g(x(0), x(1), p.alpha));
        if (F.cwiseAbs().maxCoeff() <= tol) {
          ok = true;
          break;
        }
        const FirstPartials d = m.partials(x(0), x(1), p.alpha);
        Mat2 J;
        J << d.fu, d.fw, d.gu, d.gw;
        const double det = J.determinant();
        if (!std::isfinite(det) || std::abs(det) < 1e-300) break;
        x -= J.inverse() * F;
        if (!x.allFinite()) break;
      }
      if (!ok) continue;
      if (x(0) < box.u_min || x(0) > box.u_max || x(1) < box.w_min || x(1) > box.w_max) continue;
      // Degenerate (multiple) roots are only located to about tol^(1/3); seeds that
      // converged to points joined by a sub-tolerance segment are the same root.
      auto resid = [&](const Vec2& y) {
        return std::max(std::abs(m.f(y(0), y(1), p.alpha)), std::abs(m.g(y(0), y(1), p.alpha)));
      };
      bool dup = false;
      for (Vec2& r : roots) {
        const double dist = (r - x).cwiseAbs().maxCoeff();
        const bool same = dist <= 1e-8 ||
                          (dist <= 1e-3 && resid(0.5 * (r + x)) <= tol &&
                           resid(0.25 * r + 0.75 * x) <= tol && resid(0.75 * r + 0.25 * x) <= tol);
        if (same) {
          if (resid(x) < resid(r)) r = x;
          dup = true;
          break;
        }
      }
      if (!dup) roots.push_back(x);
    }
  }
  std::sort(roots.begin(), roots.end(), [](const Vec2& a, const Vec2& b) { return a(0) < b(0); });
  std::vector<Equilibrium> out;
  for (const Vec2& r : roots) out.push_back(make_equilibrium(m, p, r(0), r(1)));
  return out;
}

struct FoldHopfPoint {
  Equilibrium eq;
  std::vector<double> alpha0;
  double c0 = 0.0;
  double mu0 = 0.0;
  Mat3 Q = Mat3::Identity();
  Vec3 q_scaling = Vec3::Ones();  // raw column norms divided out of Q
  std::array<double, 2> cond_residuals{};
  FirstPartials partials;         // at P0
  double scale_factor = 1.0;      // sqrt(d) of the original model

  WaveParameters params() const { return {alpha0, c0}; }
  double mu0_original() const { return mu0 / scale_factor; }
  Mat3 block() const {
    Mat3 B = Mat3::Zero();
    B(0, 1) = mu0;
    B(1, 0) = -mu0;
    return B;
  }
};

// Eigenvector transform: columns 1 and 2 span the rotation plane, column 3 the kernel.
// Columns 1 and 2 share one normalization factor; separate factors would turn the
// rotation block into a non-antisymmetric one.
inline Mat3 build_transform_Q(const FoldHopfPoint& fh, Vec3* scaling = nullptr) {
  const FirstPartials& d = fh.partials;
  const double c = fh.c0, mu = fh.mu0;
  Mat3 Q;
  Q.col(0) = Vec3(-d.gw / c, -mu * mu, d.gu / c);
  Q.col(1) = Vec3(mu, c * mu, 0.0);
  Q.col(2) = Vec3(d.gw, 0.0, -d.gu);
  const double s12 = std::sqrt(0.5 * (Q.col(0).squaredNorm() + Q.col(1).squaredNorm()));
  const double s3 = Q.col(2).norm();
  if (!(s12 > 0) || !(s3 > 0))
    throw NumericalError("build_transform_Q: zero eigenvector column (g_u(P0) = 0?)");
  Q.col(0) /= s12;
  Q.col(1) /= s12;
  Q.col(2) /= s3;
  if (std::abs(Q.determinant()) <= 1e-12)
    throw NumericalError("build_transform_Q: near-singular transform, |det Q| = " +
                         std::to_string(std::abs(Q.determinant())));
  if (scaling) *scaling = Vec3(s12, s12, s3);
  return Q;
}

struct Classification {
  std::optional<FoldHopfPoint> point;
  bool near_degenerate = false;
  std::string note;
};

// Requires the canonical (d = 1) model.
inline Classification classify_fold_hopf(const ModelDefinition& m, const Equilibrium& eq,
                                         const WaveParameters& p, double tol = 1e-9,
                                         double scale_factor = 1.0) {
  require_speed(p);
  if (m.diff_coeff != 1.0)
    throw PreconditionError("classify_fold_hopf: model must be in canonical form (d = 1)");
  if (eq.residual > 1e-10)
    throw PreconditionError("classify_fold_hopf: equilibrium residual too large");
  const FirstPartials d = m.partials(eq.point(0), eq.point(2), p.alpha);
  const double r1 = std::abs(p.c + d.gw / p.c);
  const double r2 = std::abs(d.fu * d.gw - d.fw * d.gu);
  const double mu2 = d.fu + d.gw;
  Classification out;
  const double worst = std::max(r1, r2);
  if (worst > tol || !(mu2 > 0)) {
    out.near_degenerate = worst > tol && worst <= 10 * tol && mu2 > 0;
    out.note = out.near_degenerate ? "near-degenerate: refine parameters" : "not fold-Hopf";
    return out;
  }
  FoldHopfPoint fh;
  fh.eq = eq;
  fh.alpha0 = p.alpha;
  fh.c0 = p.c;
  fh.mu0 = std::sqrt(mu2);
  fh.cond_residuals = {r1, r2};
  fh.partials = d;
  fh.scale_factor = scale_factor;
  fh.Q = build_transform_Q(fh, &fh.q_scaling);
  out.point = fh;
  out.note = "fold-Hopf";
  return out;
}

// ---------------------------------------------------------------- FHN specifics

// Roots of g_u(u, gamma) = 3u^2 - 2.2u + 0.1 + 1/gamma = 0 (u1 <= u2); empty below 300/91.
inline std::optional<std::array<double, 2>> fhn_critical_u(double gamma) {
  const double disc = 4.84 - 12.0 * (0.1 + 1.0 / gamma);
  if (disc < 0) return std::nullopt;
  const double s = std::sqrt(disc);
  return std::array<double, 2>{(2.2 - s) / 6.0, (2.2 + s) / 6.0};
}

inline const Rational kGammaFold{300, 91};
inline const Rational kGammaZero{400, 81};
inline const Rational kGammaHopfEnd{10, 1};

namespace detail {
inline int side(const ExactNumber& x, const Rational& b) {
  return x.exact ? compare(*x.exact, b) : compare_approx(x.value, b.value());
}
}  // namespace detail

inline int fhn_equilibrium_count(const ExactNumber& gamma, double p) {
  if (!(gamma.value > 0) || !(p > 0))
    throw PreconditionError("fhn_equilibrium_count: need gamma > 0 and p > 0");
  if (detail::side(gamma, kGammaFold) <= 0) return 1;
  const auto u = fhn_critical_u(gamma.value);
  if (!u) return 1;
  const double gmax = fhn::gfun((*u)[0], gamma.value);  // local max at u1
  const double gmin = fhn::gfun((*u)[1], gamma.value);  // local min at u2
  const int a = compare_approx(p, gmax, 1e-12 * std::max(1.0, std::abs(gmax)));
  const int b = compare_approx(p, gmin, 1e-12 * std::max(1.0, std::abs(gmin)));
  if (a == 0 || b == 0) return 2;
  if (a < 0 && b > 0) return 3;
  return 1;
}

inline int fhn_equilibrium_count(double gamma, double p) {
  return fhn_equilibrium_count(ExactNumber{gamma, std::nullopt}, p);
}

struct FhnLocusPoint {
  double gamma = 0;
  double u0 = 0, w0 = 0, p0 = 0;
  double c0 = 0, mu0 = 0;                  // scale of the d = 5 system
  double c0_canonical = 0, mu0_canonical = 0;
  int branch = 1;                          // 1 -> u1, 2 -> u2
};

inline FhnLocusPoint fhn_locus_point(double gamma, double u0, int branch) {
  FhnLocusPoint pt;
  pt.gamma = gamma;
  pt.u0 = u0;
  pt.w0 = u0 / gamma;
  pt.p0 = fhn::gfun(u0, gamma);
  pt.c0 = std::sqrt(0.05 * gamma);
  pt.mu0 = std::sqrt((100.0 - gamma * gamma) / (500.0 * gamma));
  const double s = std::sqrt(fhn::diffusion);
  pt.c0_canonical = pt.c0 / s;
  pt.mu0_canonical = pt.mu0 * s;
  pt.branch = branch;
  return pt;
}

inline std::vector<FhnLocusPoint> fhn_fold_hopf_locus(const ExactNumber& gamma) {
  if (!(gamma.value > 0)) throw PreconditionError("fhn_fold_hopf_locus: gamma must be positive");
  std::vector<FhnLocusPoint> out;
  const double g = gamma.value;
  const int s_fold = detail::side(gamma, kGammaFold);
  if (s_fold < 0 || detail::side(gamma, kGammaHopfEnd) >= 0) return out;
  if (s_fold == 0) {
    out.push_back(fhn_locus_point(g, 11.0 / 30.0, 1));
    return out;
  }
  const auto u = fhn_critical_u(g);
  if (!u) return out;
  out.push_back(fhn_locus_point(g, (*u)[0], 1));
  if (detail::side(gamma, kGammaZero) < 0) out.push_back(fhn_locus_point(g, (*u)[1], 2));
  return out;
}

inline std::vector<FhnLocusPoint> fhn_fold_hopf_locus(double gamma) {
  return fhn_fold_hopf_locus(ExactNumber{gamma, std::nullopt});
}

// Exact coordinates of the locus points when gamma is rational and the critical u values
// are rational too (e.g. the fold boundary 300/91, where u0 = 11/30). Same order as the
// floating-point locus; empty when any coordinate is irrational.
struct FhnExactLocusPoint {
  int branch = 1;
  Rational u0, w0, p0;
};

namespace detail {
inline std::optional<std::int64_t> exact_isqrt(std::int64_t v) {
  if (v < 0) return std::nullopt;
  auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v))));
  for (std::int64_t c = std::max<std::int64_t>(0, r - 2); c <= r + 2; ++c)
    if (c * c == v) return c;
  return std::nullopt;
}
}  // namespace detail

inline std::vector<FhnExactLocusPoint> fhn_exact_locus(const Rational& gamma) {
  std::vector<FhnExactLocusPoint> out;
  const auto approx = fhn_fold_hopf_locus(ExactNumber{gamma.value(), gamma});
  if (approx.empty()) return out;
  // g_u = 0 <=> u = (11/5 -+ sqrt(disc)) / 6 with disc = 91/25 - 12/gamma
  const Rational disc = Rational{91, 25} - Rational{12, 1} / gamma;
  Rational root{0, 1};
  if (disc.num != 0) {
    const auto sn = detail::exact_isqrt(disc.num), sd = detail::exact_isqrt(disc.den);
    if (!sn || !sd) return out;
    root = make_rational(*sn, *sd);
  }
  const Rational alpha{1, 10}, one{1, 1};
  for (const FhnLocusPoint& pt : approx) {
    const Rational u = (Rational{11, 5} + (pt.branch == 1 ? -root : root)) / Rational{6, 1};
    const Rational w = u / gamma;
    const Rational h = u * (u - one) * (alpha - u);
    out.push_back({pt.branch, u, w, w - h});
  }
  return out;
}

inline ModelDefinition fhn_canonical_model() {
  ModelDefinition m = builtin_fhn();
  m.diff_coeff = 1.0;
  return m;
}

// Fold-Hopf point of the canonical FHN model for one locus entry.
inline FoldHopfPoint fhn_fold_hopf_point(const FhnLocusPoint& pt) {
  const ModelDefinition m = fhn_canonical_model();
  WaveParameters p{{pt.gamma, pt.p0}, pt.c0_canonical};
  const Equilibrium eq = make_equilibrium(m, p, pt.u0, pt.w0);
  Classification cl = classify_fold_hopf(m, eq, p, 1e-9, std::sqrt(fhn::diffusion));
  if (!cl.point)
    throw NumericalError("FHN locus point failed fold-Hopf classification: " + cl.note);
  return *cl.point;
}

// The variable change used for FHN in the canonical frame: x = Q y with
// y = (u + g0 w, mu v, delta g0 u - c mu v + w) in the d = 5 scale, v rescaled by sqrt(d).
inline Mat3 fhn_transform(const FoldHopfPoint& fh) {
  const double g0 = fh.alpha0[fhn::GAMMA];
  const double s = fh.scale_factor;
  const double co = fh.c0 * s, muo = fh.mu0 / s;
  Mat3 Q;
  Q << 1.0, 0.0, g0,
       0.0, muo, 0.0,
       fhn::delta * g0, -co * muo, 1.0;
  Q.row(1) *= s;
  return Q;
}

}  // namespace fh
