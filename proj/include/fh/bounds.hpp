#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "equilibria.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "orbits.hpp"
#include "parallel.hpp"
#include "rng.hpp"

// Operators here act on the unit periodic interval: xi in [0, 1] stands for x = A_eps * xi
// along the orbit, so derivatives pick up factors of A_eps and the reference period is
// A = 2 pi / mu0.

namespace fh {

struct SupNorms {
  double beta_u = 0, beta_w = 0, gamma_u = 0, gamma_w = 0;
  double speed = 0;  // |c0 A - c A_eps|
  double A = 0;      // reference period
};

namespace detail {

struct CoefficientDiffs {
  double bu, bw, gu, gw;
};

inline CoefficientDiffs coefficient_diffs(const PeriodicOrbit& orb, const FoldHopfPoint& fh, double xi_unit) {
  const double A = 2.0 * M_PI / fh.mu0, Ae = orb.period;
  const Vec3 y = orb.state_at(xi_unit * Ae);
  const FirstPartials d = orb.model.partials(y(0), y(2), orb.params.alpha);
  const FirstPartials& d0 = fh.partials;
  return {Ae * Ae * d.fu - A * A * d0.fu, Ae * Ae * d.fw - A * A * d0.fw, Ae * Ae * d.gu - A * A * d0.gu,
          Ae * Ae * d.gw - A * A * d0.gw};
}

inline double component(const CoefficientDiffs& c, int k) {
  return std::abs(k == 0 ? c.bu : k == 1 ? c.bw : k == 2 ? c.gu : c.gw);
}

}  // namespace detail

// Grid sup followed by golden-section refinement around each component's grid maximum.
inline SupNorms coefficient_sup_norms(const PeriodicOrbit& orb, const FoldHopfPoint& fh, int grid = 2048) {
  if (grid < 8) throw PreconditionError("coefficient_sup_norms: grid too small");
  SupNorms s;
  s.A = 2.0 * M_PI / fh.mu0;
  s.speed = std::abs(fh.c0 * s.A - orb.params.c * orb.period);
  std::vector<detail::CoefficientDiffs> v(grid);
  for (int j = 0; j < grid; ++j) v[j] = detail::coefficient_diffs(orb, fh, static_cast<double>(j) / grid);
  double out[4];
  for (int k = 0; k < 4; ++k) {
    int jm = 0;
    for (int j = 1; j < grid; ++j)
      if (detail::component(v[j], k) > detail::component(v[jm], k)) jm = j;
    auto F = [&](double x) { return detail::component(detail::coefficient_diffs(orb, fh, x), k); };
    double a = (jm - 1.0) / grid, b = (jm + 1.0) / grid;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = F(x1), f2 = F(x2);
    for (int it = 0; it < 60 && b - a > 1e-14; ++it) {
      if (f1 > f2) {
        b = x2, x2 = x1, f2 = f1, x1 = b - g * (b - a), f1 = F(x1);
      } else {
        a = x1, x1 = x2, f1 = f2, x2 = a + g * (b - a), f2 = F(x2);
      }
    }
    out[k] = std::max({detail::component(v[jm], k), f1, f2});
  }
  s.beta_u = out[0], s.beta_w = out[1], s.gamma_u = out[2], s.gamma_w = out[3];
  return s;
}

struct BoundConstants {
  int n = 0;
  double kappa1 = 0, kappa2 = 0, a = 0, b = 0;
};

inline double kappa2_of(const FoldHopfPoint& fh, double A, cplx lambda) {
  const FirstPartials& d = fh.partials;
  return std::max(A * A * (std::abs(d.fu) + std::abs(d.gw)), A * A * (std::abs(d.fw) + std::abs(d.gu))) +
         std::abs(lambda) / 2.0;
}

inline int minimal_n(const FoldHopfPoint& fh) {
  const double cA = std::abs(fh.c0 * 2.0 * M_PI / fh.mu0);
  return static_cast<int>(std::floor(1.0 + cA)) + 1;
}

inline BoundConstants relative_bound_constants(const SupNorms& s, const FoldHopfPoint& fh, cplx lambda, int n) {
  const double cA = std::abs(fh.c0 * s.A);
  if (!(n > 1.0 + cA))
    throw PreconditionError("relative_bound_constants: need n > 1 + |c0 A| = " + std::to_string(1.0 + cA));
  if (cA == 0.0) throw PreconditionError("relative_bound_constants: c0 A must be nonzero");
  BoundConstants k;
  k.n = n;
  k.kappa1 = 3.0 * std::max({s.speed, s.beta_u + s.gamma_w, s.beta_w + s.gamma_u});
  k.kappa2 = kappa2_of(fh, s.A, lambda);
  const double gap = n - 1.0 - cA;
  k.a = k.kappa1 * (1.0 + (2.0 * k.kappa2 + 2.0 * n * (n + 1.0)) / gap + 2.0 * k.kappa2 / cA);
  k.b = k.kappa1 * (1.0 / gap + 1.0 / cA);
  return k;
}

struct NScan {
  int n_min = 0;
  int n_best_a = 0, n_best_b = 0;
  double a_at_best = 0, b_at_best = 0;
};

// Exhaustive over integers in (1 + |c0 A|, 1 + |c0 A| + 100].
inline NScan scan_n(const SupNorms& s, const FoldHopfPoint& fh, cplx lambda) {
  NScan r;
  r.n_min = minimal_n(fh);
  const double top = 1.0 + std::abs(fh.c0 * s.A) + 100.0;
  double best_a = 1e300, best_b = 1e300;
  for (int n = r.n_min; n <= top; ++n) {
    const BoundConstants k = relative_bound_constants(s, fh, lambda, n);
    if (k.a < best_a) best_a = k.a, r.n_best_a = n;
    if (k.b < best_b) best_b = k.b, r.n_best_b = n;
  }
  r.a_at_best = best_a;
  r.b_at_best = best_b;
  return r;
}

// Trigonometric polynomial sum_{|k| <= K} c_k e^{2 pi i k xi} on [0, 1].
struct TrigPoly {
  std::vector<cplx> coef;  // index k + K
  int degree() const { return (static_cast<int>(coef.size()) - 1) / 2; }
  double l2() const {
    double s = 0;
    for (const cplx& c : coef) s += std::norm(c);
    return std::sqrt(s);
  }
  // norm of the m-th derivative, exact by Parseval
  double l2_derivative(int m) const {
    const int K = degree();
    double s = 0;
    for (int k = -K; k <= K; ++k) s += std::pow(2.0 * M_PI * std::abs(k), 2 * m) * std::norm(coef[k + K]);
    return std::sqrt(s);
  }
  cplx value(double xi, int deriv = 0) const {
    const int K = degree();
    cplx s = 0;
    for (int k = -K; k <= K; ++k) {
      const cplx ik = kI * (2.0 * M_PI * k);
      s += coef[k + K] * std::pow(ik, deriv) * std::exp(ik * xi);
    }
    return s;
  }
};

inline TrigPoly random_trig_poly(CounterRng& rng, int max_degree) {
  const int K = static_cast<int>(rng.next() % static_cast<std::uint64_t>(max_degree + 1));
  TrigPoly p;
  p.coef.resize(2 * K + 1);
  for (auto& c : p.coef) c = cplx(rng.normal(), rng.normal());
  return p;
}

struct RelativeBoundReport {
  double epsilon = 0;
  cplx lambda = 0;
  BoundConstants constants;
  NScan scan;
  SupNorms sup;
  double max_violation = -1e300;  // max of lhs - (a |u| + b |(F0 - lambda) u|)
  double max_ratio = 0;           // max of lhs / rhs over nonzero tests
  int suite_size = 0;
};

struct SuiteResult {
  double lhs = 0, norm = 0, f0norm = 0;
};

// Evaluates |F1 (u, w)|, |(u, w)| and |(F0 - lambda)(u, w)| for one test pair.
inline SuiteResult apply_operators(const PeriodicOrbit& orb, const FoldHopfPoint& fh, cplx lambda,
                                   const TrigPoly& u, const TrigPoly& w, const std::vector<detail::CoefficientDiffs>& cd) {
  const double A = 2.0 * M_PI / fh.mu0;
  const double c0A = fh.c0 * A, dc = c0A - orb.params.c * orb.period;
  const FirstPartials& d = fh.partials;
  SuiteResult r;
  r.norm = std::hypot(u.l2(), w.l2());
  // F0 - lambda has constant coefficients: exact mode by mode
  const int K = std::max(u.degree(), w.degree());
  double s = 0;
  for (int k = -K; k <= K; ++k) {
    const double nu = 2.0 * M_PI * k;
    const cplx uk = std::abs(k) <= u.degree() ? u.coef[k + u.degree()] : 0.0;
    const cplx wk = std::abs(k) <= w.degree() ? w.coef[k + w.degree()] : 0.0;
    const cplx a1 = (-nu * nu - kI * c0A * nu + A * A * d.fu - lambda) * uk + A * A * d.fw * wk;
    const cplx a2 = (-kI * c0A * nu + A * A * d.gw - lambda) * wk + A * A * d.gu * uk;
    s += std::norm(a1) + std::norm(a2);
  }
  r.f0norm = std::sqrt(s);
  // F1 has variable coefficients: grid quadrature on the oversampled grid
  const int M = static_cast<int>(cd.size());
  double acc = 0;
  for (int j = 0; j < M; ++j) {
    const double xi = static_cast<double>(j) / M;
    const cplx uu = u.value(xi), ww = w.value(xi), ux = u.value(xi, 1), wx = w.value(xi, 1);
    const auto& c = cd[j];
    acc += std::norm(dc * ux + c.bu * uu + c.bw * ww) + std::norm(dc * wx + c.gu * uu + c.gw * ww);
  }
  r.lhs = std::sqrt(acc / M);
  return r;
}

inline RelativeBoundReport verify_relative_bound(const PeriodicOrbit& orb, const FoldHopfPoint& fh, cplx lambda,
                                                 int n, int suite_size, std::uint64_t seed = 1,
                                                 unsigned workers = 1, int max_degree = 32) {
  if (suite_size < 1) throw PreconditionError("verify_relative_bound: suite_size must be >= 1");
  RelativeBoundReport rep;
  rep.epsilon = orb.epsilon;
  rep.lambda = lambda;
  rep.suite_size = suite_size;
  rep.sup = coefficient_sup_norms(orb, fh);
  rep.constants = relative_bound_constants(rep.sup, fh, lambda, n);
  rep.scan = scan_n(rep.sup, fh, lambda);
  const int M = 4 * (2 * max_degree + 1) + 4;  // 4x oversampled
  std::vector<detail::CoefficientDiffs> cd(M);
  for (int j = 0; j < M; ++j) cd[j] = detail::coefficient_diffs(orb, fh, static_cast<double>(j) / M);
  std::vector<SuiteResult> res(suite_size);
  parallel_for(suite_size, workers, [&](std::size_t i) {
    CounterRng rng(seed, i);
    const TrigPoly u = random_trig_poly(rng, max_degree);
    const TrigPoly w = random_trig_poly(rng, max_degree);
    res[i] = apply_operators(orb, fh, lambda, u, w, cd);
  });
  for (const SuiteResult& r : res) {
    const double rhs = rep.constants.a * r.norm + rep.constants.b * r.f0norm;
    rep.max_violation = std::max(rep.max_violation, r.lhs - rhs);
    if (rhs > 0) rep.max_ratio = std::max(rep.max_ratio, r.lhs / rhs);
  }
  return rep;
}

struct KatoReport {
  int n = 0;
  double max_violation = -1e300;  // |u'| - (|u''| / (n-1) + 2n(n+1)/(n-1) |u|)
  double max_ratio = 0;
};

inline KatoReport verify_kato_inequality(int n, int suite_size, std::uint64_t seed = 1, int max_degree = 64) {
  if (n < 2) throw PreconditionError("verify_kato_inequality: need n >= 2");
  KatoReport rep;
  rep.n = n;
  for (int i = 0; i < suite_size; ++i) {
    CounterRng rng(seed, i);
    const TrigPoly u = random_trig_poly(rng, max_degree);
    const double lhs = u.l2_derivative(1);
    const double rhs = u.l2_derivative(2) / (n - 1.0) + 2.0 * n * (n + 1.0) / (n - 1.0) * u.l2();
    rep.max_violation = std::max(rep.max_violation, lhs - rhs);
    if (rhs > 0) rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
  }
  return rep;
}

}  // namespace fh
