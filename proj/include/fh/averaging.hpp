#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "equilibria.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"

namespace fh {

// alpha(eps) = alpha0 + a1 eps + a2 eps^2, likewise c, and the base point the
// expansion is centred on: P(eps) = P0 + s1 eps + s2 eps^2. Empty alpha vectors mean zero.
struct UnfoldingPath {
  std::vector<double> alpha1, alpha2;
  double c1 = 0.0, c2 = 0.0;
  Vec3 state1 = Vec3::Zero(), state2 = Vec3::Zero();

  std::vector<double> alpha_at(const FoldHopfPoint& fh, double eps) const {
    std::vector<double> a = fh.alpha0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (k < alpha1.size()) a[k] += alpha1[k] * eps;
      if (k < alpha2.size()) a[k] += alpha2[k] * eps * eps;
    }
    return a;
  }
  double c_at(const FoldHopfPoint& fh, double eps) const { return fh.c0 + c1 * eps + c2 * eps * eps; }
  WaveParameters params_at(const FoldHopfPoint& fh, double eps) const {
    return {alpha_at(fh, eps), c_at(fh, eps)};
  }
  Vec3 base_point(const FoldHopfPoint& fh, double eps) const {
    return fh.eq.point + eps * state1 + eps * eps * state2;
  }
};

// gamma = g0 + g1 eps with p chosen so that (u0, 0, u0/gamma) stays an equilibrium:
// p(eps) = u0/gamma(eps) - h(u0), truncated at second order like the base point.
inline UnfoldingPath fhn_tracking_path(const FoldHopfPoint& fh, double gamma1) {
  const double g0 = fh.alpha0[fhn::GAMMA];
  const double u0 = fh.eq.point(0);
  UnfoldingPath path;
  path.alpha1 = {gamma1, -u0 * gamma1 / (g0 * g0)};
  path.alpha2 = {0.0, u0 * gamma1 * gamma1 / (g0 * g0 * g0)};
  path.state1 = Vec3(0.0, 0.0, -u0 * gamma1 / (g0 * g0));
  path.state2 = Vec3(0.0, 0.0, u0 * gamma1 * gamma1 / (g0 * g0 * g0));
  return path;
}

// gamma = g0 + g1 eps with p and c frozen. The equilibrium does not persist along it.
inline UnfoldingPath fhn_frozen_path(double gamma1) {
  UnfoldingPath path;
  path.alpha1 = {gamma1, 0.0};
  return path;
}

// Expansion of F(y, eps) = eps^-1 Q^-1 X(P(eps) + eps Q y, eps) - B y = X0 + eps X1(y) + ...
struct VectorFieldExpansion {
  ModelDefinition model;
  FoldHopfPoint fh;
  UnfoldingPath path;
  Mat3 Q, Qinv, B;
  double h = 1e-2;

  Vec3 scaled_field(const Vec3& y, double eps) const {
    const WaveParameters p = path.params_at(fh, eps);
    const Vec3 x = path.base_point(fh, eps) + eps * (Q * y);
    return Qinv * tw_vector_field(model, p, x) / eps - B * y;
  }

  // order-4 Richardson on symmetric combinations at +-h, +-h/2
  Vec3 X0(const Vec3& y, double step) const {
    auto S = [&](double e) { return 0.5 * (scaled_field(y, e) + scaled_field(y, -e)); };
    return (4.0 * S(0.5 * step) - S(step)) / 3.0;
  }
  Vec3 X1(const Vec3& y, double step) const {
    auto D = [&](double e) { return (scaled_field(y, e) - scaled_field(y, -e)) / (2 * e); };
    return (4.0 * D(0.5 * step) - D(step)) / 3.0;
  }
  Vec3 X0(const Vec3& y) const { return X0(y, h); }
  Vec3 X1(const Vec3& y) const { return X1(y, h); }

  // Difference between extrapolations started from h and from h/2.
  double extrapolation_disagreement(const Vec3& y) const {
    return std::max((X1(y, h) - X1(y, 0.5 * h)).cwiseAbs().maxCoeff(),
                    (X0(y, h) - X0(y, 0.5 * h)).cwiseAbs().maxCoeff());
  }

  // Second route: quadratic and linear parts of X1 from analytic second partials,
  // constant part from a second difference along the base-point path.
  Vec3 X1_taylor(const Vec3& y) const {
    const Vec3 x = Q * y;
    const Vec3& P0 = fh.eq.point;
    const std::vector<double>& a0 = fh.alpha0;
    const double c = fh.c0;
    const SecondPartials s = model.second_partials(P0(0), P0(2), a0);
    const double xu = x(0), xw = x(2);
    Vec3 quad(0.0,
              -(s.fuu * xu * xu + 2 * s.fuw * xu * xw + s.fww * xw * xw),
              (s.guu * xu * xu + 2 * s.guw * xu * xw + s.gww * xw * xw) / c);
    // derivative of a first partial along the path at eps = 0
    auto along = [&](double d_u, double d_w, const std::vector<double>& mixed) {
      double v = d_u * path.state1(0) + d_w * path.state1(2);
      for (std::size_t k = 0; k < mixed.size() && k < path.alpha1.size(); ++k)
        v += mixed[k] * path.alpha1[k];
      return v;
    };
    const FirstPartials d = fh.partials;
    const double dfu = along(s.fuu, s.fuw, s.fu_a);
    const double dfw = along(s.fuw, s.fww, s.fw_a);
    const double dgu = along(s.guu, s.guw, s.gu_a);
    const double dgw = along(s.guw, s.gww, s.gw_a);
    Mat3 dJ;
    dJ << 0.0, 0.0, 0.0,
          -dfu, path.c1, -dfw,
          dgu / c - d.gu * path.c1 / (c * c), 0.0, dgw / c - d.gw * path.c1 / (c * c);
    auto K = [&](double e) {
      return Vec3(Qinv * tw_vector_field(model, path.params_at(fh, e), path.base_point(fh, e)));
    };
    auto second = [&](double e) { return (K(e) - 2.0 * K(0.0) + K(-e)) / (e * e); };
    const Vec3 constant = 0.5 * (4.0 * second(0.5 * h) - second(h)) / 3.0;
    return Qinv * (0.5 * quad + dJ * x) + constant;
  }
};

struct ExpansionOptions {
  double h = 1e-2;  // roundoff grows like 1/h^2, truncation like h^4
  double smoothness_tol = 1e-7;
};

// Builds the expansion in the frame of Q (default fh.Q) and validates the
// extrapolation on a few probe points.
inline VectorFieldExpansion expand_vector_field(const ModelDefinition& model, const FoldHopfPoint& fh,
                                                const UnfoldingPath& path, const Mat3* Q = nullptr,
                                                const ExpansionOptions& opt = {}) {
  if (model.diff_coeff != 1.0)
    throw PreconditionError("expand_vector_field: model must be canonical (d = 1)");
  VectorFieldExpansion ex{model, fh, path, Q ? *Q : fh.Q, Mat3::Zero(), fh.block(), opt.h};
  ex.Qinv = ex.Q.inverse();
  const Mat3 J = tw_jacobian(model, fh.params(), fh.eq.point);
  const double block_err = (ex.Qinv * J * ex.Q - ex.B).cwiseAbs().maxCoeff();
  if (block_err > 1e-8)
    throw PreconditionError("expand_vector_field: Q does not conjugate J(P0) to the block form (" +
                            std::to_string(block_err) + ")");
  const WaveParameters p0 = path.params_at(fh, 0.0);
  if (p0.c != fh.c0 || path.base_point(fh, 0.0) != fh.eq.point)
    throw PreconditionError("expand_vector_field: path does not start at the fold-Hopf point");
  for (const Vec3& y : {Vec3(0.3, -0.2, 0.1), Vec3(-0.1, 0.25, -0.3)}) {
    const double dis = ex.extrapolation_disagreement(y);
    if (dis > opt.smoothness_tol)
      throw NumericalError("expand_vector_field: extrapolation disagreement " + std::to_string(dis) +
                           " suggests insufficient model smoothness");
  }
  return ex;
}

struct AveragedSystem {
  std::function<Vec2(double r, double w)> R;
  Vec2 zero = Vec2::Zero();
  Mat2 jac_at_zero = Mat2::Zero();
  double solvability_residual = 0.0;
  double quadrature_check = 0.0;
  int nodes = 256;
  Mat3 Q = Mat3::Identity();

  double R1(double r, double w) const { return R(r, w)(0); }
  double R2(double r, double w) const { return R(r, w)(1); }
  double det() const { return jac_at_zero.determinant(); }
};

// Composite trapezoid for the theta-averages of the first-order terms.
inline Vec2 average_first_order(const std::function<Vec3(const Vec3&)>& X1, double r, double w, int n) {
  Vec2 acc = Vec2::Zero();
  for (int k = 0; k < n; ++k) {
    const double th = 2.0 * M_PI * k / n;
    const double cs = std::cos(th), sn = std::sin(th);
    const Vec3 x = X1(Vec3(r * cs, r * sn, w));
    acc += Vec2(cs * x(0) + sn * x(1), x(2));
  }
  return acc * (2.0 * M_PI / n);
}

inline double solvability_residual(const VectorFieldExpansion& ex) {
  double worst = 0.0;
  for (const Vec3& y : {Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(0, 0.5, 0.2), Vec3(-0.3, 0.1, -0.4)})
    worst = std::max(worst, ex.X0(y).cwiseAbs().maxCoeff());
  return worst;
}

struct AveragingOptions {
  int nodes = 256;
  double solvability_tol = 1e-8;
  double quadrature_tol = 1e-10;
};

inline AveragedSystem averaged_functions(const VectorFieldExpansion& ex, const AveragingOptions& opt = {}) {
  AveragedSystem avg;
  avg.nodes = opt.nodes;
  avg.Q = ex.Q;
  avg.solvability_residual = solvability_residual(ex);
  if (avg.solvability_residual > opt.solvability_tol)
    throw NumericalError("averaging: X_j0 does not vanish along the unfolding path (residual " +
                         std::to_string(avg.solvability_residual) +
                         "); the base point is not an equilibrium of the unfolded system");
  auto X1 = [ex](const Vec3& y) { return ex.X1(y); };
  const int n = opt.nodes;
  avg.R = [X1, n](double r, double w) { return average_first_order(X1, r, w, n); };
  double worst = 0.0;
  for (const Vec2& rw : {Vec2(1.0, 0.5), Vec2(0.2, -0.1)}) {
    const Vec2 a = average_first_order(X1, rw(0), rw(1), n);
    const Vec2 b = average_first_order(X1, rw(0), rw(1), 2 * n);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  avg.quadrature_check = worst;
  if (worst > opt.quadrature_tol)
    throw NumericalError("averaging: quadrature self-check failed (" + std::to_string(worst) + ")");
  return avg;
}

inline Mat2 fd_jacobian(const std::function<Vec2(double, double)>& R, const Vec2& x) {
  Mat2 J;
  for (int k = 0; k < 2; ++k) {
    // one step for both coordinates: w* can be much smaller than r*
    const double hk = 1e-4 * std::max(1e-8, x.cwiseAbs().maxCoeff());
    Vec2 e = Vec2::Zero();
    e(k) = hk;
    const Vec2 p = x + e, m = x - e;
    J.col(k) = (R(p(0), p(1)) - R(m(0), m(1))) / (2 * hk);
  }
  return J;
}

// Newton with a central-difference Jacobian; stores zero and Jacobian into avg.
inline Vec2 find_averaged_zero(AveragedSystem& avg, const Vec2& guess, int max_iter = 50) {
  if (!(guess(0) > 0)) throw PreconditionError("find_averaged_zero: initial r must be positive");
  Vec2 x = guess;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    const Vec2 F = avg.R(x(0), x(1));
    const Mat2 J = fd_jacobian(avg.R, x);
    if (!(std::abs(J.determinant()) > 0))
      throw NumericalError("find_averaged_zero: singular Jacobian during Newton");
    const Vec2 dx = J.partialPivLu().solve(-F);
    x += dx;
    if (!(x(0) > 0)) throw NumericalError("find_averaged_zero: Newton left the half-plane r > 0");
    // the finite-difference Jacobian puts a floor near 1e-12 on the step size, so stop
    // once the step is well below the quadratic-convergence regime and polish once
    if (dx.cwiseAbs().maxCoeff() <= 1e-10 * x.cwiseAbs().maxCoeff()) {
      const Vec2 Fp = avg.R(x(0), x(1));
      x += fd_jacobian(avg.R, x).partialPivLu().solve(-Fp);
      converged = true;
      break;
    }
  }
  const Vec2 F = avg.R(x(0), x(1));
  if (!converged && F.cwiseAbs().maxCoeff() > 1e-12)
    throw NumericalError("find_averaged_zero: no convergence after " + std::to_string(max_iter) +
                         " iterations");
  if (F.cwiseAbs().maxCoeff() > 1e-8)
    throw NumericalError("find_averaged_zero: residual " + std::to_string(F.cwiseAbs().maxCoeff()));
  avg.zero = x;
  avg.jac_at_zero = fd_jacobian(avg.R, x);
  if (std::abs(avg.jac_at_zero.determinant()) <= 1e-10)
    throw NumericalError("find_averaged_zero: degenerate averaged Jacobian (|det| <= 1e-10)");
  return x;
}

// Zero and determinant expressed in another frame Q_a, given the averaging was done in Q_b.
// M = Q_a^-1 Q_b commutes with the block form: a rotation-scaling by rho in the plane
// and a factor s on the kernel direction, so r -> rho r and w -> s w.
struct FrameMap {
  double rho = 1.0;
  double s = 1.0;
};

inline FrameMap frame_map(const Mat3& Qa, const Mat3& Qb) {
  const Mat3 M = Qa.inverse() * Qb;
  const double det2 = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
  return {std::sqrt(std::abs(det2)), M(2, 2)};
}

// -------------------------------------------------------- FHN closed forms

// Reference closed forms for the d = 5 system (frame of the variable change above, G = average of
// d(r, w)/d theta). Evaluated verbatim, including r and w formulas.
struct FhnPublishedForms {
  double gamma0 = 0, gamma1 = 0, u0 = 0, c0 = 0, mu0 = 0;
  double r_star = 0, w_star = 0, det = 0;
  Vec2 G(double r, double w) const {
    const double d0 = fhn::diffusion, de = fhn::delta, k = 3 * u0 - 1.1;
    const double m3 = mu0 * mu0 * mu0;
    const double g1 = M_PI * gamma0 * r / (d0 * d0 * m3) * (2 * k * w + d0 * de * de * gamma1);
    const double g2 = -2 * M_PI / (d0 * gamma0 * m3) *
                      (c0 / d0 * k * (0.5 * r * r + gamma0 * gamma0 * w * w) - de * gamma1 * w);
    return {g1, g2};
  }
};

inline FhnPublishedForms fhn_averaged_closed_form_published(double gamma0, double gamma1, double u0,
                                                            double c0, double mu0) {
  const double d0 = fhn::diffusion, de = fhn::delta;
  if (gamma1 == 0.0) throw PreconditionError("closed form: requires gamma1 != 0");
  if (!(gamma1 * (11 - 30 * u0) > 0))
    throw PreconditionError("closed form: requires gamma1 (11 - 30 u0) > 0");
  const double q = 2 * de - c0 * std::pow(gamma0, 4);
  if (std::abs(q) <= 1e-12 * std::max(2 * de, c0 * std::pow(gamma0, 4)))
    throw PreconditionError("closed form: requires 2 delta - c0 gamma0^4 != 0");
  FhnPublishedForms f{gamma0, gamma1, u0, c0, mu0};
  f.r_star = d0 * gamma0 * std::abs(gamma1) / std::abs(3 * u0 - 1.1) *
             std::sqrt(std::abs((c0 * std::pow(gamma0, 4) - 2 * de) / (2 * c0)));
  f.w_star = 5 * d0 * gamma0 * gamma0 * gamma1 / (11 - 30 * u0);
  f.det = 2 * M_PI * M_PI * q * gamma0 * gamma0 * gamma1 * gamma1 / (d0 * d0 * std::pow(mu0, 6));
  return f;
}

// Exact first-order averages for the tracking path, canonical frame, transform fhn_transform,
// R as defined by the theta-average of (cos X11 + sin X21, X31). c is the canonical speed.
struct FhnExactForms {
  double gamma0 = 0, gamma1 = 0, u0 = 0, c = 0;
  double r_star = 0, w_star = 0, det = 0;
  Vec2 R(double r, double w) const {
    const double de = fhn::delta, k = 3 * u0 - 1.1, D = 1 - de * gamma0 * gamma0;
    return {M_PI * gamma0 * gamma0 * r / D * (de * de * gamma1 / c - 2 * k * c * w),
            M_PI / D * (k * c * (r * r + 2 * gamma0 * gamma0 * w * w) - 2 * de * gamma1 * w / c)};
  }
};

inline FhnExactForms fhn_averaged_closed_form(double gamma0, double gamma1, double u0, double c) {
  const double de = fhn::delta;
  if (gamma1 == 0.0) throw PreconditionError("closed form: requires gamma1 != 0");
  if (std::abs(3 * u0 - 1.1) <= 1e-12) throw PreconditionError("closed form: requires u0 != 11/30");
  const double D = 1 - de * gamma0 * gamma0;
  if (std::abs(D) <= 1e-12) throw PreconditionError("closed form: requires delta gamma0^2 != 1");
  if (!(2 - de * gamma0 * gamma0 > 0)) throw PreconditionError("closed form: requires delta gamma0^2 < 2");
  const double k = 3 * u0 - 1.1;
  FhnExactForms f{gamma0, gamma1, u0, c};
  f.w_star = de * gamma1 / (2 * k * gamma0);
  f.r_star = std::abs(gamma1) / (gamma0 * std::abs(k)) * std::sqrt(de * (2 - de * gamma0 * gamma0) / 2);
  f.det = 2 * M_PI * M_PI * de * de * gamma0 * gamma1 * gamma1 * (2 - de * gamma0 * gamma0) / (D * D);
  return f;
}

}  // namespace fh
