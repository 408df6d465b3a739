#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "equilibria.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "ode.hpp"
#include "orbits.hpp"
#include "parallel.hpp"

namespace fh {

// Coefficient matrix of the eigenvalue problem written as a first-order system.
inline CMat3 spectral_matrix(const PeriodicOrbit& orb, double xi, cplx lambda, double mu) {
  const Vec3 y = orb.state_at(xi);
  const FirstPartials d = orb.model.partials(y(0), y(2), orb.params.alpha);
  const double c = orb.params.c;
  CMat3 A;
  A << -kI * mu, 1.0, 0.0,
       lambda - d.fu, c - kI * mu, -d.fw,
       d.gu / c, 0.0, (d.gw - lambda) / c - kI * mu;
  return A;
}

struct EvansValue {
  cplx value;
  CMat3 monodromy;
  double liouville_mismatch = 0.0;
};

inline EvansValue evans_full(const PeriodicOrbit& orb, cplx lambda, double mu, const OdeOptions& o = {}) {
  auto rhs = [&](double xi, const CMat3& P) -> CMat3 { return spectral_matrix(orb, xi, lambda, mu) * P; };
  EvansValue ev;
  try {
    ev.monodromy = integrate(rhs, 0.0, CMat3(CMat3::Identity()), orb.period, o);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("evans: integration failed at lambda = (") +
                         std::to_string(lambda.real()) + ", " + std::to_string(lambda.imag()) + "): " +
                         e.what());
  }
  ev.value = (ev.monodromy - CMat3::Identity()).determinant();
  // det Phi against exp of the integrated trace
  cplx tr = 0.0;
  const double c = orb.params.c;
  for (const Vec3& y : orb.samples) {
    const FirstPartials d = orb.model.partials(y(0), y(2), orb.params.alpha);
    tr += c + (d.gw - lambda) / c - 3.0 * kI * mu;
  }
  const cplx expect = std::exp(tr * orb.spacing());
  // det Phi is typically tiny next to its entries, so the error is measured on the
  // Hadamard scale prod |col_k|, which bounds the rounding in the determinant
  double hadamard = 1.0;
  for (int k = 0; k < 3; ++k) hadamard *= ev.monodromy.col(k).norm();
  ev.liouville_mismatch =
      std::abs(ev.monodromy.determinant() - expect) / std::max(std::abs(expect), hadamard);
  return ev;
}

inline cplx evans(const PeriodicOrbit& orb, cplx lambda, double mu, const OdeOptions& o = {}) {
  return evans_full(orb, lambda, mu, o).value;
}

// Roots of z^3 + (lambda/c) z^2 + (mu0^2 - 2 lambda) z - (lambda^2 - mu0^2 lambda)/c.
inline std::array<cplx, 3> zero_amplitude_characteristic_roots(const FoldHopfPoint& fh, cplx lambda) {
  if (fh.c0 == 0.0) throw PreconditionError("zero-amplitude roots: c0 must be nonzero");
  const double m2 = fh.mu0 * fh.mu0, c = fh.c0;
  return cubic_roots(lambda / c, m2 - 2.0 * lambda, -(lambda * lambda - m2 * lambda) / c);
}

inline cplx evans_zero_amplitude(const FoldHopfPoint& fh, cplx lambda, double mu, double A) {
  if (!(A > 0)) throw PreconditionError("evans_zero_amplitude: period must be positive");
  cplx prod = 1.0;
  for (const cplx& z : zero_amplitude_characteristic_roots(fh, lambda)) prod *= std::exp((z - kI * mu) * A) - 1.0;
  return prod;
}

// Closed circle or closed polygon in the lambda-plane, parametrized by t in [0, 1).
struct Contour {
  cplx center = 0.0;
  double radius = 0.0;
  std::vector<cplx> vertices;  // non-empty selects the polygon

  static Contour circle(cplx c, double r) { return {c, r, {}}; }
  static Contour polygon(std::vector<cplx> v) { return {0.0, 0.0, std::move(v)}; }

  cplx at(double t) const {
    if (vertices.empty()) return center + radius * std::exp(2.0 * M_PI * kI * t);
    const double s = t * vertices.size();
    std::size_t k = static_cast<std::size_t>(s);
    if (k >= vertices.size()) k = vertices.size() - 1;
    const double f = s - k;
    return vertices[k] + f * (vertices[(k + 1) % vertices.size()] - vertices[k]);
  }
  bool contains(cplx z) const {
    if (vertices.empty()) return std::abs(z - center) < radius;
    bool in = false;  // even-odd rule
    for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++) {
      const cplx a = vertices[i], b = vertices[j];
      if ((a.imag() > z.imag()) != (b.imag() > z.imag()) &&
          z.real() < (b.real() - a.real()) * (z.imag() - a.imag()) / (b.imag() - a.imag()) + a.real())
        in = !in;
    }
    return in;
  }
};

struct ContourOptions {
  int initial_nodes = 64;
  int max_nodes = 16384;
  double abort_abs = 1e-10;
  double max_phase_step = M_PI / 4;
  unsigned workers = 1;
};

struct WindingResult {
  int winding = 0;
  double raw = 0.0;  // accumulated phase / 2 pi
  double min_abs = 0.0;
  std::vector<double> t;
  std::vector<cplx> values;
};

using AnalyticFn = std::function<cplx(cplx)>;

// Phase accumulation with bisection of every segment whose phase jump reaches max_phase_step.
inline WindingResult count_zeros_in_contour(const AnalyticFn& E, const Contour& contour,
                                            const ContourOptions& opt = {}) {
  const int n0 = std::max(8, opt.initial_nodes);
  std::vector<double> ts(n0);
  std::vector<cplx> vs(n0);
  for (int k = 0; k < n0; ++k) ts[k] = static_cast<double>(k) / n0;
  parallel_for(n0, opt.workers, [&](std::size_t k) { vs[k] = E(contour.at(ts[k])); });

  auto check = [&](cplx v, double t) {
    if (!(std::abs(v) > opt.abort_abs))
      throw NumericalError("contour passes through (or too near) a zero at t = " + std::to_string(t));
  };
  for (int k = 0; k < n0; ++k) check(vs[k], ts[k]);

  WindingResult res;
  double total = 0.0;
  for (int k = 0; k < n0; ++k) {
    // refine segment [t_k, t_k+1] depth-first, keeping nodes in order
    struct Seg { double ta, tb; cplx va, vb; };
    std::vector<Seg> stack{{ts[k], k + 1 < n0 ? ts[k + 1] : 1.0, vs[k], vs[(k + 1) % n0]}};
    while (!stack.empty()) {
      Seg s = stack.back();
      stack.pop_back();
      const double dphi = std::arg(s.vb / s.va);
      if (std::abs(dphi) >= opt.max_phase_step) {
        if (static_cast<int>(res.t.size()) + static_cast<int>(stack.size()) + n0 > opt.max_nodes)
          throw NumericalError("contour refinement exceeded the node budget");
        const double tm = 0.5 * (s.ta + s.tb);
        const cplx vm = E(contour.at(tm));
        check(vm, tm);
        stack.push_back({tm, s.tb, vm, s.vb});
        stack.push_back({s.ta, tm, s.va, vm});
        continue;
      }
      res.t.push_back(s.ta);
      res.values.push_back(s.va);
      total += dphi;
    }
  }
  res.raw = total / (2.0 * M_PI);
  res.winding = static_cast<int>(std::lround(res.raw));
  if (std::abs(res.raw - res.winding) > 0.01)
    throw NumericalError("non-integer winding " + std::to_string(res.raw));
  res.min_abs = 1e300;
  for (const cplx& v : res.values) res.min_abs = std::min(res.min_abs, std::abs(v));
  return res;
}

struct MullerOptions {
  double abs_tol = 1e-10;
  double step_tol = 1e-12;
  int max_iter = 60;
};

struct MullerResult {
  cplx root;
  double residual = 0.0;
  int iterations = 0;
};

inline MullerResult muller(const AnalyticFn& F, cplx x0, cplx x1, cplx x2, const MullerOptions& o = {}) {
  cplx f0 = F(x0), f1 = F(x1), f2 = F(x2);
  for (int it = 1; it <= o.max_iter; ++it) {
    const cplx q = (x2 - x1) / (x1 - x0);
    const cplx A = q * f2 - q * (1.0 + q) * f1 + q * q * f0;
    const cplx B = (2.0 * q + 1.0) * f2 - (1.0 + q) * (1.0 + q) * f1 + q * q * f0;
    const cplx C = (1.0 + q) * f2;
    const cplx disc = std::sqrt(B * B - 4.0 * A * C);
    const cplx den = std::abs(B + disc) >= std::abs(B - disc) ? B + disc : B - disc;
    const cplx x3 = den == 0.0 ? x2 + (x2 - x1) : x2 - (x2 - x1) * 2.0 * C / den;
    const cplx f3 = F(x3);
    x0 = x1; f0 = f1;
    x1 = x2; f1 = f2;
    x2 = x3; f2 = f3;
    if (std::abs(f3) < o.abs_tol || std::abs(x2 - x1) < o.step_tol * std::max(1.0, std::abs(x2)))
      return {x2, std::abs(f3), it};
    if (!std::isfinite(std::abs(x2))) break;
  }
  throw NumericalError("Muller refinement stagnated");
}

struct EigenvalueEstimate {
  cplx value;
  int multiplicity = 1;
  double residual = 0.0;  // |E| at the refined point
};

// Zeros inside a contour known to contain `count` of them: Muller on E deflated by the
// zeros already found, started near `hint`.
inline std::vector<EigenvalueEstimate> refine_zeros(const AnalyticFn& E, const Contour& contour, int count,
                                                    cplx hint, double scale, const MullerOptions& mo = {}) {
  std::vector<EigenvalueEstimate> out;
  std::vector<cplx> found;
  for (int k = 0; k < count; ++k) {
    AnalyticFn D = [&](cplx z) {
      cplx v = E(z);
      for (const cplx& r : found) v /= (z - r);
      return v;
    };
    const double dz = 0.05 * scale * (1 + k);
    cplx start = hint + cplx(0.0, 0.3 * dz * k);
    MullerOptions m2 = mo;
    m2.abs_tol = 0.0;  // deflated values are not on the scale of E; stop on the step
    MullerResult r = muller(k == 0 ? E : D, start - dz, start, start + dz, k == 0 ? mo : m2);
    if (!contour.contains(r.root))
      throw NumericalError("zero refinement left the contour");
    const double res = std::abs(E(r.root));
    bool merged = false;
    for (auto& e : out)
      if (std::abs(e.value - r.root) < 1e-6 * std::max(1.0, scale)) {
        ++e.multiplicity;
        merged = true;
      }
    if (!merged) out.push_back({r.root, 1, res});
    found.push_back(r.root);
  }
  return out;
}

struct SpectrumOptions {
  double radius_factor = 0.5;  // radius = factor * mu0^2
  ContourOptions contour;
  OdeOptions ode;
  MullerOptions muller;
};

struct SpectrumReport {
  double epsilon = 0.0;
  double mu = 0.0;
  Contour contour;
  int winding = 0;
  double min_abs_on_contour = 0.0;
  std::vector<EigenvalueEstimate> eigenvalues;
  std::optional<cplx> lambda1;
  bool verdict_unstable = false;
  std::string diagnostics;
  std::vector<std::pair<cplx, cplx>> contour_values;  // (lambda, E) at accepted nodes
};

inline Contour default_contour(const FoldHopfPoint& fh, double radius_factor = 0.5) {
  const double m2 = fh.mu0 * fh.mu0;
  return Contour::circle(m2, radius_factor * m2);
}

inline SpectrumReport spectrum_at(const PeriodicOrbit& orb, const FoldHopfPoint& fh, double mu, cplx hint,
                                  const SpectrumOptions& opt = {}) {
  SpectrumReport rep;
  rep.epsilon = orb.epsilon;
  rep.mu = mu;
  rep.contour = default_contour(fh, opt.radius_factor);
  AnalyticFn E = [&](cplx l) { return evans(orb, l, mu, opt.ode); };
  const WindingResult w = count_zeros_in_contour(E, rep.contour, opt.contour);
  rep.winding = w.winding;
  rep.min_abs_on_contour = w.min_abs;
  for (std::size_t k = 0; k < w.t.size(); ++k) rep.contour_values.emplace_back(rep.contour.at(w.t[k]), w.values[k]);
  if (w.winding > 0)
    rep.eigenvalues = refine_zeros(E, rep.contour, w.winding, hint, fh.mu0 * fh.mu0 * 0.1, opt.muller);
  return rep;
}

inline SpectrumReport locate_unstable_eigenvalue(const PeriodicOrbit& orb, const FoldHopfPoint& fh,
                                                 const SpectrumOptions& opt = {}) {
  SpectrumReport rep = spectrum_at(orb, fh, 0.0, fh.mu0 * fh.mu0, opt);
  if (rep.winding != 1) {
    rep.diagnostics = "winding " + std::to_string(rep.winding) + " != 1 inside the contour; verdict withheld";
    return rep;
  }
  rep.lambda1 = rep.eigenvalues.front().value;
  rep.verdict_unstable = rep.lambda1->real() > 0;
  rep.diagnostics = rep.verdict_unstable ? "spectrally unstable" : "tracked eigenvalue not in Re > 0";
  return rep;
}

struct SliceEntry {
  double mu = 0.0;
  int winding = 0;
  std::vector<EigenvalueEstimate> eigenvalues;
  std::string error;
};

// Processes Bloch parameters outward from the one nearest 0, seeding each refinement
// with the closest already-processed eigenvalue.
inline std::vector<SliceEntry> spectrum_slice(const PeriodicOrbit& orb, const FoldHopfPoint& fh,
                                              const std::vector<double>& mu_grid, const SpectrumOptions& opt = {},
                                              unsigned workers = 1) {
  const double bound = M_PI / orb.period;
  for (double mu : mu_grid)
    if (!(mu > -bound - 1e-12 && mu <= bound + 1e-12))
      throw PreconditionError("spectrum_slice: mu outside (-pi/A, pi/A]");
  std::vector<SliceEntry> out(mu_grid.size());
  // nonnegative mu sequentially by continuation; negative mu by conjugate-free independent runs
  std::vector<std::size_t> order(mu_grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(mu_grid[a]) < std::abs(mu_grid[b]); });
  std::vector<std::pair<double, cplx>> known;
  for (std::size_t i : order) {
    const double mu = mu_grid[i];
    // closed-form start: zero-amplitude branch lambda with z1 ~ i mu, lambda ~ mu0^2 - i c0 mu
    cplx hint = fh.mu0 * fh.mu0 - kI * fh.c0 * mu;
    double best = 1e300;
    for (const auto& [m, l] : known)
      if (std::abs(m - mu) < best && (m == 0 || (m > 0) == (mu > 0))) {
        best = std::abs(m - mu);
        hint = l;
      }
    SliceEntry& e = out[i];
    e.mu = mu;
    try {
      SpectrumOptions o = opt;
      o.contour.workers = workers;
      SpectrumReport r = spectrum_at(orb, fh, mu, hint, o);
      e.winding = r.winding;
      e.eigenvalues = r.eigenvalues;
      if (!r.eigenvalues.empty()) known.emplace_back(mu, r.eigenvalues.front().value);
    } catch (const Error& ex) {
      e.error = ex.what();
    }
  }
  return out;
}

// Bloch eigenfunction (u, v, w) at N equispaced points for an eigenvalue lambda of L_mu:
// start from the eigenvector of the monodromy for the multiplier closest to 1.
inline std::vector<Eigen::Vector3cd> unstable_eigenfunction(const PeriodicOrbit& orb, cplx lambda, double mu,
                                                            int npoints, const OdeOptions& o = {}) {
  const EvansValue ev = evans_full(orb, lambda, mu, o);
  Eigen::ComplexEigenSolver<CMat3> es(ev.monodromy);
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(es.eigenvalues()(k) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = k;
  Eigen::Vector3cd y0 = es.eigenvectors().col(best);
  int imax = 0;
  y0.cwiseAbs().maxCoeff(&imax);
  y0 *= std::abs(y0(imax)) / y0(imax);  // largest entry real positive
  auto rhs = [&](double xi, const Eigen::Vector3cd& y) -> Eigen::Vector3cd {
    return spectral_matrix(orb, xi, lambda, mu) * y;
  };
  std::vector<double> times(npoints);
  for (int k = 0; k < npoints; ++k) times[k] = orb.period * k / npoints;
  return integrate_sampled(rhs, 0.0, y0, orb.period, times, o);
}

// ------------------------------------------------------------- Hill's method

// Fourier-Galerkin matrix of the Bloch operator on 2(2K+1) modes, unknowns ordered (u_k, w_k).
inline Eigen::MatrixXcd hill_matrix(const PeriodicOrbit& orb, double mu, int K) {
  const std::size_t N = orb.size();
  const int M = 2 * K + 1;
  std::vector<double> fu(N), fw(N), gu(N), gw(N);
  for (std::size_t j = 0; j < N; ++j) {
    const FirstPartials d = orb.model.partials(orb.samples[j](0), orb.samples[j](2), orb.params.alpha);
    fu[j] = d.fu, fw[j] = d.fw, gu[j] = d.gu, gw[j] = d.gw;
  }
  auto coeff = [&](const std::vector<double>& a, int m) {
    cplx s = 0.0;
    for (std::size_t j = 0; j < N; ++j) s += a[j] * std::exp(-2.0 * M_PI * kI * double(m) * double(j) / double(N));
    return s / double(N);
  };
  std::vector<cplx> cfu(2 * M), cfw(2 * M), cgu(2 * M), cgw(2 * M);
  for (int m = -(M - 1); m <= M - 1; ++m) {
    cfu[m + M - 1] = coeff(fu, m);
    cfw[m + M - 1] = coeff(fw, m);
    cgu[m + M - 1] = coeff(gu, m);
    cgw[m + M - 1] = coeff(gw, m);
  }
  const double c = orb.params.c;
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2 * M, 2 * M);
  for (int a = 0; a < M; ++a) {
    const double nu = mu + 2.0 * M_PI * (a - K) / orb.period;
    for (int b = 0; b < M; ++b) {
      const int idx = a - b + M - 1;
      H(2 * a, 2 * b) = cfu[idx];
      H(2 * a, 2 * b + 1) = cfw[idx];
      H(2 * a + 1, 2 * b) = cgu[idx];
      H(2 * a + 1, 2 * b + 1) = cgw[idx];
    }
    H(2 * a, 2 * a) += -nu * nu - kI * c * nu;
    H(2 * a + 1, 2 * a + 1) += -kI * c * nu;
  }
  return H;
}

// Shifted inverse iteration for the eigenvalue of the Hill matrix nearest `shift`.
inline cplx hill_eigenvalue(const PeriodicOrbit& orb, double mu, cplx shift, int K = 32, int max_iter = 200) {
  const Eigen::MatrixXcd H = hill_matrix(orb, mu, K);
  const Eigen::MatrixXcd S = H - shift * Eigen::MatrixXcd::Identity(H.rows(), H.cols());
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(S);
  Eigen::VectorXcd x = Eigen::VectorXcd::Ones(H.rows()) / std::sqrt(double(H.rows()));
  cplx lam = shift;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXcd y = lu.solve(x);
    const cplx nu = x.dot(y);  // x is unit length
    const cplx next = shift + 1.0 / nu;
    x = y / y.norm();
    if (std::abs(next - lam) < 1e-14 * std::max(1.0, std::abs(next))) return next;
    lam = next;
  }
  return lam;
}

}  // namespace fh
