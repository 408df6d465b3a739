#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "orbits.hpp"
#include "rng.hpp"
#include "stats.hpp"

// Method of lines for u_t = d u_xx - c u_x + f, w_t = -c w_x + g on a periodic domain.

namespace fh {

struct Grid1D {
  int N = 512;
  double length = 1.0;

  Grid1D() = default;
  Grid1D(int n, double L) : N(n), length(L) {
    if (n < 64 || (n & (n - 1)) != 0) throw PreconditionError("Grid1D: N must be a power of two >= 64");
    if (!(L > 0)) throw PreconditionError("Grid1D: length must be positive");
  }
  double spacing() const { return length / N; }
  double x(int j) const { return length * j / N; }
};

struct PdeState {
  Eigen::VectorXd u, w;
};

inline double l2_norm(const PdeState& s, double h) {
  return std::sqrt(h * (s.u.squaredNorm() + s.w.squaredNorm()));
}

inline PdeState cyclic_shift(const PdeState& s, int m) {
  const int N = static_cast<int>(s.u.size());
  PdeState r{Eigen::VectorXd(N), Eigen::VectorXd(N)};
  for (int j = 0; j < N; ++j) {
    const int k = ((j + m) % N + N) % N;
    r.u(j) = s.u(k);
    r.w(j) = s.w(k);
  }
  return r;
}

class Stepper {
 public:
  Stepper(ModelDefinition m, WaveParameters p, Grid1D g) : model_(std::move(m)), params_(std::move(p)), grid_(g) {}

  const Grid1D& grid() const { return grid_; }
  const WaveParameters& params() const { return params_; }
  const ModelDefinition& model() const { return model_; }

  // advection + reaction
  PdeState explicit_rhs(const PdeState& s) const {
    const int N = grid_.N;
    const double h = grid_.spacing(), c = params_.c;
    PdeState r{Eigen::VectorXd(N), Eigen::VectorXd(N)};
    for (int j = 0; j < N; ++j) {
      const int jp = (j + 1) % N, jm = (j + N - 1) % N;
      r.u(j) = -c * (s.u(jp) - s.u(jm)) / (2 * h) + model_.f(s.u(j), s.w(j), params_.alpha);
      r.w(j) = -c * (s.w(jp) - s.w(jm)) / (2 * h) + model_.g(s.u(j), s.w(j), params_.alpha);
    }
    return r;
  }

  Eigen::VectorXd diffusion(const Eigen::VectorXd& u) const {
    const int N = grid_.N;
    const double k = model_.diff_coeff / (grid_.spacing() * grid_.spacing());
    Eigen::VectorXd r(N);
    for (int j = 0; j < N; ++j) r(j) = k * (u((j + 1) % N) - 2 * u(j) + u((j + N - 1) % N));
    return r;
  }

  PdeState rhs(const PdeState& s) const {
    PdeState r = explicit_rhs(s);
    r.u += diffusion(s.u);
    return r;
  }

  // (I - dt d Delta_h)^{-1} u for the periodic three-point Laplacian, Sherman-Morrison on Thomas.
  Eigen::VectorXd implicit_solve(const Eigen::VectorXd& rhs, double dt) const {
    const int N = grid_.N;
    const double r = dt * model_.diff_coeff / (grid_.spacing() * grid_.spacing());
    const double a = -r, b = 1 + 2 * r, cc = -r;
    // A = T + uv^T with T tridiagonal, u = (gamma, 0.., cc), v = (1, 0.., a/gamma)
    const double gamma = -b;
    std::vector<double> diag(N, b);
    diag[0] = b - gamma;
    diag[N - 1] = b - a * cc / gamma;
    auto thomas = [&](Eigen::VectorXd d) {
      std::vector<double> cp(N), dp(N);
      cp[0] = cc / diag[0];
      dp[0] = d(0) / diag[0];
      for (int i = 1; i < N; ++i) {
        const double m = diag[i] - a * cp[i - 1];
        cp[i] = cc / m;
        dp[i] = (d(i) - a * dp[i - 1]) / m;
      }
      Eigen::VectorXd x(N);
      x(N - 1) = dp[N - 1];
      for (int i = N - 2; i >= 0; --i) x(i) = dp[i] - cp[i] * x(i + 1);
      return x;
    };
    Eigen::VectorXd uvec = Eigen::VectorXd::Zero(N);
    uvec(0) = gamma;
    uvec(N - 1) = cc;
    const Eigen::VectorXd y = thomas(rhs), z = thomas(uvec);
    const double fac = (y(0) + a * y(N - 1) / gamma) / (1 + z(0) + a * z(N - 1) / gamma);
    return y - fac * z;
  }

  // |c| / h + largest row sum of the reaction Jacobian over the state
  double explicit_bound(const PdeState& s) const {
    double L = 0;
    for (int j = 0; j < grid_.N; ++j) {
      const FirstPartials d = model_.partials(s.u(j), s.w(j), params_.alpha);
      L = std::max({L, std::abs(d.fu) + std::abs(d.fw), std::abs(d.gu) + std::abs(d.gw)});
    }
    return std::abs(params_.c) / grid_.spacing() + L;
  }
  double max_stable_dt(const PdeState& s) const { return 0.25 / explicit_bound(s); }

  // Heun on the explicit part, backward Euler on diffusion in both stages.
  void step(PdeState& s, double dt) const {
    const PdeState e0 = explicit_rhs(s);
    PdeState st{implicit_solve(s.u + dt * e0.u, dt), s.w + dt * e0.w};
    const PdeState e1 = explicit_rhs(st);
    s.u = implicit_solve(s.u + 0.5 * dt * (e0.u + e1.u), dt);
    s.w = s.w + 0.5 * dt * (e0.w + e1.w);
  }

 private:
  ModelDefinition model_;
  WaveParameters params_;
  Grid1D grid_;
};

inline Stepper semidiscretize(const ModelDefinition& m, const WaveParameters& p, const Grid1D& g) {
  if (m.diff_coeff <= 0) throw PreconditionError("semidiscretize: diffusion coefficient must be positive");
  return Stepper(m, p, g);
}

inline PdeState sample_orbit(const PeriodicOrbit& orb, const Grid1D& g, double shift = 0.0) {
  PdeState s{Eigen::VectorXd(g.N), Eigen::VectorXd(g.N)};
  for (int j = 0; j < g.N; ++j) {
    const Vec3 y = orb.state_at(g.x(j) * orb.period / g.length + shift);
    s.u(j) = y(0);
    s.w(j) = y(2);
  }
  return s;
}

// Orbit at the grid nodes from the traveling-wave flow's dense output, free of the
// interpolation error of state_at.
inline PdeState sample_orbit_exact(const PeriodicOrbit& orb, const Grid1D& g, const OdeOptions& o = {1e-13, 1e-15}) {
  std::vector<double> times(g.N);
  for (int j = 0; j < g.N; ++j) times[j] = orb.period * j / g.N;
  auto rhs = [&](double, const Vec3& y) { return tw_vector_field(orb.model, orb.params, y); };
  const std::vector<Vec3> ys = integrate_sampled(rhs, 0.0, orb.samples.front(), orb.period, times, o);
  PdeState s{Eigen::VectorXd(g.N), Eigen::VectorXd(g.N)};
  for (int j = 0; j < g.N; ++j) s.u(j) = ys[j](0), s.w(j) = ys[j](2);
  return s;
}

struct DiscreteWave {
  PdeState state;
  double c = 0.0;  // speed at which the discrete profile is steady
  double residual = 0.0;
  int iterations = 0;
};

// Steady state of the semi-discrete system near `guess`, with c free and the phase pinned
// by orthogonality of the correction to the guess's discrete derivative.
inline DiscreteWave discrete_steady_state(const Stepper& st, const PdeState& guess, double tol = 1e-13,
                                          int max_iter = 20) {
  const int N = st.grid().N;
  const double h = st.grid().spacing(), dk = st.model().diff_coeff / (h * h);
  const auto& alpha = st.params().alpha;
  Eigen::VectorXd ref_du(N);
  for (int j = 0; j < N; ++j) ref_du(j) = (guess.u((j + 1) % N) - guess.u((j + N - 1) % N)) / (2 * h);
  DiscreteWave dw{guess, st.params().c, 0, 0};
  // rounding floor of the stencil: eps * d / h^2 * |u|
  const double scale = std::max(guess.u.cwiseAbs().maxCoeff(), guess.w.cwiseAbs().maxCoeff());
  tol = std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() * (dk + std::abs(st.params().c) / h) * scale);
  for (int it = 1; it <= max_iter; ++it) {
    const Stepper s(st.model(), {alpha, dw.c}, st.grid());
    const PdeState F = s.rhs(dw.state);
    const double phase = ref_du.dot(dw.state.u - guess.u) * h;
    Eigen::VectorXd R(2 * N + 1);
    R << F.u, F.w, phase;
    dw.residual = R.head(2 * N).cwiseAbs().maxCoeff();
    dw.iterations = it - 1;
    if (dw.residual < tol) return dw;
    std::vector<Eigen::Triplet<double>> T;
    T.reserve(12 * N);
    const double c = dw.c;
    for (int j = 0; j < N; ++j) {
      const int jp = (j + 1) % N, jm = (j + N - 1) % N;
      const FirstPartials d = st.model().partials(dw.state.u(j), dw.state.w(j), alpha);
      T.emplace_back(j, jp, dk - c / (2 * h));
      T.emplace_back(j, jm, dk + c / (2 * h));
      T.emplace_back(j, j, -2 * dk + d.fu);
      T.emplace_back(j, N + j, d.fw);
      T.emplace_back(j, 2 * N, -(dw.state.u(jp) - dw.state.u(jm)) / (2 * h));
      T.emplace_back(N + j, N + jp, -c / (2 * h));
      T.emplace_back(N + j, N + jm, c / (2 * h));
      T.emplace_back(N + j, j, d.gu);
      T.emplace_back(N + j, N + j, d.gw);
      T.emplace_back(N + j, 2 * N, -(dw.state.w(jp) - dw.state.w(jm)) / (2 * h));
      T.emplace_back(2 * N, j, ref_du(j) * h);
    }
    Eigen::SparseMatrix<double> J(2 * N + 1, 2 * N + 1);
    J.setFromTriplets(T.begin(), T.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw NumericalError("discrete_steady_state: singular Jacobian");
    const Eigen::VectorXd dx = lu.solve(-R);
    dw.state.u += dx.head(N);
    dw.state.w += dx.segment(N, N);
    dw.c += dx(2 * N);
  }
  const Stepper s(st.model(), {alpha, dw.c}, st.grid());
  dw.residual = std::max(s.rhs(dw.state).u.cwiseAbs().maxCoeff(), s.rhs(dw.state).w.cwiseAbs().maxCoeff());
  if (dw.residual < tol) return dw;
  throw NumericalError("discrete_steady_state: Newton did not converge, residual " + std::to_string(dw.residual));
}

struct Snapshot {
  double t = 0.0;
  PdeState state;
};

struct GrowthFit {
  bool conclusive = false;
  double rate = 0.0;
  double r2 = 0.0;
  double t_begin = 0.0, t_end = 0.0;
  int points = 0;
  std::string note;
};

struct SimulationRun {
  Grid1D grid;
  double dt = 0.0;
  double T_end = 0.0;
  std::vector<Snapshot> snapshots;
  std::optional<PdeState> reference;  // wave profile the perturbation is measured against
  std::optional<GrowthFit> growth;
};

inline SimulationRun evolve(const Stepper& st, const PdeState& initial, double dt, double T_end,
                            double snapshot_every) {
  if (!(dt > 0) || !(T_end >= 0)) throw PreconditionError("evolve: need dt > 0 and T_end >= 0");
  const double dt_max = st.max_stable_dt(initial);
  if (dt > dt_max)
    throw PreconditionError("evolve: dt = " + std::to_string(dt) + " violates the CFL bound " + std::to_string(dt_max));
  const long steps = static_cast<long>(std::ceil(T_end / dt - 1e-9));
  const double dt_eff = steps > 0 ? T_end / steps : dt;
  const long every = std::max(1L, std::lround(snapshot_every / dt_eff));
  SimulationRun run;
  run.grid = st.grid();
  run.dt = dt_eff;
  run.T_end = T_end;
  PdeState s = initial;
  run.snapshots.push_back({0.0, s});
  for (long n = 1; n <= steps; ++n) {
    st.step(s, dt_eff);
    if (!s.u.allFinite() || !s.w.allFinite())
      throw NumericalError("evolve: non-finite state at t = " + std::to_string(n * dt_eff));
    if (n % every == 0 || n == steps) run.snapshots.push_back({n * dt_eff, s});
  }
  return run;
}

// Distance from a state to the set of continuous translates of a periodic reference profile,
// translates taken on the band-limited interpolant. Integer shifts come from one FFT
// cross-correlation, the fractional part from golden-section search on the trigonometric sum.
class TranslateDistance {
 public:
  TranslateDistance(const PdeState& ref, double h) : N_(static_cast<int>(ref.u.size())), h_(h) {
    ru_ = forward(ref.u);
    rw_ = forward(ref.w);
    ref_sq_ = ref.u.squaredNorm() + ref.w.squaredNorm();
  }

  double operator()(const PdeState& s, double* best_shift = nullptr) const {
    const std::vector<cplx> su = forward(s.u), sw = forward(s.w);
    std::vector<cplx> prod(N_);
    for (int k = 0; k < N_; ++k) prod[k] = std::conj(su[k]) * ru_[k] + std::conj(sw[k]) * rw_[k];
    std::vector<cplx> corr;
    fft_.inv(corr, prod);
    int m = 0;
    for (int k = 1; k < N_; ++k)
      if (corr[k].real() > corr[m].real()) m = k;
    // correlation at a fractional shift sigma (in cells)
    auto C = [&](double sigma) {
      double acc = 0;
      for (int k = 0; k < N_; ++k) {
        const int kt = k < N_ / 2 ? k : k - N_;
        if (2 * k == N_) {
          acc += prod[k].real() * std::cos(M_PI * sigma);
        } else {
          acc += (prod[k] * std::exp(cplx(0.0, 2.0 * M_PI * kt * sigma / N_))).real();
        }
      }
      return acc / N_;
    };
    double a = m - 1.0, b = m + 1.0;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a), f1 = C(x1), f2 = C(x2);
    for (int it = 0; it < 60 && b - a > 1e-10; ++it) {
      if (f1 > f2) {
        b = x2, x2 = x1, f2 = f1, x1 = b - gr * (b - a), f1 = C(x1);
      } else {
        a = x1, x1 = x2, f1 = f2, x2 = a + gr * (b - a), f2 = C(x2);
      }
    }
    double best = corr[m].real(), arg = m;
    if (f1 > best) best = f1, arg = x1;
    if (f2 > best) best = f2, arg = x2;
    if (best_shift) *best_shift = arg * h_;
    const double sq = s.u.squaredNorm() + s.w.squaredNorm() + ref_sq_ - 2.0 * best;
    return std::sqrt(std::max(0.0, h_ * sq));
  }

 private:
  std::vector<cplx> forward(const Eigen::VectorXd& v) const {
    std::vector<double> in(v.data(), v.data() + v.size());
    std::vector<cplx> out;
    fft_.fwd(out, in);
    out.resize(N_);  // the real transform may return only half the spectrum
    for (int k = N_ / 2 + 1; k < N_; ++k) out[k] = std::conj(out[N_ - k]);
    return out;
  }

  int N_;
  double h_;
  mutable Eigen::FFT<double> fft_;
  std::vector<cplx> ru_, rw_;
  double ref_sq_ = 0;
};

inline double translate_min_distance(const PdeState& s, const PdeState& reference, double h) {
  return TranslateDistance(reference, h)(s);
}

struct GrowthOptions {
  double band_lo = 1e-5, band_hi = 1e-2;
  bool translate_min = true;
};

// Reference profile: the run's discrete wave when present, else the orbit sampled on the grid.
inline std::vector<double> snapshot_distances(const SimulationRun& run, const PeriodicOrbit& orb,
                                              bool translate_min = true) {
  const PdeState ref = run.reference ? *run.reference : sample_orbit(orb, run.grid);
  const double h = run.grid.spacing();
  const TranslateDistance td(ref, h);
  std::vector<double> d;
  for (const Snapshot& sn : run.snapshots)
    d.push_back(translate_min ? td(sn.state) : l2_norm({sn.state.u - ref.u, sn.state.w - ref.w}, h));
  return d;
}

// Least-squares slope of log distance over the first contiguous run of snapshots inside the band.
inline GrowthFit measure_growth_rate(const SimulationRun& run, const PeriodicOrbit& orb, const GrowthOptions& o = {}) {
  const std::vector<double> d = snapshot_distances(run, orb, o.translate_min);
  GrowthFit fit;
  std::vector<double> t, ld;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const bool in = d[k] >= o.band_lo && d[k] <= o.band_hi;
    if (in) {
      t.push_back(run.snapshots[k].t);
      ld.push_back(std::log(d[k]));
    } else if (!t.empty()) {
      break;
    }
  }
  fit.points = static_cast<int>(t.size());
  if (t.size() < 3) {
    fit.note = "inconclusive: distance never spent three snapshots inside the fit band";
    return fit;
  }
  const LinearFit lf = linear_fit(t, ld);
  fit.conclusive = true;
  fit.rate = lf.slope;
  fit.r2 = lf.r2;
  fit.t_begin = t.front();
  fit.t_end = t.back();
  return fit;
}

// Initial perturbation shapes
inline PdeState normalized(PdeState p, double amplitude, double h) {
  const double n = l2_norm(p, h);
  if (!(n > 0)) throw PreconditionError("perturbation has zero norm");
  p.u *= amplitude / n;
  p.w *= amplitude / n;
  return p;
}

inline PdeState white_noise(const Grid1D& g, std::uint64_t seed) {
  CounterRng rng(seed, 0x5eed);
  PdeState p{Eigen::VectorXd(g.N), Eigen::VectorXd(g.N)};
  for (int j = 0; j < g.N; ++j) p.u(j) = rng.normal(), p.w(j) = rng.normal();
  return p;
}

}  // namespace fh
