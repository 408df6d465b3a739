#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "averaging.hpp"
#include "equilibria.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "ode.hpp"

namespace fh {

struct PeriodicOrbit {
  ModelDefinition model;
  double epsilon = 0.0;
  WaveParameters params;
  Vec3 base_point = Vec3::Zero();  // P(eps) of the unfolding path
  double period = 0.0;
  std::vector<Vec3> samples;       // at xi_k = k * period / N, k < N
  std::vector<Vec3> derivs;
  double shooting_residual = 0.0;
  double closure_residual = 0.0;
  double phase_residual = 0.0;
  int newton_iterations = 0;
  bool free_speed = false;         // c was solved for by the fallback
  Mat3 monodromy = Mat3::Identity();
  std::array<cplx, 3> floquet{};

  std::size_t size() const { return samples.size(); }
  double spacing() const { return period / static_cast<double>(samples.size()); }

  // Periodic cubic Hermite interpolation of the stored samples and derivatives.
  Vec3 state_at(double xi) const {
    const double hs = spacing();
    double t = std::fmod(xi, period);
    if (t < 0) t += period;
    std::size_t k = static_cast<std::size_t>(t / hs);
    if (k >= size()) k = size() - 1;
    const double s = (t - k * hs) / hs;
    const std::size_t k1 = (k + 1) % size();
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * samples[k] + (s3 - 2 * s2 + s) * hs * derivs[k] +
           (-2 * s3 + 3 * s2) * samples[k1] + (s3 - s2) * hs * derivs[k1];
  }

  double amplitude() const {
    double a = 0.0;
    for (const Vec3& y : samples) a = std::max(a, (y - base_point).norm());
    return a;
  }
};

// Rebuilds the interpolation data from samples (e.g. read back from CSV).
inline void refresh_derivatives(PeriodicOrbit& orb) {
  orb.derivs.resize(orb.samples.size());
  for (std::size_t k = 0; k < orb.samples.size(); ++k)
    orb.derivs[k] = tw_vector_field(orb.model, orb.params, orb.samples[k]);
}

struct OrbitGuess {
  Vec3 state = Vec3::Zero();
  double period = 0.0;
};

inline OrbitGuess predict_initial_orbit(const FoldHopfPoint& fh, const AveragedSystem& avg,
                                        const UnfoldingPath& path, double eps) {
  if (eps < 0) throw PreconditionError("predict_initial_orbit: eps must be nonnegative");
  const Vec3 y(avg.zero(0), 0.0, avg.zero(1));
  return {path.base_point(fh, eps) + eps * (avg.Q * y), 2.0 * M_PI / fh.mu0};
}

struct ShootOptions {
  OdeOptions ode;          // 1e-12 absolute / 1e-10 relative by default
  int max_iter = 30;
  double tol = 1e-11;      // on the closure + phase residual
  double min_period = 0.0; // period collapse guard; continuation passes 0.1 * 2 pi / mu0
  int samples = 1024;
  double epsilon = 0.0;
  Vec3 base_point = Vec3::Zero();
  bool allow_free_speed = true;
};

namespace detail {

using Aug = Eigen::Matrix<double, 3, 4>;  // state plus 3x3 variational block

inline Aug flow_with_variations(const ModelDefinition& m, const WaveParameters& p, const Vec3& y0,
                                double T, const OdeOptions& o) {
  Aug z;
  z.col(0) = y0;
  z.rightCols<3>() = Mat3::Identity();
  auto rhs = [&](double, const Aug& s) -> Aug {
    Aug d;
    const Vec3 y = s.col(0);
    d.col(0) = tw_vector_field(m, p, y);
    d.rightCols<3>() = tw_jacobian(m, p, y) * s.rightCols<3>();
    return d;
  };
  return integrate(rhs, 0.0, z, T, o);
}

inline Vec3 flow(const ModelDefinition& m, const WaveParameters& p, const Vec3& y0, double T,
                 const OdeOptions& o) {
  auto rhs = [&](double, const Vec3& y) -> Vec3 { return tw_vector_field(m, p, y); };
  return integrate(rhs, 0.0, y0, T, o);
}

}  // namespace detail

// Samples, monodromy, Floquet data and residuals for a converged (Y0, T).
inline PeriodicOrbit finalize_orbit(const ModelDefinition& m, const WaveParameters& p, const Vec3& y0,
                                    double T, const Vec3& pred, const ShootOptions& opt) {
  PeriodicOrbit orb;
  orb.model = m;
  orb.params = p;
  orb.epsilon = opt.epsilon;
  orb.base_point = opt.base_point;
  orb.period = T;
  std::vector<double> times(opt.samples);
  for (int k = 0; k < opt.samples; ++k) times[k] = T * k / opt.samples;
  auto rhs = [&](double, const Vec3& y) -> Vec3 { return tw_vector_field(m, p, y); };
  Vec3 yT;
  orb.samples = integrate_sampled(rhs, 0.0, y0, T, times, opt.ode, &yT);
  orb.samples[0] = y0;
  refresh_derivatives(orb);
  orb.closure_residual = (yT - y0).cwiseAbs().maxCoeff();
  const Vec3 fp = tw_vector_field(m, p, pred);
  orb.phase_residual = std::abs(fp.dot(y0 - pred));
  orb.monodromy = detail::flow_with_variations(m, p, y0, T, opt.ode).rightCols<3>();
  orb.floquet = eigenvalues_3x3(orb.monodromy);
  return orb;
}

// Newton on (Phi_T(Y0) - Y0, <X(Y_pred), Y0 - Y_pred>) in the four unknowns (Y0, T).
inline PeriodicOrbit shoot_periodic(const ModelDefinition& m, const WaveParameters& p, const OrbitGuess& guess,
                                    const ShootOptions& opt = {});

// Fallback: c becomes a fifth unknown, closed by fixing |Y0 - base| to its predicted value.
inline PeriodicOrbit shoot_periodic_free_speed(const ModelDefinition& m, const WaveParameters& p,
                                               const OrbitGuess& guess, const ShootOptions& opt = {}) {
  using Vec5 = Eigen::Matrix<double, 5, 1>;
  using Mat5 = Eigen::Matrix<double, 5, 5>;
  const Vec3 pred = guess.state;
  const double anchor = (pred - opt.base_point).squaredNorm();
  Vec3 y0 = guess.state;
  double T = guess.period;
  WaveParameters q = p;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Vec3 fp = tw_vector_field(m, q, pred);
    const detail::Aug z = detail::flow_with_variations(m, q, y0, T, opt.ode);
    Vec5 F;
    F.head<3>() = z.col(0) - y0;
    F(3) = fp.dot(y0 - pred);
    F(4) = (y0 - opt.base_point).squaredNorm() - anchor;
    if (F.cwiseAbs().maxCoeff() <= opt.tol) {
      PeriodicOrbit orb = finalize_orbit(m, q, y0, T, pred, opt);
      orb.shooting_residual = F.cwiseAbs().maxCoeff();
      orb.newton_iterations = it - 1;
      orb.free_speed = true;
      return orb;
    }
    const double hc = 1e-7 * std::max(1.0, std::abs(q.c));
    WaveParameters qp = q, qm = q;
    qp.c += hc;
    qm.c -= hc;
    const Vec3 dc = (detail::flow(m, qp, y0, T, opt.ode) - detail::flow(m, qm, y0, T, opt.ode)) / (2 * hc);
    Mat5 DF = Mat5::Zero();
    DF.topLeftCorner<3, 3>() = z.rightCols<3>() - Mat3::Identity();
    DF.block<3, 1>(0, 3) = tw_vector_field(m, q, z.col(0));
    DF.block<3, 1>(0, 4) = dc;
    DF.block<1, 3>(3, 0) = fp.transpose();
    DF.block<1, 3>(4, 0) = 2.0 * (y0 - opt.base_point).transpose();
    const Vec5 dz = DF.fullPivLu().solve(-F);
    y0 += dz.head<3>();
    T += dz(3);
    q.c += dz(4);
    if (!(T > opt.min_period)) throw NumericalError("shooting: period collapse (free-speed fallback)");
  }
  throw NumericalError("shooting: free-speed fallback stagnated after " + std::to_string(opt.max_iter) +
                       " iterations");
}

inline PeriodicOrbit shoot_periodic(const ModelDefinition& m, const WaveParameters& p, const OrbitGuess& guess,
                                    const ShootOptions& opt) {
  using Vec4 = Eigen::Vector4d;
  using Mat4 = Eigen::Matrix4d;
  require_speed(p);
  const Vec3 pred = guess.state;
  const Vec3 fp = tw_vector_field(m, p, pred);
  Vec3 y0 = guess.state;
  double T = guess.period;
  double last = 1e300;
  int stalls = 0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const detail::Aug z = detail::flow_with_variations(m, p, y0, T, opt.ode);
    Vec4 F;
    F.head<3>() = z.col(0) - y0;
    F(3) = fp.dot(y0 - pred);
    const double res = F.cwiseAbs().maxCoeff();
    if (res <= opt.tol) {
      PeriodicOrbit orb = finalize_orbit(m, p, y0, T, pred, opt);
      orb.shooting_residual = res;
      orb.newton_iterations = it - 1;
      return orb;
    }
    // residual stuck above tolerance for several steps: stagnation
    stalls = res > 0.5 * last ? stalls + 1 : 0;
    last = res;
    if (stalls >= 5) break;
    Mat4 DF = Mat4::Zero();
    DF.topLeftCorner<3, 3>() = z.rightCols<3>() - Mat3::Identity();
    DF.block<3, 1>(0, 3) = tw_vector_field(m, p, z.col(0));
    DF.block<1, 3>(3, 0) = fp.transpose();
    const Vec4 dz = DF.fullPivLu().solve(-F);
    y0 += dz.head<3>();
    T += dz(3);
    if (!(T > opt.min_period)) throw NumericalError("shooting: period collapse (T = " + std::to_string(T) + ")");
  }
  if (opt.allow_free_speed) return shoot_periodic_free_speed(m, p, guess, opt);
  throw NumericalError("shooting: Newton stagnation after " + std::to_string(opt.max_iter) + " iterations");
}

inline std::array<cplx, 3> floquet_multipliers(const PeriodicOrbit& orb) { return orb.floquet; }

// exp of the trapezoid integral of trace J over one period (Abel/Liouville).
inline double liouville_exponential(const PeriodicOrbit& orb) {
  double acc = 0.0;
  for (const Vec3& y : orb.samples) acc += tw_jacobian(orb.model, orb.params, y).trace();
  return std::exp(acc * orb.spacing());
}

inline double liouville_mismatch(const PeriodicOrbit& orb) {
  const double expect = liouville_exponential(orb);
  return std::abs(orb.monodromy.determinant() - expect) / std::abs(expect);
}

inline double trivial_multiplier_distance(const PeriodicOrbit& orb) {
  double best = 1e300;
  for (const cplx& z : orb.floquet) best = std::min(best, std::abs(z - 1.0));
  return best;
}

struct ContinuationResult {
  std::vector<PeriodicOrbit> orbits;
  std::optional<double> failed_epsilon;
  std::string failure;
};

inline ContinuationResult continue_in_epsilon(const ModelDefinition& m, const FoldHopfPoint& fh,
                                              const AveragedSystem& avg, const UnfoldingPath& path,
                                              const std::vector<double>& eps_list, ShootOptions opt = {}) {
  ContinuationResult out;
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double eps = eps_list[i];
    if (!(eps > 0) || (i && !(eps > eps_list[i - 1])))
      throw PreconditionError("continue_in_epsilon: eps values must be positive and increasing");
    OrbitGuess g;
    if (out.orbits.empty()) {
      g = predict_initial_orbit(fh, avg, path, eps);
    } else {
      const PeriodicOrbit& prev = out.orbits.back();
      const double ratio = eps / prev.epsilon;
      const double T0 = 2.0 * M_PI / fh.mu0;
      g.state = path.base_point(fh, eps) + ratio * (prev.samples[0] - prev.base_point);
      g.period = T0 + ratio * (prev.period - T0);
    }
    opt.epsilon = eps;
    opt.base_point = path.base_point(fh, eps);
    opt.min_period = 0.1 * 2.0 * M_PI / fh.mu0;
    try {
      out.orbits.push_back(shoot_periodic(m, path.params_at(fh, eps), g, opt));
    } catch (const NumericalError& e) {
      out.failed_epsilon = eps;
      out.failure = e.what();
      break;
    }
  }
  return out;
}

}  // namespace fh
