#pragma once

// Dormand-Prince 5(4) with FSAL and the 4th-order continuous extension.
// State is any fixed-size Eigen vector or matrix, real or complex.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace fh {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_initial = 0.0;  // 0 selects a step automatically
  double h_max = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 2000000;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

template <class State>
struct DenseStep {
  double t0 = 0.0, h = 0.0;
  State r0, r1, r2, r3, r4;

  State operator()(double t) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    return r0 + s * (r1 + s1 * (r2 + s * (r3 + s1 * r4)));
  }
};

namespace dp5 {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp5

namespace detail {

template <class State>
double scaled_rms(const State& e, const State& y0, const State& y1, const OdeOptions& o) {
  auto sk = o.atol + o.rtol * y0.array().abs().max(y1.array().abs());
  return std::sqrt((e.array().abs() / sk).square().mean());
}

template <class State>
bool all_finite(const State& y) {
  return y.array().abs().isFinite().all();
}

template <class State, class Rhs>
double initial_step(Rhs& f, double t0, const State& y0, const State& f0, double span,
                    const OdeOptions& o, OdeStats& st) {
  auto sk = (o.atol + o.rtol * y0.array().abs()).eval();
  const double d0 = std::sqrt((y0.array().abs() / sk).square().mean());
  const double d1 = std::sqrt((f0.array().abs() / sk).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  State y1 = y0 + h0 * f0;
  State f1 = f(t0 + h0, y1);
  ++st.evaluations;
  const double d2 = std::sqrt(((f1 - f0).array().abs() / sk).square().mean()) / h0;
  const double dm = std::max(d1, d2);
  double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  return std::min({100.0 * h0, h1, span, o.h_max});
}

}  // namespace detail

// Integrates y' = f(t, y) from t0 to t1 > t0. on_step(const DenseStep&) sees every
// accepted step and can sample the continuous extension inside it.
template <class State, class Rhs, class OnStep>
State integrate(Rhs&& f, double t0, const State& y0, double t1, const OdeOptions& opt,
                OnStep&& on_step, OdeStats* stats = nullptr) {
  using namespace dp5;
  OdeStats st;
  if (!(t1 >= t0)) throw PreconditionError("integrate: t1 must not precede t0");
  if (t1 == t0) return y0;
  if (!detail::all_finite(y0)) throw NumericalError("integrate: non-finite initial state");

  double t = t0;
  State y = y0;
  State k1 = f(t, y);
  ++st.evaluations;
  double h = opt.h_initial > 0 ? opt.h_initial
                               : detail::initial_step(f, t0, y0, k1, t1 - t0, opt, st);
  bool last_rejected = false;
  DenseStep<State> ds;

  while (t < t1) {
    if (st.accepted + st.rejected >= opt.max_steps)
      throw NumericalError("integrate: step budget exhausted at t = " + std::to_string(t));
    bool final_step = false;
    if (t + h >= t1) {
      h = t1 - t;
      final_step = true;
    }
    State k2 = f(t + c2 * h, State(y + h * a21 * k1));
    State k3 = f(t + c3 * h, State(y + h * (a31 * k1 + a32 * k2)));
    State k4 = f(t + c4 * h, State(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    State k5 = f(t + c5 * h, State(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    State k6 = f(t + h, State(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    State y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    State k7 = f(t + h, y1);
    st.evaluations += 6;
    State e = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = detail::all_finite(y1) && detail::all_finite(k7)
                     ? detail::scaled_rms(e, y, y1, opt)
                     : std::numeric_limits<double>::infinity();
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      ++st.accepted;
      ds.t0 = t;
      ds.h = h;
      ds.r0 = y;
      ds.r1 = y1 - y;
      ds.r2 = h * k1 - ds.r1;
      ds.r3 = ds.r1 - h * k7 - ds.r2;
      ds.r4 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      on_step(static_cast<const DenseStep<State>&>(ds));
      t = final_step ? t1 : t + h;
      y = y1;
      k1 = k7;
      double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      h = std::min(h * fac, opt.h_max);
      last_rejected = false;
    } else {
      ++st.rejected;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      last_rejected = true;
      if (h < 1e-14 * std::max(1.0, std::abs(t)))
        throw NumericalError("integrate: step size underflow at t = " + std::to_string(t));
    }
  }
  if (stats) *stats = st;
  return y;
}

template <class State, class Rhs>
State integrate(Rhs&& f, double t0, const State& y0, double t1, const OdeOptions& opt,
                OdeStats* stats = nullptr) {
  return integrate(std::forward<Rhs>(f), t0, y0, t1, opt, [](const DenseStep<State>&) {},
                   stats);
}

// States at sorted times inside [t0, t1]; times equal to t1 receive the endpoint.
template <class State, class Rhs>
std::vector<State> integrate_sampled(Rhs&& f, double t0, const State& y0, double t1,
                                     const std::vector<double>& times, const OdeOptions& opt,
                                     State* final_state = nullptr) {
  std::vector<State> out;
  out.reserve(times.size());
  std::size_t next = 0;
  while (next < times.size() && times[next] <= t0) {
    out.push_back(y0);
    ++next;
  }
  State yend = integrate(
      std::forward<Rhs>(f), t0, y0, t1, opt,
      [&](const DenseStep<State>& ds) {
        const double tend = ds.t0 + ds.h;
        while (next < times.size() && times[next] < tend) {
          out.push_back(ds(times[next]));
          ++next;
        }
      });
  while (next < times.size()) {
    out.push_back(yend);
    ++next;
  }
  if (final_state) *final_state = yend;
  return out;
}

}  // namespace fh
