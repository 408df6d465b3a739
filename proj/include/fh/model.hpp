#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace fh {

using ParamSpan = std::span<const double>;
using ReactionFn = std::function<double(double u, double w, ParamSpan alpha)>;

struct FirstPartials {
  double fu = 0, fw = 0, gu = 0, gw = 0;
};

// Second derivatives in (u, w) plus mixed derivatives against each parameter.
struct SecondPartials {
  double fuu = 0, fuw = 0, fww = 0;
  double guu = 0, guw = 0, gww = 0;
  std::vector<double> fu_a, fw_a, gu_a, gw_a;
};

struct ModelDefinition {
  std::string name;
  ReactionFn f, g;
  std::function<FirstPartials(double, double, ParamSpan)> first;
  std::function<SecondPartials(double, double, ParamSpan)> second;  // optional
  double diff_coeff = 1.0;
  std::vector<std::string> param_names;

  std::size_t param_dim() const { return param_names.size(); }
  bool reduced_accuracy() const { return !second; }

  FirstPartials partials(double u, double w, ParamSpan a) const {
    if (first) return first(u, w, a);
    // central differences of f, g
    const double hu = 1e-6 * std::max(1.0, std::abs(u));
    const double hw = 1e-6 * std::max(1.0, std::abs(w));
    FirstPartials p;
    p.fu = (f(u + hu, w, a) - f(u - hu, w, a)) / (2 * hu);
    p.fw = (f(u, w + hw, a) - f(u, w - hw, a)) / (2 * hw);
    p.gu = (g(u + hu, w, a) - g(u - hu, w, a)) / (2 * hu);
    p.gw = (g(u, w + hw, a) - g(u, w - hw, a)) / (2 * hw);
    return p;
  }

  // Analytic when supplied, otherwise central differences of the first partials.
  SecondPartials second_partials(double u, double w, ParamSpan a) const {
    if (second) return second(u, w, a);
    const double hu = 1e-5 * std::max(1.0, std::abs(u));
    const double hw = 1e-5 * std::max(1.0, std::abs(w));
    SecondPartials s;
    FirstPartials up = partials(u + hu, w, a), um = partials(u - hu, w, a);
    FirstPartials wp = partials(u, w + hw, a), wm = partials(u, w - hw, a);
    s.fuu = (up.fu - um.fu) / (2 * hu);
    s.fuw = (wp.fu - wm.fu) / (2 * hw);
    s.fww = (wp.fw - wm.fw) / (2 * hw);
    s.guu = (up.gu - um.gu) / (2 * hu);
    s.guw = (wp.gu - wm.gu) / (2 * hw);
    s.gww = (wp.gw - wm.gw) / (2 * hw);
    std::vector<double> ap(a.begin(), a.end());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double ha = 1e-5 * std::max(1.0, std::abs(a[k]));
      ap[k] = a[k] + ha;
      FirstPartials pp = partials(u, w, ap);
      ap[k] = a[k] - ha;
      FirstPartials pm = partials(u, w, ap);
      ap[k] = a[k];
      s.fu_a.push_back((pp.fu - pm.fu) / (2 * ha));
      s.fw_a.push_back((pp.fw - pm.fw) / (2 * ha));
      s.gu_a.push_back((pp.gu - pm.gu) / (2 * ha));
      s.gw_a.push_back((pp.gw - pm.gw) / (2 * ha));
    }
    return s;
  }
};

struct WaveParameters {
  std::vector<double> alpha;
  double c = 0.0;
};

struct StatePoint {
  double u = 0, v = 0, w = 0;
  Vec3 vec() const { return Vec3(u, v, w); }
  static StatePoint from(const Vec3& y) { return {y(0), y(1), y(2)}; }
};

struct CanonicalForm {
  ModelDefinition model;
  WaveParameters params;
  double scale_factor = 1.0;
};

// xi -> xi / sqrt(d): diffusion becomes 1, speed becomes c / sqrt(d).
inline CanonicalForm canonical_rescale(const ModelDefinition& model, const WaveParameters& params) {
  if (!(model.diff_coeff > 0))
    throw PreconditionError("canonical_rescale: diffusion constant must be positive");
  const double s = std::sqrt(model.diff_coeff);
  CanonicalForm out{model, params, s};
  out.model.diff_coeff = 1.0;
  out.params.c = params.c / s;
  return out;
}

inline void require_speed(const WaveParameters& p) {
  if (p.c == 0.0) throw PreconditionError("wave speed c must be nonzero");
}

// (v, (c v - f)/d, g/c); d = 1 in the canonical form.
inline Vec3 tw_vector_field(const ModelDefinition& m, const WaveParameters& p, const Vec3& y) {
  require_speed(p);
  const double f = m.f(y(0), y(2), p.alpha);
  const double g = m.g(y(0), y(2), p.alpha);
  return Vec3(y(1), (p.c * y(1) - f) / m.diff_coeff, g / p.c);
}

inline Mat3 tw_jacobian(const ModelDefinition& m, const WaveParameters& p, const Vec3& y) {
  require_speed(p);
  const FirstPartials d = m.partials(y(0), y(2), p.alpha);
  const double dc = m.diff_coeff;
  Mat3 J;
  J << 0.0, 1.0, 0.0,
       -d.fu / dc, p.c / dc, -d.fw / dc,
       d.gu / p.c, 0.0, d.gw / p.c;
  return J;
}

inline Mat3 tw_jacobian_fd(const ModelDefinition& m, const WaveParameters& p, const Vec3& y,
                           double h = 1e-6) {
  Mat3 J;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e(k) = h * std::max(1.0, std::abs(y(k)));
    J.col(k) = (tw_vector_field(m, p, y + e) - tw_vector_field(m, p, y - e)) / (2 * e(k));
  }
  return J;
}

namespace fhn {

inline constexpr double alpha = 0.1;
inline constexpr double diffusion = 5.0;
inline constexpr double delta = 0.01;
inline constexpr int GAMMA = 0;
inline constexpr int P = 1;

inline double h(double u) { return u * (u - 1.0) * (alpha - u); }
inline double dh(double u) { return -3.0 * u * u + 2.0 * (1.0 + alpha) * u - alpha; }
inline double d2h(double u) { return -6.0 * u + 2.0 * (1.0 + alpha); }
// g(u, gamma) = u/gamma - h(u); equilibria satisfy g(u, gamma) = p.
inline double gfun(double u, double gamma) { return u / gamma - h(u); }
inline double gfun_u(double u, double gamma) { return 1.0 / gamma - dh(u); }

}  // namespace fhn

inline ModelDefinition builtin_fhn() {
  ModelDefinition m;
  m.name = "fhn";
  m.diff_coeff = fhn::diffusion;
  m.param_names = {"gamma", "p"};
  m.f = [](double u, double w, ParamSpan a) { return fhn::h(u) - w + a[fhn::P]; };
  m.g = [](double u, double w, ParamSpan a) { return fhn::delta * (u - a[fhn::GAMMA] * w); };
  m.first = [](double u, double, ParamSpan a) {
    return FirstPartials{fhn::dh(u), -1.0, fhn::delta, -fhn::delta * a[fhn::GAMMA]};
  };
  m.second = [](double u, double, ParamSpan) {
    SecondPartials s;
    s.fuu = fhn::d2h(u);
    s.fu_a = {0.0, 0.0};
    s.fw_a = {0.0, 0.0};
    s.gu_a = {0.0, 0.0};
    s.gw_a = {-fhn::delta, 0.0};
    return s;
  };
  return m;
}

using ModelFactory = std::function<ModelDefinition()>;

// Name -> factory. Users add models through register_model before running the CLI.
inline std::map<std::string, ModelFactory>& model_registry() {
  static std::map<std::string, ModelFactory> reg{{"fhn", builtin_fhn}};
  return reg;
}

inline void register_model(const std::string& name, ModelFactory factory) {
  model_registry()[name] = std::move(factory);
}

inline ModelDefinition make_model(const std::string& name) {
  auto& reg = model_registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw PreconditionError("unknown model '" + name + "'");
  return it->second();
}

// Largest relative mismatch between supplied first partials and central differences
// of f, g at one point. Relative to max(1, |value|) so vanishing partials do not blow up.
inline double derivative_mismatch(const ModelDefinition& m, double u, double w, ParamSpan a) {
  if (!m.first) return 0.0;
  const FirstPartials an = m.first(u, w, a);
  ModelDefinition bare = m;
  bare.first = nullptr;
  const FirstPartials fd = bare.partials(u, w, a);
  auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(x)); };
  return std::max({rel(an.fu, fd.fu), rel(an.fw, fd.fw), rel(an.gu, fd.gu), rel(an.gw, fd.gw)});
}

}  // namespace fh
