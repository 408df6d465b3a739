#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "averaging.hpp"
#include "bounds.hpp"
#include "config.hpp"
#include "equilibria.hpp"
#include "errors.hpp"
#include "log.hpp"
#include "orbits.hpp"
#include "pdesim.hpp"
#include "report.hpp"
#include "spectrum.hpp"
#include "stats.hpp"

#ifndef FH_VERSION
#define FH_VERSION "0.0.0"
#endif

namespace fh {

namespace fs = std::filesystem;

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> s{"find", "average", "orbit", "spectrum", "bounds", "simulate"};
  return s;
}

// A numerical failure inside a stage; the stage name goes to the diagnostic stream.
struct StageFailure : Error {
  std::string stage;
  StageFailure(std::string st, const std::string& msg) : Error(msg), stage(std::move(st)) {}
};

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path out;

  explicit Context(RunConfig c) : cfg(std::move(c)), hash(config_hash(cfg)), out(cfg.out) {}
  fs::path file(const std::string& name) const { return out / name; }
};

inline ojson stage_header(const Context& ctx, const std::string& stage) {
  return ojson{{"stage", stage}, {"tool_version", FH_VERSION}, {"config_hash", ctx.hash}, {"seed", ctx.cfg.seed}};
}

inline ojson skipped_stage(const Context& ctx, const std::string& stage, const std::string& reason) {
  ojson j = stage_header(ctx, stage);
  j["status"] = "skipped";
  j["reason"] = reason;
  return j;
}

inline bool is_skipped(const ojson& j) { return j.value("status", "") == "skipped"; }

// Prior-stage artifact, produced by this very configuration.
inline ojson require_stage(const Context& ctx, const std::string& stage) {
  const fs::path p = ctx.file(stage + ".json");
  if (!fs::exists(p))
    throw MissingArtifact("missing artifact " + p.string() + "; run the '" + stage + "' stage first", stage);
  ojson j = read_json(p);
  if (j.value("config_hash", "") != ctx.hash)
    throw MissingArtifact(p.string() + " was produced by a different configuration; rerun the '" + stage + "' stage",
                          stage);
  if (j.value("status", "") == "failed")
    throw MissingArtifact("the '" + stage + "' stage failed earlier; rerun it", stage);
  return j;
}

inline std::string eps_tag(double eps) { return fmt::format("{:g}", eps); }

inline bool same_eps(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); }

// ------------------------------------------------------------------ problem setup

struct Problem {
  ModelDefinition model;  // canonical, d = 1
  FoldHopfPoint fh;
  UnfoldingPath path;
  Mat3 frame;             // transform the averaged zero lives in
};

inline Problem problem_from_find(const Context& ctx, const ojson& find) {
  const RunConfig& c = ctx.cfg;
  const ojson& pt = find.at("points").at(find.at("selected").get<std::size_t>());
  Problem pb;
  if (c.is_fhn()) {
    const FhnLocusPoint lp =
        fhn_locus_point(pt.at("gamma").get<double>(), pt.at("u0").get<double>(), pt.at("branch").get<int>());
    pb.model = fhn_canonical_model();
    pb.fh = fhn_fold_hopf_point(lp);
    pb.path = fhn_tracking_path(pb.fh, parse_number(c.gamma1).value);
    pb.frame = fhn_transform(pb.fh);
  } else {
    const CanonicalForm cf = canonical_rescale(make_model(c.model), {c.alpha0, c.c0});
    pb.model = cf.model;
    const Equilibrium eq = make_equilibrium(cf.model, cf.params, pt.at("u").get<double>(), pt.at("w").get<double>());
    const Classification cl = classify_fold_hopf(cf.model, eq, cf.params, 1e-9, cf.scale_factor);
    if (!cl.point) throw NumericalError("selected equilibrium no longer classifies as fold-Hopf: " + cl.note);
    pb.fh = *cl.point;
    pb.path.alpha1 = c.alpha1;
    pb.path.c1 = c.c1 / cf.scale_factor;
    pb.frame = pb.fh.Q;
  }
  return pb;
}

inline PeriodicOrbit load_orbit(const Context& ctx, const ojson& e, const ModelDefinition& model) {
  PeriodicOrbit orb;
  orb.model = model;
  orb.epsilon = e.at("epsilon").get<double>();
  orb.params = {vec_from_json(e.at("alpha")), e.at("c").get<double>()};
  orb.base_point = vec3_from_json(e.at("base_point"));
  orb.period = e.at("period").get<double>();
  for (const auto& r : read_csv(ctx.file(e.at("csv").get<std::string>()))) {
    if (r.size() != 4) throw Error("orbit CSV rows need 4 columns");
    orb.samples.emplace_back(r[1], r[2], r[3]);
  }
  if (orb.samples.empty()) throw Error("orbit CSV is empty");
  refresh_derivatives(orb);
  orb.shooting_residual = e.at("residuals").at("shooting").get<double>();
  orb.closure_residual = e.at("residuals").at("closure").get<double>();
  orb.phase_residual = e.at("residuals").at("phase").get<double>();
  orb.newton_iterations = e.at("newton_iterations").get<int>();
  orb.free_speed = e.at("free_speed").get<bool>();
  orb.monodromy = mat3_from_json(e.at("monodromy"));
  orb.floquet = eigenvalues_3x3(orb.monodromy);
  return orb;
}

inline const ojson* orbit_entry(const ojson& orbitj, double eps) {
  for (const auto& e : orbitj.at("orbits"))
    if (same_eps(e.at("epsilon").get<double>(), eps)) return &e;
  return nullptr;
}

// Requested eps values split into those with an orbit and those without.
inline std::pair<std::vector<const ojson*>, std::vector<double>> select_orbits(
    const ojson& orbitj, const std::optional<std::vector<double>>& wanted) {
  std::vector<const ojson*> have;
  std::vector<double> missing;
  if (!wanted) {
    for (const auto& e : orbitj.at("orbits")) have.push_back(&e);
    return {have, missing};
  }
  for (double eps : *wanted) {
    if (const ojson* e = orbit_entry(orbitj, eps)) have.push_back(e);
    else missing.push_back(eps);
  }
  return {have, missing};
}

inline ojson fit_json(const LinearFit& f) {
  return ojson{{"slope", num(f.slope)},         {"intercept", num(f.intercept)}, {"slope_se", num(f.slope_se)},
               {"intercept_se", num(f.intercept_se)}, {"r2", num(f.r2)},        {"points", f.n}};
}

inline ojson eigen_json(const std::vector<EigenvalueEstimate>& ev) {
  ojson a = ojson::array();
  for (const auto& e : ev)
    a.push_back({{"value", to_json(e.value)}, {"multiplicity", e.multiplicity}, {"residual", num(e.residual)}});
  return a;
}

inline ojson roots_json(const std::array<cplx, 3>& r) {
  std::array<cplx, 3> s = r;
  std::sort(s.begin(), s.end(), complex_less);
  ojson a = ojson::array();
  for (const cplx& z : s) a.push_back(to_json(z));
  return a;
}

// ------------------------------------------------------------------ find

inline ojson fhn_point_json(const FhnLocusPoint& lp, const std::optional<FhnExactLocusPoint>& ex) {
  ojson p;
  p["branch"] = lp.branch;
  p["gamma"] = num(lp.gamma);
  p["u0"] = num(lp.u0);
  p["v0"] = 0.0;
  p["w0"] = num(lp.w0);
  p["p0"] = num(lp.p0);
  if (ex)
    p["exact"] = {{"u0", to_string(ex->u0)}, {"v0", "0"}, {"w0", to_string(ex->w0)}, {"p0", to_string(ex->p0)}};
  else
    p["exact"] = nullptr;
  p["c0"] = num(lp.c0);
  p["mu0"] = num(lp.mu0);
  p["c0_canonical"] = num(lp.c0_canonical);
  p["mu0_canonical"] = num(lp.mu0_canonical);
  // Jacobian of the original (d = 5) traveling-wave system
  const Mat3 J = tw_jacobian(builtin_fhn(), {{lp.gamma, lp.p0}, lp.c0}, Vec3(lp.u0, 0.0, lp.w0));
  const auto ev = eigenvalues_3x3(J);
  p["eigenvalues"] = roots_json(ev);
  p["eigenvalue_error"] = num(max_set_distance(ev, {cplx(0.0), cplx(0.0, lp.mu0), cplx(0.0, -lp.mu0)}));
  const FoldHopfPoint fh = fhn_fold_hopf_point(lp);
  p["condition_residuals"] = to_json(std::vector<double>{fh.cond_residuals[0], fh.cond_residuals[1]});
  return p;
}

inline ojson stage_find(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  ojson j = stage_header(ctx, "find");
  j["status"] = "ok";
  ojson points = ojson::array();
  std::optional<std::size_t> selected;
  if (c.is_fhn()) {
    j["inputs"] = {{"model", c.model}, {"gamma0", c.gamma0}, {"branch", c.branch}};
    std::vector<FhnLocusPoint> loc;
    std::vector<std::optional<FhnExactLocusPoint>> exact;
    if (c.gamma0 == "auto") {
      // locus table over the admissible gamma range; continue from the middle entry of the branch
      const double lo = kGammaFold.value(), hi = kGammaHopfEnd.value();
      for (int k = 0; k < 12; ++k)
        for (const auto& lp : fhn_fold_hopf_locus(lo + (hi - lo) * (k + 0.5) / 12.0)) {
          loc.push_back(lp);
          exact.emplace_back();
        }
      std::vector<std::size_t> on_branch;
      for (std::size_t i = 0; i < loc.size(); ++i)
        if (loc[i].branch == c.branch) on_branch.push_back(i);
      if (!on_branch.empty()) selected = on_branch[on_branch.size() / 2];
    } else {
      const ExactNumber g = parse_number(c.gamma0);
      loc = fhn_fold_hopf_locus(g);
      std::vector<FhnExactLocusPoint> ex;
      if (g.exact) ex = fhn_exact_locus(*g.exact);
      for (std::size_t i = 0; i < loc.size(); ++i) {
        exact.push_back(i < ex.size() ? std::optional(ex[i]) : std::nullopt);
        if (!selected && loc[i].branch == c.branch) selected = i;
      }
      j["gamma"] = {{"value", num(g.value)}, {"exact", g.exact ? ojson(to_string(*g.exact)) : ojson(nullptr)}};
    }
    for (std::size_t i = 0; i < loc.size(); ++i) points.push_back(fhn_point_json(loc[i], exact[i]));
  } else {
    j["inputs"] = {{"model", c.model}, {"alpha0", to_json(c.alpha0)}, {"c0", num(c.c0)}, {"branch", c.branch}};
    const CanonicalForm cf = canonical_rescale(make_model(c.model), {c.alpha0, c.c0});
    int classified = 0;
    for (const Equilibrium& eq : find_equilibria(cf.model, cf.params, SearchBox{})) {
      ojson p{{"u", num(eq.point(0))}, {"v", 0.0}, {"w", num(eq.point(2))}, {"residual", num(eq.residual)}};
      p["eigenvalues"] = roots_json(eq.eigenvalues);
      const Classification cl = classify_fold_hopf(cf.model, eq, cf.params, 1e-9, cf.scale_factor);
      p["fold_hopf"] = cl.point.has_value();
      p["note"] = cl.note;
      if (cl.point) {
        p["mu0_canonical"] = num(cl.point->mu0);
        p["mu0"] = num(cl.point->mu0_original());
        if (++classified == c.branch) selected = points.size();
      }
      points.push_back(p);
    }
  }
  j["points"] = points;
  j["selected"] = selected ? ojson(*selected) : ojson(nullptr);
  if (points.empty() || (!c.is_fhn() && !selected))
    j["finding"] = "no fold-Hopf point";
  else if (!selected)
    j["finding"] = "no fold-Hopf point on branch " + std::to_string(c.branch);
  else
    j["finding"] = "fold-Hopf point found";
  return j;
}

// ------------------------------------------------------------------ average

inline std::optional<ojson> upstream_skip(const Context& ctx, const std::string& stage, const ojson& find) {
  if (is_skipped(find)) return skipped_stage(ctx, stage, "find stage skipped");
  if (find.at("selected").is_null()) return skipped_stage(ctx, stage, find.at("finding").get<std::string>());
  return std::nullopt;
}

inline ojson stage_average(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ojson find = require_stage(ctx, "find");
  if (auto s = upstream_skip(ctx, "average", find)) return *s;
  const Problem pb = problem_from_find(ctx, find);
  ojson j = stage_header(ctx, "average");
  j["status"] = "ok";
  j["inputs"] = c.is_fhn() ? ojson{{"gamma1", c.gamma1}, {"frame", "fhn_transform"}}
                           : ojson{{"alpha1", to_json(c.alpha1)}, {"c1", num(c.c1)}, {"frame", "eigenvector"}};
  const VectorFieldExpansion ex = expand_vector_field(pb.model, pb.fh, pb.path, &pb.frame);
  AveragedSystem avg = averaged_functions(ex);

  std::optional<FhnExactForms> exact;
  std::string exact_note;
  if (c.is_fhn()) {
    try {
      exact = fhn_averaged_closed_form(pb.fh.alpha0[fhn::GAMMA], parse_number(c.gamma1).value, pb.fh.eq.point(0),
                                       pb.fh.c0);
    } catch (const PreconditionError& e) {
      exact_note = e.what();
    }
  }
  ojson guess;
  if (exact) {
    // perturbed on purpose: Newton has to find the zero, not be handed it
    find_averaged_zero(avg, Vec2(1.3 * exact->r_star, 0.7 * exact->w_star));
    guess = {{"r", num(1.3 * exact->r_star)}, {"w", num(0.7 * exact->w_star)}, {"source", "perturbed closed form"}};
  } else {
    bool ok = false;
    for (double r : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0}) {
      for (double w : {0.0, 0.01, -0.01, 0.1, -0.1, 1.0, -1.0}) {
        try {
          find_averaged_zero(avg, Vec2(r, w));
          guess = {{"r", r}, {"w", w}, {"source", "multi-start"}};
          ok = true;
          break;
        } catch (const NumericalError&) {
        }
      }
      if (ok) break;
    }
    if (!ok) throw NumericalError("averaging: no nondegenerate zero with r > 0 found by multi-start");
  }
  const Vec2 z = avg.zero;
  j["outputs"] = {{"r_star", num(z(0))},
                  {"w_star", num(z(1))},
                  {"jacobian", to_json(avg.jac_at_zero)},
                  {"det", num(avg.det())},
                  {"trace", num(avg.jac_at_zero.trace())},
                  {"newton_guess", guess}};
  j["residuals"] = {{"zero", num(avg.R(z(0), z(1)).cwiseAbs().maxCoeff())},
                    {"solvability", num(avg.solvability_residual)},
                    {"quadrature", num(avg.quadrature_check)}};
  j["frame"] = to_json(pb.frame);
  if (c.is_fhn()) {
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    if (exact) {
      const double er = rel(z(0), exact->r_star), ew = rel(z(1), exact->w_star), ed = rel(avg.det(), exact->det);
      j["closed_form_rederived"] = {{"r_star", num(exact->r_star)}, {"w_star", num(exact->w_star)},
                                    {"det", num(exact->det)},       {"rel_err_r", num(er)},
                                    {"rel_err_w", num(ew)},         {"rel_err_det", num(ed)},
                                    {"agrees", er <= 1e-6 && ew <= 1e-6 && ed <= 1e-6}};
    } else {
      j["closed_form_rederived"] = {{"unavailable", exact_note}};
    }
    const FhnLocusPoint lp = fhn_locus_point(pb.fh.alpha0[fhn::GAMMA], pb.fh.eq.point(0), 1);
    try {
      const FhnPublishedForms pub = fhn_averaged_closed_form_published(
          lp.gamma, parse_number(c.gamma1).value, lp.u0, lp.c0, lp.mu0);
      const double er = rel(z(0), pub.r_star), ew = rel(z(1), pub.w_star), ed = rel(avg.det(), pub.det);
      j["closed_form_published"] = {{"r_star", num(pub.r_star)}, {"w_star", num(pub.w_star)},
                                    {"det", num(pub.det)},       {"rel_err_r", num(er)},
                                    {"rel_err_w", num(ew)},      {"rel_err_det", num(ed)},
                                    {"agrees", er <= 1e-6 && ew <= 1e-6 && ed <= 1e-6}};
    } catch (const PreconditionError& e) {
      j["closed_form_published"] = {{"unavailable", e.what()}};
    }
  }
  // R1, R2 around the zero, for plotting
  CsvWriter csv({"r", "w", "R1", "R2"});
  const double wspan = 2.0 * std::max(std::abs(z(1)), 0.05 * z(0));
  for (int a = 0; a <= 20; ++a)
    for (int b = 0; b <= 20; ++b) {
      const double r = 2.0 * z(0) * a / 20.0, w = z(1) + wspan * (b - 10) / 10.0;
      const Vec2 R = avg.R(r, w);
      csv.row({r, w, R(0), R(1)});
    }
  csv.save(ctx.file("average_grid.csv"));
  j["csv"] = "average_grid.csv";
  return j;
}

// ------------------------------------------------------------------ orbit

inline ojson orbit_json(const PeriodicOrbit& orb, const FoldHopfPoint& fh, const std::string& csv) {
  double deriv = 0.0;
  for (const Vec3& y : orb.samples) deriv = std::max(deriv, derivative_mismatch(orb.model, y(0), y(2), orb.params.alpha));
  ojson fl = ojson::array();
  for (const cplx& z : orb.floquet) fl.push_back(to_json(z));
  return {{"epsilon", num(orb.epsilon)},
          {"csv", csv},
          {"period", num(orb.period)},
          {"period_shift", num(orb.period - 2.0 * M_PI / fh.mu0)},
          {"amplitude", num(orb.amplitude())},
          {"alpha", to_json(orb.params.alpha)},
          {"c", num(orb.params.c)},
          {"base_point", to_json(orb.base_point)},
          {"free_speed", orb.free_speed},
          {"newton_iterations", orb.newton_iterations},
          {"residuals",
           {{"shooting", num(orb.shooting_residual)},
            {"closure", num(orb.closure_residual)},
            {"phase", num(orb.phase_residual)}}},
          {"monodromy", to_json(orb.monodromy)},
          {"floquet", fl},
          {"properties",
           {{"trivial_multiplier_distance", num(trivial_multiplier_distance(orb))},
            {"liouville_mismatch", num(liouville_mismatch(orb))},
            {"derivative_mismatch", num(deriv)}}}};
}

inline ojson stage_orbit(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ojson find = require_stage(ctx, "find");
  const ojson av = require_stage(ctx, "average");
  if (auto s = upstream_skip(ctx, "orbit", find)) return *s;
  if (is_skipped(av)) return skipped_stage(ctx, "orbit", "average stage skipped");
  if (c.eps.empty()) return skipped_stage(ctx, "orbit", "empty eps list");
  const Problem pb = problem_from_find(ctx, find);
  AveragedSystem avg;
  avg.zero = Vec2(av.at("outputs").at("r_star").get<double>(), av.at("outputs").at("w_star").get<double>());
  avg.Q = pb.frame;
  ShootOptions opt;
  opt.samples = c.samples;
  const ContinuationResult res = continue_in_epsilon(pb.model, pb.fh, avg, pb.path, c.eps, opt);

  ojson j = stage_header(ctx, "orbit");
  j["status"] = "ok";
  j["inputs"] = {{"eps", to_json(c.eps)}, {"samples", c.samples}, {"mu0", num(pb.fh.mu0)},
                 {"period0", num(2.0 * M_PI / pb.fh.mu0)}};
  ojson list = ojson::array();
  std::vector<double> e, amp, shift;
  for (const PeriodicOrbit& orb : res.orbits) {
    const std::string name = "orbit_eps_" + eps_tag(orb.epsilon) + ".csv";
    CsvWriter csv({"xi", "u", "v", "w"});
    for (std::size_t k = 0; k < orb.size(); ++k) {
      const Vec3& y = orb.samples[k];
      csv.row({orb.spacing() * k, y(0), y(1), y(2)});
    }
    csv.save(ctx.file(name));
    list.push_back(orbit_json(orb, pb.fh, name));
    e.push_back(orb.epsilon);
    amp.push_back(orb.amplitude());
    shift.push_back(orb.period - 2.0 * M_PI / pb.fh.mu0);
  }
  j["orbits"] = list;
  if (e.size() >= 2) {
    const LinearFit la = loglog_fit(e, amp);
    const LinearFit lp = linear_fit(e, shift);
    ojson fits;
    fits["amplitude_loglog"] = fit_json(la);
    fits["amplitude_slope_within_0.1"] = std::abs(la.slope - 1.0) <= 0.1;
    fits["period_shift_linear"] = fit_json(lp);
    if (e.size() > 2) {
      fits["period_intercept_over_se"] = num(lp.intercept / lp.intercept_se);
      fits["period_through_origin_2se"] = std::abs(lp.intercept) <= 2.0 * lp.intercept_se;
    }
    if (e.size() > 3) {
      Eigen::MatrixXd X(e.size(), 3);
      Eigen::VectorXd y(e.size());
      for (std::size_t i = 0; i < e.size(); ++i) X.row(i) << 1.0, e[i], e[i] * e[i], y(i) = shift[i];
      const Eigen::Vector3d b = X.colPivHouseholderQr().solve(y);
      fits["period_shift_quadratic"] = {{"intercept", num(b(0))}, {"linear", num(b(1))}, {"quadratic", num(b(2))}};
    }
    j["fits"] = fits;
  }
  if (res.failed_epsilon) {
    j["status"] = "failed";
    j["error"] = "shooting failed at eps = " + eps_tag(*res.failed_epsilon) + ": " + res.failure;
    write_json(ctx.file("orbit.json"), j);
    throw StageFailure("orbit", j["error"].get<std::string>());
  }
  return j;
}

// ------------------------------------------------------------------ spectrum

struct LoadedOrbits {
  Problem pb;
  std::vector<PeriodicOrbit> orbits;
  std::vector<double> missing;
};

inline std::variant<LoadedOrbits, ojson> orbits_for(const Context& ctx, const std::string& stage,
                                                     const std::optional<std::vector<double>>& wanted) {
  const ojson orbitj = require_stage(ctx, "orbit");
  const ojson find = require_stage(ctx, "find");
  if (auto s = upstream_skip(ctx, stage, find)) return *s;
  if (is_skipped(orbitj)) return skipped_stage(ctx, stage, "orbit stage skipped: " + orbitj.value("reason", ""));
  LoadedOrbits lo;
  lo.pb = problem_from_find(ctx, find);
  auto [have, missing] = select_orbits(orbitj, wanted);
  lo.missing = missing;
  if (have.empty()) return skipped_stage(ctx, stage, "no orbit at the requested eps values");
  for (const ojson* e : have) lo.orbits.push_back(load_orbit(ctx, *e, lo.pb.model));
  return lo;
}

inline ojson stage_spectrum(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  auto loaded = orbits_for(ctx, "spectrum", c.spectrum_eps);
  if (auto* s = std::get_if<ojson>(&loaded)) return *s;
  const LoadedOrbits& lo = std::get<LoadedOrbits>(loaded);
  const FoldHopfPoint& fh = lo.pb.fh;
  const double m2 = fh.mu0 * fh.mu0, A0 = 2.0 * M_PI / fh.mu0;

  SpectrumOptions so;
  so.radius_factor = c.radius_factor;
  so.contour.initial_nodes = c.nodes;
  so.contour.workers = c.workers;

  ojson j = stage_header(ctx, "spectrum");
  j["status"] = "ok";
  j["inputs"] = {{"eps", c.spectrum_eps ? to_json(*c.spectrum_eps) : ojson("all")},
                 {"radius_factor", num(c.radius_factor)},
                 {"nodes", c.nodes},
                 {"bloch_points", c.bloch_points},
                 {"mu0_squared", num(m2)}};
  if (!lo.missing.empty()) j["unavailable_eps"] = to_json(lo.missing);
  {
    const double h = 1e-6 * m2;
    const cplx d = (evans_zero_amplitude(fh, m2 + h, 0.0, A0) - evans_zero_amplitude(fh, m2 - h, 0.0, A0)) / (2 * h);
    j["zero_amplitude"] = {{"period", num(A0)},
                           {"abs_E0_at_mu0_squared", num(std::abs(evans_zero_amplitude(fh, m2, 0.0, A0)))},
                           {"dE0_dlambda", to_json(d)}};
  }
  // fixed probe points for the eps -> 0 comparison with the closed form
  const std::vector<cplx> probes{cplx(0.3, 0.2),  cplx(0.1, 0.1),   cplx(0.2, -0.1), cplx(0.05, 0.0),
                                 cplx(0.4, 0.0),  cplx(0.25, 0.3),  cplx(0.15, -0.2), cplx(0.3, -0.05),
                                 cplx(0.18, 0.02), cplx(0.0, 0.15)};
  CsvWriter band({"eps", "mu", "re_lambda", "im_lambda"});
  ojson entries = ojson::array();
  std::vector<double> es, offs;
  bool all_unstable = true;
  for (const PeriodicOrbit& orb : lo.orbits) {
    const SpectrumReport rep = locate_unstable_eigenvalue(orb, fh, so);
    ojson e{{"epsilon", num(orb.epsilon)},
            {"contour", {{"center", to_json(rep.contour.center)}, {"radius", num(rep.contour.radius)}}},
            {"winding", rep.winding},
            {"min_abs_on_contour", num(rep.min_abs_on_contour)},
            {"contour_nodes", rep.contour_values.size()},
            {"eigenvalues", eigen_json(rep.eigenvalues)},
            {"lambda1", rep.lambda1 ? to_json(*rep.lambda1) : ojson(nullptr)},
            {"verdict_unstable", rep.verdict_unstable},
            {"diagnostics", rep.diagnostics}};
    all_unstable = all_unstable && rep.verdict_unstable;
    if (rep.lambda1) {
      const cplx l1 = *rep.lambda1;
      const cplx hill = hill_eigenvalue(orb, 0.0, l1);
      e["hill_lambda1"] = to_json(hill);
      e["hill_difference"] = num(std::abs(hill - l1));
      e["offset_from_mu0_squared"] = num(std::abs(l1 - m2));
      es.push_back(orb.epsilon);
      offs.push_back(std::abs(l1 - m2));
    }
    {
      const cplx lt(m2, 0.5 * m2);
      const double mu = 0.3 * M_PI / orb.period;
      const EvansValue ev = evans_full(orb, lt, mu);
      const cplx mirrored = evans(orb, std::conj(lt), -mu);
      double K = 0.0;
      for (const cplx& l : probes)
        K = std::max(K, std::abs(evans(orb, l, 0.0) - evans_zero_amplitude(fh, l, 0.0, orb.period)) / orb.epsilon);
      e["properties"] = {{"liouville_mismatch", num(ev.liouville_mismatch)},
                         {"conjugate_symmetry", num(std::abs(mirrored - std::conj(ev.value)) / std::abs(ev.value))},
                         {"zero_amplitude_K", num(K)}};
    }
    std::vector<double> grid;
    const double bound = M_PI / orb.period;
    for (int k = 0; k < c.bloch_points; ++k) grid.push_back(-bound + 2.0 * bound * (k + 1) / c.bloch_points);
    ojson slice = ojson::array();
    for (const SliceEntry& s : spectrum_slice(orb, fh, grid, so, c.workers)) {
      ojson se{{"mu", num(s.mu)}, {"winding", s.winding}, {"eigenvalues", eigen_json(s.eigenvalues)}};
      if (!s.error.empty()) se["error"] = s.error;
      slice.push_back(se);
      for (const auto& ev : s.eigenvalues) band.row({orb.epsilon, s.mu, ev.value.real(), ev.value.imag()});
    }
    e["bloch_slice"] = slice;
    entries.push_back(e);
  }
  band.save(ctx.file("spectrum_band.csv"));
  j["entries"] = entries;
  j["csv"] = "spectrum_band.csv";
  j["verdict_unstable_all"] = all_unstable;
  if (es.size() >= 2) {
    double sxy = 0, sxx = 0, cmax = 0;
    for (std::size_t i = 0; i < es.size(); ++i) {
      sxy += es[i] * offs[i];
      sxx += es[i] * es[i];
      cmax = std::max(cmax, offs[i] / es[i]);
    }
    const LinearFit lf = loglog_fit(es, offs);
    j["offset_fit"] = {{"C_least_squares", num(sxy / sxx)}, {"C_max", num(cmax)}, {"loglog", fit_json(lf)},
                       {"slope_within_0.3", std::abs(lf.slope - 1.0) <= 0.3}};
  }
  return j;
}

// ------------------------------------------------------------------ bounds

inline ojson stage_bounds(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  auto loaded = orbits_for(ctx, "bounds", c.bounds_eps);
  if (auto* s = std::get_if<ojson>(&loaded)) return *s;
  const LoadedOrbits& lo = std::get<LoadedOrbits>(loaded);
  const FoldHopfPoint& fh = lo.pb.fh;
  const double A = 2.0 * M_PI / fh.mu0;
  const std::vector<double> lambdas{0.0, A * A * fh.mu0 * fh.mu0};
  const int n = c.bound_n ? c.bound_n : minimal_n(fh);

  ojson j = stage_header(ctx, "bounds");
  j["status"] = "ok";
  j["inputs"] = {{"eps", c.bounds_eps ? to_json(*c.bounds_eps) : ojson("all")},
                 {"suite_size", c.suite_size},
                 {"n", n},
                 {"lambdas", to_json(lambdas)}};
  if (!lo.missing.empty()) j["unavailable_eps"] = to_json(lo.missing);
  ojson entries = ojson::array();
  bool holds = true;
  ojson fits = ojson::array();
  for (double lam : lambdas) {
    std::vector<double> es, as, bs, viol;
    for (const PeriodicOrbit& orb : lo.orbits) {
      const RelativeBoundReport r = verify_relative_bound(orb, fh, lam, n, c.suite_size, c.seed, c.workers);
      const bool ok = r.max_violation <= 0;
      holds = holds && ok;
      entries.push_back({{"epsilon", num(orb.epsilon)},
                         {"lambda", num(lam)},
                         {"sup_norms",
                          {{"beta_u", num(r.sup.beta_u)},
                           {"beta_w", num(r.sup.beta_w)},
                           {"gamma_u", num(r.sup.gamma_u)},
                           {"gamma_w", num(r.sup.gamma_w)},
                           {"speed", num(r.sup.speed)}}},
                         {"constants",
                          {{"n", r.constants.n},
                           {"kappa1", num(r.constants.kappa1)},
                           {"kappa2", num(r.constants.kappa2)},
                           {"a", num(r.constants.a)},
                           {"b", num(r.constants.b)}}},
                         {"n_scan",
                          {{"n_min", r.scan.n_min},
                           {"n_best_a", r.scan.n_best_a},
                           {"a_at_best", num(r.scan.a_at_best)},
                           {"n_best_b", r.scan.n_best_b},
                           {"b_at_best", num(r.scan.b_at_best)}}},
                         {"max_violation", num(r.max_violation)},
                         {"max_ratio", num(r.max_ratio)},
                         {"holds", ok}});
      es.push_back(orb.epsilon);
      as.push_back(r.constants.a);
      bs.push_back(r.constants.b);
      viol.push_back(r.max_violation);
    }
    if (es.size() >= 2) {
      const LinearFit fa = loglog_fit(es, as), fb = loglog_fit(es, bs);
      fits.push_back({{"lambda", num(lam)},
                      {"a_loglog", fit_json(fa)},
                      {"b_loglog", fit_json(fb)},
                      {"slopes_within_0.2", std::abs(fa.slope - 1) <= 0.2 && std::abs(fb.slope - 1) <= 0.2}});
    }
  }
  j["entries"] = entries;
  if (!fits.empty()) j["decay_fits"] = fits;
  ojson kato = ojson::array();
  for (int kn : c.kato_n) {
    const KatoReport k = verify_kato_inequality(kn, c.suite_size, c.seed);
    holds = holds && k.max_violation <= 0;
    kato.push_back({{"n", kn}, {"max_violation", num(k.max_violation)}, {"max_ratio", num(k.max_ratio)},
                    {"holds", k.max_violation <= 0}});
  }
  j["kato"] = kato;
  j["all_hold"] = holds;
  return j;
}

// ------------------------------------------------------------------ simulate

struct SimOutcome {
  ojson json;
  SimulationRun run;
  GrowthFit fit;
};

inline SimOutcome simulate_once(const RunConfig& c, const PeriodicOrbit& orb, const std::optional<cplx>& lambda1,
                                int N, const ModelDefinition& model) {
  const Grid1D g(N, orb.period);
  const DiscreteWave dw = discrete_steady_state(semidiscretize(model, orb.params, g), sample_orbit(orb, g));
  const Stepper st = semidiscretize(model, {orb.params.alpha, dw.c}, g);
  PdeState p{Eigen::VectorXd(N), Eigen::VectorXd(N)};
  std::string kind = c.perturbation;
  if (kind == "eigenfunction" && lambda1) {
    const auto ef = unstable_eigenfunction(orb, *lambda1, 0.0, N);
    for (int k = 0; k < N; ++k) p.u(k) = ef[k](0).real(), p.w(k) = ef[k](2).real();
  } else {
    if (kind == "eigenfunction") kind = "noise (no unstable eigenvalue available)";
    p = white_noise(g, c.seed);
  }
  p = normalized(p, c.amplitude, g.spacing());
  const PdeState init{dw.state.u + p.u, dw.state.w + p.w};
  const double dt = c.dt_fraction * st.max_stable_dt(init);
  SimOutcome o;
  o.run = evolve(st, init, dt, c.t_end, c.snapshot_every);
  o.run.reference = dw.state;
  o.fit = measure_growth_rate(o.run, orb);
  o.run.growth = o.fit;
  ojson dist = ojson::array();
  const auto d = snapshot_distances(o.run, orb);
  for (std::size_t k = 0; k < d.size(); ++k) dist.push_back({num(o.run.snapshots[k].t), num(d[k])});
  o.json = {{"cells", N},
            {"dt", num(o.run.dt)},
            {"t_end", num(o.run.T_end)},
            {"perturbation", kind},
            {"discrete_wave", {{"c", num(dw.c)}, {"c_shift", num(dw.c - orb.params.c)},
                               {"residual", num(dw.residual)}, {"newton_iterations", dw.iterations}}},
            {"growth",
             {{"conclusive", o.fit.conclusive},
              {"rate", num(o.fit.rate)},
              {"r2", num(o.fit.r2)},
              {"window", {num(o.fit.t_begin), num(o.fit.t_end)}},
              {"points", o.fit.points},
              {"note", o.fit.note}}},
            {"distances", dist}};
  return o;
}

inline ojson stage_simulate(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  if (!c.simulate_eps) return skipped_stage(ctx, "simulate", "simulation disabled");
  auto loaded = orbits_for(ctx, "simulate", std::vector<double>{*c.simulate_eps});
  if (auto* s = std::get_if<ojson>(&loaded)) return *s;
  const LoadedOrbits& lo = std::get<LoadedOrbits>(loaded);
  const PeriodicOrbit& orb = lo.orbits.front();

  std::optional<cplx> lambda1;
  std::string lambda_source = "none";
  if (c.perturbation == "eigenfunction") {
    const ojson spj = require_stage(ctx, "spectrum");
    if (!is_skipped(spj))
      for (const auto& e : spj.at("entries"))
        if (same_eps(e.at("epsilon").get<double>(), orb.epsilon) && !e.at("lambda1").is_null()) {
          lambda1 = cplx(e["lambda1"]["re"].get<double>(), e["lambda1"]["im"].get<double>());
          lambda_source = "spectrum stage";
        }
  }
  if (!lambda1) {
    const SpectrumReport rep = locate_unstable_eigenvalue(orb, lo.pb.fh);
    lambda1 = rep.lambda1;
    if (lambda1) lambda_source = "computed in this stage";
  }

  ojson j = stage_header(ctx, "simulate");
  j["status"] = "ok";
  j["inputs"] = {{"eps", num(orb.epsilon)},     {"cells", c.cells},           {"t_end", num(c.t_end)},
                 {"snapshot_every", num(c.snapshot_every)}, {"amplitude", num(c.amplitude)},
                 {"dt_fraction", num(c.dt_fraction)},       {"perturbation", c.perturbation},
                 {"grid_check", c.grid_check}};
  j["lambda1"] = lambda1 ? to_json(*lambda1) : ojson(nullptr);
  j["lambda1_source"] = lambda_source;
  SimOutcome main = simulate_once(c, orb, lambda1, c.cells, lo.pb.model);
  j["run"] = main.json;
  if (lambda1 && main.fit.conclusive) {
    const double rel = std::abs(main.fit.rate - lambda1->real()) / std::abs(lambda1->real());
    j["comparison"] = {{"rel_error", num(rel)}, {"within_15pct", rel <= 0.15}};
  }
  if (c.grid_check) {
    const SimOutcome fine = simulate_once(c, orb, lambda1, 2 * c.cells, lo.pb.model);
    ojson gc = {{"run", fine.json}};
    if (main.fit.conclusive && fine.fit.conclusive) {
      const double ch = std::abs(fine.fit.rate - main.fit.rate) / std::abs(main.fit.rate);
      gc["rel_change"] = num(ch);
      gc["within_5pct"] = ch <= 0.05;
    }
    j["grid_refinement"] = gc;
  }
  CsvWriter csv({"t", "xi", "u", "w"});
  const double h = main.run.grid.spacing();
  for (std::size_t k = 0; k < main.run.snapshots.size(); k += c.csv_stride) {
    const Snapshot& s = main.run.snapshots[k];
    for (int i = 0; i < main.run.grid.N; ++i) csv.row({s.t, h * i, s.state.u(i), s.state.w(i)});
  }
  csv.save(ctx.file("simulate_snapshots.csv"));
  j["csv"] = "simulate_snapshots.csv";
  return j;
}

// ------------------------------------------------------------------ orchestration

inline ojson run_stage(const Context& ctx, const std::string& name) {
  fs::create_directories(ctx.out);
  log()->info("stage {} started", name);
  ojson j;
  try {
    if (name == "find") j = stage_find(ctx);
    else if (name == "average") j = stage_average(ctx);
    else if (name == "orbit") j = stage_orbit(ctx);
    else if (name == "spectrum") j = stage_spectrum(ctx);
    else if (name == "bounds") j = stage_bounds(ctx);
    else if (name == "simulate") j = stage_simulate(ctx);
    else throw ConfigError("unknown stage '" + name + "'");
  } catch (const MissingArtifact&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    ojson f = stage_header(ctx, name);
    f["status"] = "failed";
    f["error"] = e.what();
    write_json(ctx.file(name + ".json"), f);
    throw StageFailure(name, e.what());
  }
  write_json(ctx.file(name + ".json"), j);
  log()->info("stage {} finished: {}", name, j.value("status", ""));
  return j;
}

// Every stage in order, then report.json with one object per stage.
inline ojson run_pipeline(const Context& ctx) {
  ojson report{{"tool_version", FH_VERSION}, {"config_hash", ctx.hash}, {"seed", ctx.cfg.seed}};
  ojson cfg;
  for (const auto& [k, v] : canonical_entries(ctx.cfg)) cfg[k] = v;
  report["config"] = cfg;
  report["stages"] = ojson::object();
  for (const std::string& s : stage_names()) {
    try {
      report["stages"][s] = run_stage(ctx, s);
    } catch (const StageFailure& e) {
      report["stages"][s] = read_json(ctx.file(s + ".json"));
      report["failed_stage"] = s;
      write_json(ctx.file("report.json"), report);
      throw;
    }
  }
  write_json(ctx.file("report.json"), report);
  return report;
}

}  // namespace fh
