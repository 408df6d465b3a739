#include <catch_amalgamated.hpp>

#include <fh/bounds.hpp>
#include <fh/stats.hpp>

#include <cmath>

using namespace fh;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Setup {
  ModelDefinition model = fhn_canonical_model();
  FoldHopfPoint fh;
  ContinuationResult fam;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup s;
    s.fh = fhn_fold_hopf_point(fhn_fold_hopf_locus(4.0).at(0));
    const UnfoldingPath path = fhn_tracking_path(s.fh, 1.0);
    const Mat3 T = fhn_transform(s.fh);
    AveragedSystem avg = averaged_functions(expand_vector_field(s.model, s.fh, path, &T));
    find_averaged_zero(avg, Vec2(0.07, -0.003));
    s.fam = continue_in_epsilon(s.model, s.fh, avg, path, {0.005, 0.01, 0.02, 0.04});
    return s;
  }();
  return s;
}

const PeriodicOrbit& orbit(double eps) {
  for (const auto& o : setup().fam.orbits)
    if (o.epsilon == eps) return o;
  throw std::logic_error("no orbit");
}

// The equilibrium viewed as a zero-amplitude orbit of period 2 pi / mu0.
PeriodicOrbit trivial_orbit(const FoldHopfPoint& fh) {
  PeriodicOrbit o;
  o.model = setup().model;
  o.params = fh.params();
  o.period = 2 * M_PI / fh.mu0;
  o.samples.assign(64, fh.eq.point);
  o.base_point = fh.eq.point;
  refresh_derivatives(o);
  return o;
}

}  // namespace

TEST_CASE("sup norms vanish on the equilibrium and scale linearly in eps") {
  const Setup& s = setup();
  const SupNorms z = coefficient_sup_norms(trivial_orbit(s.fh), s.fh);
  CHECK(z.beta_u < 1e-12);
  CHECK(z.beta_w < 1e-12);
  CHECK(z.gamma_u < 1e-12);
  CHECK(z.gamma_w < 1e-12);
  CHECK(z.speed < 1e-15);

  std::vector<double> eps, bu, bw, gu, gw, sp;
  for (const auto& orb : s.fam.orbits) {
    const SupNorms n = coefficient_sup_norms(orb, s.fh);
    const SupNorms n2 = coefficient_sup_norms(orb, s.fh, 4096);
    CHECK(std::abs(n.beta_u - n2.beta_u) < 1e-8);
    CHECK(std::abs(n.beta_w - n2.beta_w) < 1e-8);
    CHECK(std::abs(n.gamma_u - n2.gamma_u) < 1e-8);
    CHECK(std::abs(n.gamma_w - n2.gamma_w) < 1e-8);
    eps.push_back(orb.epsilon);
    bu.push_back(n.beta_u), bw.push_back(n.beta_w), gu.push_back(n.gamma_u), gw.push_back(n.gamma_w);
    sp.push_back(n.speed);
  }
  for (const auto* v : {&bu, &bw, &gu, &gw, &sp}) CHECK_THAT(loglog_fit(eps, *v).slope, WithinAbs(1.0, 0.1));
}

TEST_CASE("bound constants follow the closed formulas") {
  const Setup& s = setup();
  SupNorms n;
  n.A = 2 * M_PI / s.fh.mu0;
  n.beta_u = 0.3, n.beta_w = 0.1, n.gamma_u = 0.05, n.gamma_w = 0.02, n.speed = 0.01;
  const cplx lam(3.0, 4.0);
  const BoundConstants k = relative_bound_constants(n, s.fh, lam, 5);
  const double cA = s.fh.c0 * n.A;
  const FirstPartials& d = s.fh.partials;
  const double k1 = 3 * 0.32;
  const double k2 =
      std::max(n.A * n.A * (std::abs(d.fu) + std::abs(d.gw)), n.A * n.A * (std::abs(d.fw) + std::abs(d.gu))) + 2.5;
  CHECK_THAT(k.kappa1, WithinRel(k1, 1e-15));
  CHECK_THAT(k.kappa2, WithinRel(k2, 1e-15));
  CHECK_THAT(k.a, WithinRel(k1 * (1 + (2 * k2 + 60) / (4 - cA) + 2 * k2 / cA), 1e-14));
  CHECK_THAT(k.b, WithinRel(k1 * (1 / (4 - cA) + 1 / cA), 1e-14));

  // lambda = 0 drops the |lambda| / 2 term
  CHECK_THAT(relative_bound_constants(n, s.fh, 0.0, 5).kappa2, WithinRel(k2 - 2.5, 1e-15));

  // monotone in kappa1
  SupNorms bigger = n;
  bigger.beta_u *= 2;
  const BoundConstants kb = relative_bound_constants(bigger, s.fh, lam, 5);
  CHECK(kb.a > k.a);
  CHECK(kb.b > k.b);

  SupNorms zero;
  zero.A = n.A;
  const BoundConstants k0 = relative_bound_constants(zero, s.fh, lam, 5);
  CHECK(k0.a == 0);
  CHECK(k0.b == 0);

  CHECK(minimal_n(s.fh) == static_cast<int>(std::floor(1 + cA)) + 1);
  CHECK_THROWS_AS(relative_bound_constants(n, s.fh, lam, static_cast<int>(std::floor(1 + cA))), PreconditionError);
}

TEST_CASE("n scan") {
  const Setup& s = setup();
  const SupNorms n = coefficient_sup_norms(orbit(0.02), s.fh);
  const NScan sc = scan_n(n, s.fh, 0.0);
  CHECK(sc.n_min == minimal_n(s.fh));
  CHECK(sc.b_at_best <= relative_bound_constants(n, s.fh, 0.0, sc.n_min + 1).b);
  CHECK(sc.a_at_best <= relative_bound_constants(n, s.fh, 0.0, sc.n_min).a);
  for (int m = sc.n_min; m <= sc.n_min + 100 && m <= 1 + s.fh.c0 * n.A + 100; ++m) {
    CHECK(relative_bound_constants(n, s.fh, 0.0, m).a >= sc.a_at_best);
    CHECK(relative_bound_constants(n, s.fh, 0.0, m).b >= sc.b_at_best);
  }
}

TEST_CASE("trigonometric test functions: Parseval against quadrature") {
  CounterRng rng(7, 0);
  TrigPoly p;
  while (p.degree() < 5) p = random_trig_poly(rng, 32);
  const int M = 1024;
  double s0 = 0, s1 = 0;
  for (int j = 0; j < M; ++j) {
    s0 += std::norm(p.value(double(j) / M));
    s1 += std::norm(p.value(double(j) / M, 1));
  }
  CHECK_THAT(std::sqrt(s0 / M), WithinRel(p.l2(), 1e-12));
  CHECK_THAT(std::sqrt(s1 / M), WithinRel(p.l2_derivative(1), 1e-12));
}

TEST_CASE("operators on the constant and zero test functions") {
  const Setup& s = setup();
  const PeriodicOrbit& orb = orbit(0.02);
  const double A = 2 * M_PI / s.fh.mu0;
  const cplx lam = 4 * M_PI * M_PI;
  const int M = 256;
  std::vector<detail::CoefficientDiffs> cd(M);
  for (int j = 0; j < M; ++j) cd[j] = detail::coefficient_diffs(orb, s.fh, double(j) / M);

  TrigPoly one{{1.0}}, zero{{0.0}};
  const SuiteResult r = apply_operators(orb, s.fh, lam, one, zero, cd);
  // direct: F1 (1, 0) = (beta_u, gamma_u), (F0 - lambda)(1, 0) = (A^2 f_u - lambda, A^2 g_u)
  double q = 0;
  const int Mq = 4096;
  for (int j = 0; j < Mq; ++j) {
    const auto c = detail::coefficient_diffs(orb, s.fh, double(j) / Mq);
    q += c.bu * c.bu + c.gu * c.gu;
  }
  CHECK_THAT(r.lhs, WithinRel(std::sqrt(q / Mq), 1e-9));
  CHECK_THAT(r.norm, WithinRel(1.0, 1e-15));
  const FirstPartials& d = s.fh.partials;
  CHECK_THAT(r.f0norm, WithinRel(std::abs(std::hypot(std::abs(A * A * d.fu - lam), A * A * d.gu)), 1e-13));
  const BoundConstants k = relative_bound_constants(coefficient_sup_norms(orb, s.fh), s.fh, lam, minimal_n(s.fh));
  CHECK(r.lhs < k.a * r.norm + k.b * r.f0norm);

  const SuiteResult z = apply_operators(orb, s.fh, lam, zero, zero, cd);
  CHECK(z.lhs == 0);
  CHECK(z.norm == 0);
  CHECK(z.f0norm == 0);
}

TEST_CASE("relative bound holds on random suites and a, b decay linearly") {
  const Setup& s = setup();
  const double A = 2 * M_PI / s.fh.mu0;
  for (cplx lam : {cplx(0.0), cplx(A * A * s.fh.mu0 * s.fh.mu0)}) {
    std::vector<double> eps, as, bs, viol;
    for (double e : {0.01, 0.02, 0.04}) {
      const RelativeBoundReport r = verify_relative_bound(orbit(e), s.fh, lam, minimal_n(s.fh), 100, 11);
      CHECK(r.max_violation <= 0);
      CHECK(r.max_ratio < 1);
      eps.push_back(e), as.push_back(r.constants.a), bs.push_back(r.constants.b);
      viol.push_back(r.max_violation);
    }
    CHECK_THAT(loglog_fit(eps, as).slope, WithinAbs(1.0, 0.2));
    CHECK_THAT(loglog_fit(eps, bs).slope, WithinAbs(1.0, 0.2));
    // both sides scale with eps, so the (negative) violation scales with eps as well
    for (std::size_t i = 0; i + 1 < viol.size(); ++i) CHECK_THAT(viol[i + 1] / viol[i], WithinAbs(2.0, 0.2));
  }
}

TEST_CASE("suite results do not depend on the worker count") {
  const Setup& s = setup();
  const auto r1 = verify_relative_bound(orbit(0.01), s.fh, 0.0, 5, 40, 3, 1);
  const auto r3 = verify_relative_bound(orbit(0.01), s.fh, 0.0, 5, 40, 3, 3);
  CHECK(r1.max_violation == r3.max_violation);
  CHECK(r1.max_ratio == r3.max_ratio);
  CHECK_THROWS_AS(verify_relative_bound(orbit(0.01), s.fh, 0.0, 5, 0), PreconditionError);
}

TEST_CASE("Kato interpolation inequality") {
  // single mode e^{2 pi i k xi}: 2 pi k <= (2 pi k)^2 / (n-1) + 2n(n+1)/(n-1)
  for (int n = 2; n <= 10; ++n)
    for (int k = 0; k <= 64; ++k) {
      TrigPoly p;
      p.coef.assign(2 * k + 1, 0.0);
      p.coef[2 * k] = 1.0;
      const double x = 2 * M_PI * k;
      CHECK_THAT(p.l2_derivative(1), WithinRel(x, 1e-14));
      const double rhs = p.l2_derivative(2) / (n - 1.0) + 2.0 * n * (n + 1) / (n - 1.0);
      CHECK_THAT(rhs, WithinRel(x * x / (n - 1.0) + 2.0 * n * (n + 1) / (n - 1.0), 1e-14));
      CHECK(x <= rhs);
    }
  TrigPoly c{{2.5}};
  CHECK(c.l2_derivative(1) == 0);
  for (int n : {2, 3, 5}) {
    const KatoReport r = verify_kato_inequality(n, 100);
    CHECK(r.max_violation <= 0);
    CHECK(r.max_ratio < 1);
  }
  CHECK_THROWS_AS(verify_kato_inequality(1, 10), PreconditionError);
}
