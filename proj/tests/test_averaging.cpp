#include <catch_amalgamated.hpp>

#include <fh/averaging.hpp>
#include <fh/rng.hpp>

#include <cmath>

using namespace fh;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Linear fold-Hopf toy at c = 0.5: f = u - w (+ k u^2), g = (u - w)/4 (+ k w^2).
ModelDefinition toy_model(double k) {
  ModelDefinition m;
  m.name = "toy";
  m.param_names = {"dummy"};
  m.f = [k](double u, double w, ParamSpan) { return u - w + k * u * u; };
  m.g = [k](double u, double w, ParamSpan) { return 0.25 * (u - w) + k * w * w; };
  m.first = [k](double u, double w, ParamSpan) {
    return FirstPartials{1.0 + 2 * k * u, -1.0, 0.25, -0.25 + 2 * k * w};
  };
  return m;
}

FoldHopfPoint toy_point(const ModelDefinition& m) {
  WaveParameters p{{0.0}, 0.5};
  auto cl = classify_fold_hopf(m, make_equilibrium(m, p, 0.0, 0.0), p);
  REQUIRE(cl.point);
  return *cl.point;
}

struct Fhn {
  FoldHopfPoint fh;
  UnfoldingPath path;
  VectorFieldExpansion ex;
};

Fhn fhn_setup(double g0, double g1, int branch, bool transform_frame) {
  const auto loc = fhn_fold_hopf_locus(g0);
  const FoldHopfPoint fh = fhn_fold_hopf_point(loc.at(branch - 1));
  const UnfoldingPath path = fhn_tracking_path(fh, g1);
  const Mat3 T = fhn_transform(fh);
  return {fh, path, expand_vector_field(fhn_canonical_model(), fh, path, transform_frame ? &T : nullptr)};
}

}  // namespace

TEST_CASE("trapezoid on cos^2 is exact") {
  auto X1 = [](const Vec3& y) { return Vec3(y(0), 0.0, 0.0); };  // r cos(theta) in slot 1
  const Vec2 v = average_first_order(X1, 1.0, 0.0, 256);
  CHECK_THAT(v(0), WithinAbs(M_PI, 1e-14));
}

TEST_CASE("linear model without drift has vanishing first-order terms") {
  const ModelDefinition m = toy_model(0.0);
  const FoldHopfPoint fh = toy_point(m);
  const auto ex = expand_vector_field(m, fh, UnfoldingPath{});
  CounterRng rng(5);
  for (int i = 0; i < 20; ++i) {
    Vec3 y(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    CHECK(ex.X1(y).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(ex.X0(y).cwiseAbs().maxCoeff() < 1e-9);
  }
  AveragedSystem avg = averaged_functions(ex);
  CHECK(avg.R(0.7, -0.2).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("quadratic toy model matches the hand expansion") {
  const double k = 0.8;
  const ModelDefinition m = toy_model(k);
  const FoldHopfPoint fh = toy_point(m);
  const auto ex = expand_vector_field(m, fh, UnfoldingPath{});
  CounterRng rng(6);
  for (int i = 0; i < 20; ++i) {
    Vec3 y(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec3 x = ex.Q * y;
    const Vec3 hand = ex.Qinv * Vec3(0.0, -k * x(0) * x(0), k * x(2) * x(2) / fh.c0);
    CHECK((ex.X1(y) - hand).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((ex.X1_taylor(y) - hand).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("Richardson and Taylor routes agree on FHN") {
  Fhn s = fhn_setup(4.0, 1.0, 1, false);
  CounterRng rng(8);
  for (int i = 0; i < 30; ++i) {
    Vec3 y(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    CHECK((s.ex.X1(y) - s.ex.X1_taylor(y)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("tracking path keeps the equilibrium, frozen path does not") {
  Fhn s = fhn_setup(4.0, 1.0, 1, true);
  CHECK(solvability_residual(s.ex) < 1e-10);

  const UnfoldingPath frozen = fhn_frozen_path(1.0);
  const Mat3 T = fhn_transform(s.fh);
  const auto ex = expand_vector_field(fhn_canonical_model(), s.fh, frozen, &T);
  // d/deps of g/c at P0 is -delta gamma1 w0 / c
  const Vec3 expect = ex.Qinv * Vec3(0, 0, -fhn::delta * s.fh.eq.point(2) / s.fh.c0);
  CHECK((ex.X0(Vec3::Zero()) - expect).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(solvability_residual(ex) > 1e-4);
  CHECK_THROWS_AS(averaged_functions(ex), NumericalError);
}

TEST_CASE("frozen-path first-order terms have the (u + g0 w)^2 structure") {
  const FoldHopfPoint fh = fhn_fold_hopf_point(fhn_fold_hopf_locus(4.0).at(0));
  const Mat3 T = fhn_transform(fh);
  const auto ex = expand_vector_field(fhn_canonical_model(), fh, fhn_frozen_path(1.0), &T);
  const double d0 = 5.0, s = std::sqrt(d0), g0 = 4.0, u0 = fh.eq.point(0);
  const double c0 = fh.c0 * s, mu0 = fh.mu0_original(), de = fhn::delta;
  CounterRng rng(9);
  for (int i = 0; i < 10; ++i) {
    Vec3 y(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec3 e0 = ex.X1(Vec3::Zero());
    const Vec3 quad = 0.5 * (ex.X1(y) + ex.X1(-y)) - e0;
    const Vec3 lin = 0.5 * (ex.X1(y) - ex.X1(-y));
    const double g1 = (3 * u0 - 1.1) / d0 * std::pow(y(0) + g0 * y(2), 2);
    // quadratic part: exactly the reference g1 terms (times sqrt(d) for the canonical scale)
    CHECK_THAT(quad(0), WithinAbs(s * -c0 * g1 / (d0 * mu0 * mu0), 1e-9));
    CHECK_THAT(quad(1), WithinAbs(s * g1 / mu0, 1e-9));
    CHECK_THAT(quad(2), WithinAbs(s * c0 * g1 / (d0 * g0 * mu0 * mu0), 1e-9));
    // linear part: -delta gamma1 (delta g0 u - c0 mu0 v + w), carrying a 1/c0 the print omits
    const double g2 = -de * (de * g0 * y(0) - c0 * mu0 * y(1) + y(2)) / c0;
    CHECK_THAT(lin(0), WithinAbs(s * -g2 / (d0 * mu0 * mu0), 1e-9));
    CHECK_THAT(lin(1), WithinAbs(0.0, 1e-9));
    CHECK_THAT(lin(2), WithinAbs(s * g2 / (d0 * g0 * mu0 * mu0), 1e-9));
  }
}

TEST_CASE("averaged functions agree with the exact closed form on a grid") {
  Fhn s = fhn_setup(4.0, 1.0, 1, true);
  AveragedSystem avg = averaged_functions(s.ex);
  CHECK(avg.quadrature_check < 1e-10);
  const FhnExactForms cf = fhn_averaged_closed_form(4.0, 1.0, s.fh.eq.point(0), s.fh.c0);
  double worst = 0;
  for (int i = 1; i <= 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double r = 2.0 * i / 20, w = -2 * cf.w_star + 4 * cf.w_star * j / 19.0;
      worst = std::max(worst, (avg.R(r, w) - cf.R(r, w)).cwiseAbs().maxCoeff());
    }
  CHECK(worst < 1e-7);
  for (double w : {-1.0, 0.0, 0.3}) CHECK(std::abs(avg.R1(0.0, w)) < 1e-10);
}

TEST_CASE("averaged zero matches the exact closed form") {
  for (double g0 : {3.5, 4.0, 4.5})
    for (double g1 : {1.0, -1.0})
      for (int branch : {1, 2}) {
        Fhn s = fhn_setup(g0, g1, branch, true);
        const FhnExactForms cf = fhn_averaged_closed_form(g0, g1, s.fh.eq.point(0), s.fh.c0);
        AveragedSystem avg = averaged_functions(s.ex);
        find_averaged_zero(avg, Vec2(1.3 * cf.r_star, 0.7 * cf.w_star));
        CHECK_THAT(avg.zero(0), WithinRel(cf.r_star, 1e-7));
        CHECK_THAT(avg.zero(1), WithinRel(cf.w_star, 1e-7));
        CHECK_THAT(avg.det(), WithinRel(cf.det, 1e-6));
        CHECK(avg.R(avg.zero(0), avg.zero(1)).cwiseAbs().maxCoeff() <= 1e-8);
        for (double r : {0.1, 1.0, 3.0}) CHECK(std::abs(cf.R(r, cf.w_star)(0)) < 1e-15);
      }
}

TEST_CASE("zeros in the generic frame map onto the closed form") {
  Fhn gen = fhn_setup(4.0, 1.0, 1, false);
  const FhnExactForms cf = fhn_averaged_closed_form(4.0, 1.0, gen.fh.eq.point(0), gen.fh.c0);
  const FrameMap fm = frame_map(fhn_transform(gen.fh), gen.fh.Q);
  AveragedSystem avg = averaged_functions(gen.ex);
  find_averaged_zero(avg, Vec2(cf.r_star / fm.rho * 1.2, cf.w_star / fm.s * 0.8));
  CHECK_THAT(fm.rho * avg.zero(0), WithinRel(cf.r_star, 1e-7));
  CHECK_THAT(fm.s * avg.zero(1), WithinRel(cf.w_star, 1e-7));
}

TEST_CASE("Newton for the averaged zero guards its preconditions") {
  Fhn s = fhn_setup(4.0, 1.0, 1, true);
  AveragedSystem avg = averaged_functions(s.ex);
  CHECK_THROWS_AS(find_averaged_zero(avg, Vec2(-0.1, 0.0)), PreconditionError);
}

TEST_CASE("published closed forms evaluated verbatim") {
  const auto pt = fhn_fold_hopf_locus(4.0).at(0);
  const auto pub = fhn_averaged_closed_form_published(4.0, 1.0, pt.u0, pt.c0, pt.mu0);
  CHECK_THAT(pub.w_star, WithinRel(100.0, 1e-12));
  // the bracket of the reference G1 vanishes at -d0 delta^2 gamma1 / (2 (3u0 - 1.1)) = 0.000625
  const double bracket_root = -5.0 * 1e-4 / (2 * (3 * pt.u0 - 1.1));
  CHECK_THAT(bracket_root, WithinRel(0.000625, 1e-12));
  for (double r : {0.5, 1.0}) CHECK(std::abs(pub.G(r, bracket_root)(0)) < 1e-12);
  CHECK(std::abs(pub.G(1.0, pub.w_star)(0)) > 1.0);  // the reference w* is not a zero of G1

  CHECK_THROWS_AS(fhn_averaged_closed_form_published(4.0, 0.0, pt.u0, pt.c0, pt.mu0), PreconditionError);
  CHECK_THROWS_AS(fhn_averaged_closed_form_published(4.0, -1.0, pt.u0, pt.c0, pt.mu0), PreconditionError);
  const double gbad = 1.0 / std::cbrt(5.0);
  CHECK_THROWS_WITH(fhn_averaged_closed_form_published(gbad, 1.0, 0.2, std::sqrt(0.05 * gbad), 1.0),
                    Catch::Matchers::ContainsSubstring("2 delta - c0 gamma0^4"));
  CHECK_THROWS_AS(fhn_averaged_closed_form(300.0 / 91.0, 1.0, 11.0 / 30.0, 0.2), PreconditionError);
}
