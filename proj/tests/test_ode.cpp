#include <catch_amalgamated.hpp>

#include <fh/ode.hpp>

#include <cmath>
#include <complex>

using namespace fh;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("exponential decay reaches the closed form") {
  using V = Eigen::Matrix<double, 1, 1>;
  auto f = [](double, const V& y) -> V { return -2.0 * y; };
  OdeStats st;
  V y = integrate(f, 0.0, V(1.0), 3.0, OdeOptions{}, &st);
  CHECK_THAT(y(0), WithinRel(std::exp(-6.0), 1e-9));
  CHECK(st.accepted > 0);
}

TEST_CASE("harmonic oscillator conserves the phase over many periods") {
  auto f = [](double, const Eigen::Vector2d& y) -> Eigen::Vector2d { return {y(1), -y(0)}; };
  Eigen::Vector2d y = integrate(f, 0.0, Eigen::Vector2d(1.0, 0.0), 20 * M_PI, OdeOptions{});
  CHECK_THAT(y(0), WithinAbs(1.0, 1e-8));
  CHECK_THAT(y(1), WithinAbs(0.0, 1e-8));
}

TEST_CASE("complex state integrates a rotation") {
  using C = Eigen::Matrix<std::complex<double>, 2, 1>;
  const std::complex<double> I(0, 1);
  auto f = [&](double, const C& y) -> C { return I * y; };
  C y0;
  y0 << 1.0, 2.0;
  C y = integrate(f, 0.0, y0, 1.0, OdeOptions{});
  CHECK(std::abs(y(0) - std::exp(I)) < 1e-9);
  CHECK(std::abs(y(1) - 2.0 * std::exp(I)) < 1e-9);
}

TEST_CASE("dense output is accurate between steps") {
  auto f = [](double t, const Eigen::Vector2d& y) -> Eigen::Vector2d {
    return {y(1), -y(0) + 0.0 * t};
  };
  std::vector<double> ts;
  for (int k = 0; k <= 100; ++k) ts.push_back(0.1 * k);
  auto ys = integrate_sampled(f, 0.0, Eigen::Vector2d(1.0, 0.0), 10.0, ts, OdeOptions{});
  REQUIRE(ys.size() == ts.size());
  double worst = 0;
  for (std::size_t k = 0; k < ts.size(); ++k)
    worst = std::max(worst, std::abs(ys[k](0) - std::cos(ts[k])));
  CHECK(worst < 1e-8);
}

TEST_CASE("backward spans are rejected and empty spans are identity") {
  auto f = [](double, const Eigen::Vector2d& y) -> Eigen::Vector2d { return y; };
  CHECK_THROWS_AS(integrate(f, 1.0, Eigen::Vector2d(1, 1), 0.0, OdeOptions{}), PreconditionError);
  Eigen::Vector2d y = integrate(f, 1.0, Eigen::Vector2d(1, 2), 1.0, OdeOptions{});
  CHECK(y(1) == 2.0);
}

TEST_CASE("finite-time blow-up is reported") {
  using V = Eigen::Matrix<double, 1, 1>;
  auto f = [](double, const V& y) -> V { return y.cwiseProduct(y); };
  CHECK_THROWS_AS(integrate(f, 0.0, V(1.0), 2.0, OdeOptions{}), NumericalError);
}
