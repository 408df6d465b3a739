#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

namespace fh {

using cplx = std::complex<double>;
inline constexpr cplx kI{0.0, 1.0};
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using CMat3 = Eigen::Matrix<cplx, 3, 3>;

inline bool complex_less(const cplx& a, const cplx& b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

namespace detail {

inline cplx eval_monic_cubic(cplx a, cplx b, cplx c, cplx z) {
  return ((z + a) * z + b) * z + c;
}

inline cplx polish_root(cplx a, cplx b, cplx c, cplx z) {
  // A few guarded Newton steps: only accept a step that lowers the residual,
  // which keeps multiple roots (vanishing derivative) from being thrown off.
  for (int it = 0; it < 4; ++it) {
    cplx p = eval_monic_cubic(a, b, c, z);
    cplx dp = (3.0 * z + 2.0 * a) * z + b;
    if (std::abs(dp) == 0.0) break;
    cplx zn = z - p / dp;
    if (!(std::abs(eval_monic_cubic(a, b, c, zn)) < std::abs(p))) break;
    z = zn;
  }
  return z;
}

}  // namespace detail

// Roots of z^3 + a z^2 + b z + c, sorted by real part then imaginary part.
inline std::array<cplx, 3> cubic_roots(cplx a, cplx b, cplx c) {
  const cplx p = b - a * a / 3.0;
  const cplx q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const cplx disc = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
  cplx s1 = -q / 2.0 + disc;
  cplx s2 = -q / 2.0 - disc;
  cplx s = std::abs(s1) >= std::abs(s2) ? s1 : s2;
  cplx C = std::pow(s, 1.0 / 3.0);
  const cplx omega(-0.5, std::sqrt(3.0) / 2.0);
  std::array<cplx, 3> z{};
  cplx w = 1.0;
  for (int k = 0; k < 3; ++k) {
    cplx t = (std::abs(C) == 0.0) ? cplx(0.0) : w * C - p / (3.0 * w * C);
    z[k] = detail::polish_root(a, b, c, t - a / 3.0);
    w *= omega;
  }
  std::sort(z.begin(), z.end(), complex_less);
  return z;
}

inline std::array<cplx, 3> eigenvalues_3x3(const Mat3& J) {
  const double tr = J.trace();
  const double m2 = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0) + J(0, 0) * J(2, 2) -
                    J(0, 2) * J(2, 0) + J(1, 1) * J(2, 2) - J(1, 2) * J(2, 1);
  const double det = J.determinant();
  return cubic_roots(-tr, m2, -det);
}

// Same-magnitude complex sets compared after sorting; used by tests and checks.
inline double max_set_distance(std::array<cplx, 3> a, std::array<cplx, 3> b) {
  std::sort(b.begin(), b.end(), complex_less);
  double best = 1e300;
  std::array<int, 3> perm{0, 1, 2};
  do {
    double m = 0.0;
    for (int i = 0; i < 3; ++i) m = std::max(m, std::abs(a[i] - b[perm[i]]));
    best = std::min(best, m);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace fh
