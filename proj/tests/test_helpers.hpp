#pragma once

#include <numbers>

#include "odmn/network.hpp"
#include "odmn/tensor.hpp"

namespace odmn::testing {

inline RotationAngles random_angles(Rng &rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return {rng.uniform(-two_pi, two_pi), rng.uniform(-two_pi, two_pi), rng.uniform(-two_pi, two_pi)};
}

inline Mat3 random_matrix(Rng &rng, double lo = -1.0, double hi = 1.0) {
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i) = rng.uniform(lo, hi);
  return m;
}

inline Mat3 random_symmetric(Rng &rng) {
  const Mat3 m = random_matrix(rng);
  return 0.5 * (m + m.transpose());
}

/// Symmetric positive definite stiffness with a random eigenbasis.
inline StiffnessMatrix random_spd_stiffness(Rng &rng, double lo = 1.0, double hi = 100.0) {
  Mat6 a;
  for (int i = 0; i < 36; ++i) a(i) = rng.uniform(-1.0, 1.0);
  const Eigen::HouseholderQR<Mat6> qr(a);
  const Mat6 q = qr.householderQ();
  Vec6 d;
  for (int i = 0; i < 6; ++i) d[i] = rng.uniform(lo, hi);
  const Mat6 c = q * d.asDiagonal() * q.transpose();
  return 0.5 * (c + c.transpose());
}

inline Vec3 random_unit(Rng &rng) {
  Vec3 v;
  do {
    for (int i = 0; i < 3; ++i) v[i] = rng.uniform(-1.0, 1.0);
  } while (v.norm() < 0.1 || v.norm() > 1.0);
  return v.normalized();
}

} // namespace odmn::testing
