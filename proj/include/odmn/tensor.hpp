#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "odmn/error.hpp"

namespace odmn {

template <typename T> using Mat3T = Eigen::Matrix<T, 3, 3>;
template <typename T> using Vec3T = Eigen::Matrix<T, 3, 1>;
template <typename T> using Mat6T = Eigen::Matrix<T, 6, 6>;
template <typename T> using Vec6T = Eigen::Matrix<T, 6, 1>;

using Mat3 = Mat3T<double>;
using Vec3 = Vec3T<double>;
using Mat6 = Mat6T<double>;
using Vec6 = Vec6T<double>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Symmetric 6x6 elastic stiffness in Voigt order (11,22,33,23,13,12).
using StiffnessMatrix = Mat6;

/// Tait-Bryan angles in radians. The crystal frame is rotated about x by
/// alpha, then about the fixed y axis by beta, then about the fixed z axis
/// by gamma.
struct RotationAngles {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

enum class VoigtKind { stress, strain };

/// Six-component Voigt vector. Strain vectors store engineering shears.
struct Voigt6 {
  Vec6 values = Vec6::Zero();
  VoigtKind kind = VoigtKind::stress;
};

/// Voigt index -> tensor index pair, 0-based, order (11,22,33,23,13,12).
inline constexpr std::array<std::array<int, 2>, 6> kVoigtPairs{
    {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};

/// Tensor index pair -> Voigt index.
inline constexpr int voigt_index(int i, int j) {
  if (i == j) return i;
  return 6 - i - j;
}

inline Voigt6 to_voigt(const Mat3 &t, VoigtKind kind) {
  Voigt6 v;
  v.kind = kind;
  const double shear = kind == VoigtKind::strain ? 2.0 : 1.0;
  for (int I = 0; I < 6; ++I) {
    const auto [i, j] = kVoigtPairs[I];
    v.values[I] = (i == j ? 1.0 : shear) * 0.5 * (t(i, j) + t(j, i));
  }
  return v;
}

inline Mat3 from_voigt(const Voigt6 &v) {
  Mat3 t;
  const double shear = v.kind == VoigtKind::strain ? 0.5 : 1.0;
  for (int I = 0; I < 6; ++I) {
    const auto [i, j] = kVoigtPairs[I];
    const double value = (i == j ? 1.0 : shear) * v.values[I];
    t(i, j) = value;
    t(j, i) = value;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Rotations

template <typename T> Mat3T<T> axis_rotation(int axis, T angle) {
  using std::cos;
  using std::sin;
  const T c = cos(angle);
  const T s = sin(angle);
  Mat3T<T> r = Mat3T<T>::Identity();
  const int a = (axis + 1) % 3;
  const int b = (axis + 2) % 3;
  r(a, a) = c;
  r(a, b) = -s;
  r(b, a) = s;
  r(b, b) = c;
  return r;
}

/// R = Rz(gamma) Ry(beta) Rx(alpha); maps crystal-frame vectors to the
/// specimen frame.
template <typename T> Mat3T<T> rotation_matrix_from_angles(T alpha, T beta, T gamma) {
  return axis_rotation<T>(2, gamma) * axis_rotation<T>(1, beta) * axis_rotation<T>(0, alpha);
}

inline Mat3 rotation_matrix_from_angles(const RotationAngles &a) {
  return rotation_matrix_from_angles<double>(a.alpha, a.beta, a.gamma);
}

namespace detail {

// Voigt slots of the in-plane block (two normals and their shear) and of the
// out-of-plane shear pair for a rotation about each axis. Ordered so that
// the block matrices below use the textbook sign layout.
struct AxisSlots {
  std::array<int, 3> in;
  std::array<int, 2> out;
  // The printed y-axis blocks run (33,11,13) in reverse cyclic order, which
  // flips the sense of the angle.
  int angle_sign;
};

inline constexpr std::array<AxisSlots, 3> kAxisSlots{{
    {{1, 2, 3}, {4, 5}, 1},
    {{0, 2, 4}, {3, 5}, -1},
    {{0, 1, 5}, {3, 4}, 1},
}};

} // namespace detail

/// One per-axis factor of the Voigt rotation. `strain` selects the
/// engineering-strain variant of the in-plane block. The factor represents
/// the active rotation of a tensor by axis_rotation(axis, angle).
template <typename T> Mat6T<T> voigt_axis_factor(int axis, T angle, bool strain) {
  using std::cos;
  using std::sin;
  const auto &slots = detail::kAxisSlots[axis];
  // Block placements take the negated angle: a printed block with angle t
  // rotates tensors by R(-t).
  const T t = -T(slots.angle_sign) * angle;
  const T c = cos(t);
  const T s = sin(t);
  const T shear_up = strain ? T(1) : T(2);
  const T shear_down = strain ? T(2) : T(1);
  Mat6T<T> m = Mat6T<T>::Zero();
  const std::array<std::array<T, 3>, 3> in{{
      {c * c, s * s, shear_up * s * c},
      {s * s, c * c, -shear_up * s * c},
      {-shear_down * s * c, shear_down * s * c, c * c - s * s},
  }};
  for (int r = 0; r < 3; ++r)
    for (int q = 0; q < 3; ++q) m(slots.in[r], slots.in[q]) = in[r][q];
  m(slots.out[0], slots.out[0]) = c;
  m(slots.out[0], slots.out[1]) = -s;
  m(slots.out[1], slots.out[0]) = s;
  m(slots.out[1], slots.out[1]) = c;
  m(axis, axis) = T(1);
  return m;
}

/// Derivative generator: d/dangle voigt_axis_factor(axis, angle) equals
/// voigt_axis_factor(axis, angle) * voigt_axis_generator(axis).
inline Mat6 voigt_axis_generator(int axis, bool strain) {
  const auto &slots = detail::kAxisSlots[axis];
  const double sign = -double(slots.angle_sign);
  const double shear_up = strain ? 1.0 : 2.0;
  const double shear_down = strain ? 2.0 : 1.0;
  Mat6 g = Mat6::Zero();
  g(slots.in[0], slots.in[2]) = sign * shear_up;
  g(slots.in[1], slots.in[2]) = -sign * shear_up;
  g(slots.in[2], slots.in[0]) = -sign * shear_down;
  g(slots.in[2], slots.in[1]) = sign * shear_down;
  g(slots.out[0], slots.out[1]) = -sign;
  g(slots.out[1], slots.out[0]) = sign;
  return g;
}

template <typename T> Mat6T<T> build_stress_rotation(T alpha, T beta, T gamma) {
  return voigt_axis_factor<T>(2, gamma, false) * voigt_axis_factor<T>(1, beta, false) *
         voigt_axis_factor<T>(0, alpha, false);
}

template <typename T> Mat6T<T> build_strain_rotation(T alpha, T beta, T gamma) {
  return voigt_axis_factor<T>(2, gamma, true) * voigt_axis_factor<T>(1, beta, true) *
         voigt_axis_factor<T>(0, alpha, true);
}

inline Mat6 build_stress_rotation(const RotationAngles &a) {
  return build_stress_rotation<double>(a.alpha, a.beta, a.gamma);
}

inline Mat6 build_strain_rotation(const RotationAngles &a) {
  return build_strain_rotation<double>(a.alpha, a.beta, a.gamma);
}

/// C_R = R1 C R2^{-1}. The strain rotation satisfies R2^{-1} = R1^T, so the
/// product is formed as R1 C R1^T, which keeps the result symmetric.
template <typename T>
Mat6T<T> rotate_stiffness(const Mat6T<T> &c, T alpha, T beta, T gamma) {
  const Mat6T<T> r1 = build_stress_rotation<T>(alpha, beta, gamma);
  return r1 * c * r1.transpose();
}

inline StiffnessMatrix rotate_stiffness(const StiffnessMatrix &c, const RotationAngles &a) {
  return rotate_stiffness<double>(c, a.alpha, a.beta, a.gamma);
}

// ---------------------------------------------------------------------------
// Fourth-order tensors

/// Dense 3x3x3x3 tensor, index (i,j,k,l) stored at ((i*3+j)*3+k)*3+l.
struct Tensor4 {
  std::array<double, 81> data{};

  double &operator()(int i, int j, int k, int l) { return data[((i * 3 + j) * 3 + k) * 3 + l]; }
  double operator()(int i, int j, int k, int l) const {
    return data[((i * 3 + j) * 3 + k) * 3 + l];
  }

  static Tensor4 identity() {
    Tensor4 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j, i, j) = 1.0;
    return t;
  }
};

/// mat(T)_{pq} = T_{ijkl} with p = i + 3j, q = k + 3l.
inline Mat9 mat_fourth_order(const Tensor4 &t) {
  Mat9 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) m(i + 3 * j, k + 3 * l) = t(i, j, k, l);
  return m;
}

inline Tensor4 unmat_fourth_order(const Mat9 &m) {
  Tensor4 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) t(i, j, k, l) = m(i + 3 * j, k + 3 * l);
  return t;
}

/// Column-major vectorization, vec(A)[i + 3j] = A(i,j).
inline Vec9 vec9(const Mat3 &a) {
  Vec9 v;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) v[i + 3 * j] = a(i, j);
  return v;
}

inline Mat3 unvec9(const Vec9 &v) {
  Mat3 a;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) a(i, j) = v[i + 3 * j];
  return a;
}

/// Expands a Voigt stiffness to its fourth-order tensor (major and minor
/// symmetric).
inline Tensor4 stiffness_to_tensor(const StiffnessMatrix &c) {
  Tensor4 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) t(i, j, k, l) = c(voigt_index(i, j), voigt_index(k, l));
  return t;
}

/// Packs a fourth-order tensor into Voigt form, averaging over minor
/// symmetric partners.
inline StiffnessMatrix tensor_to_stiffness(const Tensor4 &t) {
  StiffnessMatrix c;
  for (int I = 0; I < 6; ++I) {
    const auto [i, j] = kVoigtPairs[I];
    for (int J = 0; J < 6; ++J) {
      const auto [k, l] = kVoigtPairs[J];
      c(I, J) = 0.25 * (t(i, j, k, l) + t(j, i, k, l) + t(i, j, l, k) + t(j, i, l, k));
    }
  }
  return c;
}

inline Tensor4 rotate_tensor4(const Tensor4 &c, const Mat3 &r) {
  // Four successive single-index contractions keep this at 4*3^5 flops.
  Tensor4 a, b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double s = 0;
          for (int m = 0; m < 3; ++m) s += r(l, m) * c(i, j, k, m);
          a(i, j, k, l) = s;
        }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double s = 0;
          for (int m = 0; m < 3; ++m) s += r(k, m) * a(i, j, m, l);
          b(i, j, k, l) = s;
        }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double s = 0;
          for (int m = 0; m < 3; ++m) s += r(j, m) * b(i, m, k, l);
          a(i, j, k, l) = s;
        }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double s = 0;
          for (int m = 0; m < 3; ++m) s += r(i, m) * a(m, j, k, l);
          b(i, j, k, l) = s;
        }
  return b;
}

/// Independent check of rotate_stiffness: C'_{ijkl} = R_ia R_jb R_kc R_ld C_abcd.
inline StiffnessMatrix tensor_rotate_oracle(const StiffnessMatrix &c, const Mat3 &r) {
  if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-10 || r.determinant() < 0.0)
    throw NumericalError("tensor_rotate_oracle: matrix is not a proper rotation");
  return tensor_to_stiffness(rotate_tensor4(stiffness_to_tensor(c), r));
}

// ---------------------------------------------------------------------------
// Polar decomposition

struct PolarDecomposition {
  Mat3 rotation;
  Mat3 stretch;
};

/// F = R U from the singular value decomposition F = W S V^T.
inline PolarDecomposition polar_decompose(const Mat3 &f) {
  const double det = f.determinant();
  if (!(det > 0.0)) throw NumericalError("non-invertible deformation");
  const Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  if (!(sigma[2] > 1e-14 * sigma[0])) throw NumericalError("non-invertible deformation");
  const Mat3 &w = svd.matrixU();
  const Mat3 &v = svd.matrixV();
  // det F > 0 makes det(W V^T) = +1.
  const Mat3 r = w * v.transpose();
  Mat3 u = v * sigma.asDiagonal() * v.transpose();
  u = 0.5 * (u + u.transpose()).eval();
  return {r, u};
}

/// Isotropic stiffness from Lame constants.
inline StiffnessMatrix isotropic_stiffness(double lambda, double mu) {
  StiffnessMatrix c = StiffnessMatrix::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c(i, j) = lambda;
    c(i, i) = lambda + 2.0 * mu;
    c(i + 3, i + 3) = mu;
  }
  return c;
}

/// Cubic stiffness in the crystal frame.
inline StiffnessMatrix cubic_stiffness(double c11, double c12, double c44) {
  StiffnessMatrix c = StiffnessMatrix::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c(i, j) = c12;
    c(i, i) = c11;
    c(i + 3, i + 3) = c44;
  }
  return c;
}

inline double relative_frobenius(const Mat6 &a, const Mat6 &reference) {
  return (a - reference).norm() / reference.norm();
}

} // namespace odmn
