#include <gtest/gtest.h>

#include <numbers>

#include "odmn/tensor.hpp"
#include "test_helpers.hpp"

using namespace odmn;
using odmn::testing::random_angles;

namespace {

constexpr double pi = std::numbers::pi;

// Work density sigma : eps computed with 3x3 tensors.
double tensor_work(const Mat3 &sigma, const Mat3 &eps) { return (sigma.array() * eps.array()).sum(); }

} // namespace

TEST(StressRotation, IdentityAtZeroAngles) {
  EXPECT_LT((build_stress_rotation({0, 0, 0}) - Mat6::Identity()).norm(), 1e-15);
  EXPECT_LT((build_strain_rotation({0, 0, 0}) - Mat6::Identity()).norm(), 1e-15);
}

TEST(StressRotation, MatchesTensorRotationOfStressAndStrain) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const RotationAngles a = random_angles(rng);
    const Mat3 r = rotation_matrix_from_angles(a);
    const Mat3 sigma = odmn::testing::random_symmetric(rng);
    const Mat3 eps = odmn::testing::random_symmetric(rng);
    const Vec6 s_rot = build_stress_rotation(a) * to_voigt(sigma, VoigtKind::stress).values;
    const Vec6 e_rot = build_strain_rotation(a) * to_voigt(eps, VoigtKind::strain).values;
    const Mat3 sigma_ref = r * sigma * r.transpose();
    const Mat3 eps_ref = r * eps * r.transpose();
    EXPECT_LT((s_rot - to_voigt(sigma_ref, VoigtKind::stress).values).norm(), 1e-13);
    EXPECT_LT((e_rot - to_voigt(eps_ref, VoigtKind::strain).values).norm(), 1e-13);
    // Work pairing is preserved.
    EXPECT_NEAR(s_rot.dot(e_rot), tensor_work(sigma, eps), 1e-13);
  }
}

TEST(StressRotation, HalfTurnAboutXFlipsTwoShears) {
  Vec6 sigma;
  sigma << 1, 2, 3, 4, 5, 6;
  const Vec6 out = build_stress_rotation({pi, 0, 0}) * sigma;
  Vec6 expected;
  expected << 1, 2, 3, 4, -5, -6;
  EXPECT_LT((out - expected).norm(), 1e-13);
}

TEST(StrainRotation, IsScaledConjugateOfStressRotation) {
  Rng rng(5);
  const Vec6 d_diag = (Vec6() << 1, 1, 1, 2, 2, 2).finished();
  const Mat6 d = d_diag.asDiagonal();
  for (int trial = 0; trial < 20; ++trial) {
    const RotationAngles a = random_angles(rng);
    const Mat6 r1 = build_stress_rotation(a);
    const Mat6 r2 = build_strain_rotation(a);
    EXPECT_LT((r2 - d * r1 * d.inverse()).norm(), 1e-12);
    EXPECT_LT((r1.inverse().transpose() - r2).norm(), 1e-12);
  }
}

TEST(AxisFactor, GeneratorGivesExactDerivative) {
  for (int axis = 0; axis < 3; ++axis) {
    for (double angle : {-2.1, 0.0, 0.4, 3.0}) {
      const double h = 1e-6;
      const Mat6 fd = (voigt_axis_factor<double>(axis, angle + h, false) -
                       voigt_axis_factor<double>(axis, angle - h, false)) /
                      (2 * h);
      const Mat6 exact = voigt_axis_factor<double>(axis, angle, false) * voigt_axis_generator(axis, false);
      EXPECT_LT((fd - exact).norm(), 1e-8) << "axis " << axis;
    }
  }
}

TEST(RotateStiffness, ZeroAnglesIsIdentity) {
  Rng rng(3);
  const StiffnessMatrix c = odmn::testing::random_spd_stiffness(rng);
  EXPECT_LT((rotate_stiffness(c, {0, 0, 0}) - c).norm(), 1e-13);
}

TEST(RotateStiffness, CubicInvariantUnderQuarterTurns) {
  const StiffnessMatrix c = cubic_stiffness(191.0, 162.0, 42.2);
  for (const RotationAngles a : {RotationAngles{pi / 2, 0, 0}, RotationAngles{0, pi / 2, 0},
                                 RotationAngles{0, 0, pi / 2}, RotationAngles{pi / 2, pi, -pi / 2}}) {
    EXPECT_LT(relative_frobenius(rotate_stiffness(c, a), c), 1e-12);
  }
}

TEST(RotateStiffness, AgreesWithFourthOrderOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const StiffnessMatrix c = odmn::testing::random_spd_stiffness(rng);
    const RotationAngles a = random_angles(rng);
    const StiffnessMatrix fast = rotate_stiffness(c, a);
    const StiffnessMatrix oracle = tensor_rotate_oracle(c, rotation_matrix_from_angles(a));
    EXPECT_LT(relative_frobenius(fast, oracle), 1e-10);
  }
}

TEST(RotateStiffness, PreservesSymmetryDefinitenessAndInverts) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const StiffnessMatrix c = odmn::testing::random_spd_stiffness(rng);
    const RotationAngles a = random_angles(rng);
    const StiffnessMatrix cr = rotate_stiffness(c, a);
    EXPECT_LT((cr - cr.transpose()).norm() / cr.norm(), 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat6>(cr).eigenvalues().minCoeff(), 0.0);
    // Undo with the transposed 3x3 rotation through the oracle.
    const StiffnessMatrix back = tensor_rotate_oracle(cr, rotation_matrix_from_angles(a).transpose());
    EXPECT_LT(relative_frobenius(back, c), 1e-10);
    // Undo with reversed negated angles.
    const Mat6 r1 = build_stress_rotation(a);
    EXPECT_LT(relative_frobenius(r1.inverse() * cr * r1.inverse().transpose(), c), 1e-10);
  }
}

TEST(RotationMatrix, Basics) {
  EXPECT_LT((rotation_matrix_from_angles({0, 0, 0}) - Mat3::Identity()).norm(), 1e-15);
  const Vec3 e2 = rotation_matrix_from_angles({0, 0, pi / 2}) * Vec3::UnitX();
  EXPECT_LT((e2 - Vec3::UnitY()).norm(), 1e-15);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 r = rotation_matrix_from_angles(random_angles(rng));
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-14);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
  }
}

TEST(PolarDecompose, KnownCases) {
  auto pd = polar_decompose(Mat3::Identity());
  EXPECT_LT((pd.rotation - Mat3::Identity()).norm(), 1e-14);
  EXPECT_LT((pd.stretch - Mat3::Identity()).norm(), 1e-14);

  const Mat3 rz = axis_rotation<double>(2, pi / 6);
  pd = polar_decompose(rz);
  EXPECT_LT((pd.rotation - rz).norm(), 1e-14);
  EXPECT_LT((pd.stretch - Mat3::Identity()).norm(), 1e-14);

  const Mat3 f = Vec3(1.1, 1.0, 0.9).asDiagonal();
  pd = polar_decompose(f);
  EXPECT_LT((pd.rotation - Mat3::Identity()).norm(), 1e-14);
  EXPECT_LT((pd.stretch - f).norm(), 1e-14);
}

TEST(PolarDecompose, RandomDeformations) {
  Rng rng(99);
  int done = 0;
  while (done < 1000) {
    const Mat3 f = odmn::testing::random_matrix(rng);
    if (f.determinant() <= 0.0) continue;
    ++done;
    const auto pd = polar_decompose(f);
    EXPECT_LT((f - pd.rotation * pd.stretch).norm() / f.norm(), 1e-12);
    EXPECT_LT((pd.rotation.transpose() * pd.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(pd.rotation.determinant(), 1.0, 1e-12);
    EXPECT_LT((pd.stretch - pd.stretch.transpose()).norm(), 1e-12 * f.norm());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat3>(pd.stretch).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(PolarDecompose, RejectsNonInvertible) {
  EXPECT_THROW(polar_decompose(Mat3::Zero()), NumericalError);
  EXPECT_THROW(polar_decompose(Vec3(-1.0, 1.0, 1.0).asDiagonal().toDenseMatrix()), NumericalError);
}

TEST(MatFourthOrder, IndexMapping) {
  EXPECT_EQ((mat_fourth_order(Tensor4::identity()) - Mat9::Identity()).norm(), 0.0);
  Tensor4 t;
  t(1, 2, 0, 1) = 5.0;
  const Mat9 m = mat_fourth_order(t);
  EXPECT_EQ(m(7, 3), 5.0);
  EXPECT_EQ(m.cwiseAbs().sum(), 5.0);

  Rng rng(4);
  Tensor4 r;
  for (double &x : r.data) x = rng.uniform();
  EXPECT_EQ(unmat_fourth_order(mat_fourth_order(r)).data, r.data);
}

TEST(TensorRotateOracle, IdentityIsotropyAndRejection) {
  Rng rng(8);
  const StiffnessMatrix c = odmn::testing::random_spd_stiffness(rng);
  EXPECT_LT(relative_frobenius(tensor_rotate_oracle(c, Mat3::Identity()), c), 1e-14);
  const StiffnessMatrix iso = isotropic_stiffness(60.0, 26.0);
  EXPECT_LT(relative_frobenius(tensor_rotate_oracle(iso, rotation_matrix_from_angles(random_angles(rng))), iso),
            1e-13);
  EXPECT_THROW(tensor_rotate_oracle(c, 2.0 * Mat3::Identity()), NumericalError);
}

TEST(Voigt, StrainRoundTripKeepsEngineeringShear) {
  Mat3 eps;
  eps << 1, 0.5, 0.25, 0.5, 2, 0.125, 0.25, 0.125, 3;
  const Voigt6 v = to_voigt(eps, VoigtKind::strain);
  EXPECT_EQ(v.values[3], 0.25);
  EXPECT_EQ(v.values[5], 1.0);
  EXPECT_LT((from_voigt(v) - eps).norm(), 1e-15);
}
