#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "odmn/texture.hpp"
#include "test_helpers.hpp"

using namespace odmn;

namespace {

constexpr double kPi = std::numbers::pi;

Quat axis_angle(const Vec3 &axis, double angle) {
  return quat_from_matrix(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
}

OrientationSamples random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  OrientationSamples out;
  for (std::size_t k = 0; k < n; ++k) out.push_back({random_quat(rng), rng.uniform(0.5, 1.5)});
  return out;
}

/// Brute-force estimate: every grid point against every symmetric
/// equivalent, no spatial binning or cutoff.
std::vector<double> brute_force_odf(const OrientationSamples &s, const OrientationGrid &g, double halfwidth) {
  const double kappa = 0.5 * std::log(0.5) / std::log(std::cos(0.5 * halfwidth));
  std::vector<double> f(g.size(), 0.0);
  double integral = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto &x : s) f[i] += x.weight * std::pow(std::cos(0.5 * misorientation(g.q[i], x.q)), 2.0 * kappa);
    integral += g.weight[i] * f[i];
  }
  for (double &v : f) v /= integral;
  return f;
}

const std::shared_ptr<const OrientationGrid> &coarse_grid() {
  static const auto g = make_orientation_grid(60);
  return g;
}

} // namespace

TEST(Quaternion, MatrixRoundTrip) {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const Mat3 r = rotation_matrix_from_angles(odmn::testing::random_angles(rng));
    const Quat q = quat_from_matrix(r);
    EXPECT_NEAR(q.norm(), 1.0, 1e-14);
    EXPECT_GE(q[0], 0.0);
    EXPECT_LT((quat_to_matrix(q) - r).norm(), 1e-13);
  }
}

TEST(Quaternion, ProductComposesRotations) {
  Rng rng(2);
  const Quat a = random_quat(rng), b = random_quat(rng);
  EXPECT_LT((quat_to_matrix(quat_multiply(a, b)) - quat_to_matrix(a) * quat_to_matrix(b)).norm(), 1e-13);
}

TEST(CubicSymmetry, IsAGroupOfTwentyFour) {
  const auto &ops = cubic_symmetry();
  EXPECT_LT((ops[0] - Quat(1, 0, 0, 0)).norm(), 1e-15);
  const auto index_of = [&](const Quat &q) {
    for (std::size_t k = 0; k < ops.size(); ++k)
      if ((ops[k] - q).norm() < 1e-12 || (ops[k] + q).norm() < 1e-12) return int(k);
    return -1;
  };
  for (std::size_t a = 0; a < 24; ++a) {
    EXPECT_EQ(index_of(ops[a]), int(a));
    for (std::size_t b = 0; b < 24; ++b) EXPECT_GE(index_of(quat_multiply(ops[a], ops[b])), 0);
    const Mat3 m = quat_to_matrix(ops[a]);
    EXPECT_LT((m.cwiseAbs() - m.cwiseAbs().array().round().matrix()).norm(), 1e-14);
  }
}

TEST(Misorientation, KnownAngles) {
  const Quat id(1, 0, 0, 0);
  EXPECT_NEAR(misorientation(id, axis_angle(Vec3::UnitZ(), kPi / 2)), 0.0, 1e-7);
  EXPECT_NEAR(misorientation(id, axis_angle(Vec3::UnitZ(), degrees(30))), degrees(30), 1e-12);
  EXPECT_NEAR(misorientation(id, axis_angle(Vec3::UnitZ(), degrees(60))), degrees(30), 1e-12);
  EXPECT_NEAR(misorientation(id, axis_angle(Vec3(1, 1, 1), degrees(60))), degrees(60), 1e-12);
  Rng rng(3);
  const Quat a = random_quat(rng), b = random_quat(rng);
  EXPECT_NEAR(misorientation(a, b), misorientation(b, a), 1e-12);
  EXPECT_NEAR(misorientation(a, b), misorientation(a, quat_multiply(b, cubic_symmetry()[7])), 1e-12);
}

TEST(FundamentalZone, RepresentativeIsEquivalentAndSmall) {
  Rng rng(4);
  const double max_angle = 2.0 * std::acos((2.0 + std::sqrt(2.0)) / 4.0);
  for (int k = 0; k < 500; ++k) {
    const Quat q = random_quat(rng);
    const Quat r = to_fundamental_zone(q);
    EXPECT_LT(misorientation(q, r), 1e-7);
    EXPECT_LE(quat_angle(r), max_angle + 1e-12);
  }
}

TEST(OrientationsFromParams, AnglesAndWeights) {
  Rng rng(5);
  ParameterSet p = init_parameters(3, rng);
  p.alpha[0] = p.beta[0] = p.gamma[0] = 0.0;
  const auto s = orientations_from_params(p);
  ASSERT_EQ(s.size(), 8u);
  EXPECT_LT((s[0].q - Quat(1, 0, 0, 0)).norm(), 1e-15);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s[i].q.norm(), 1.0, 1e-12);
    EXPECT_GT(s[i].weight, 0.0);
    EXPECT_DOUBLE_EQ(s[i].weight, node_weight(p.z[i]));
    EXPECT_LT((quat_to_matrix(s[i].q) - rotation_matrix_from_angles(p.angles(i))).norm(), 1e-13);
  }
}

TEST(Grid, CoversTheFundamentalZoneWithUnitWeight) {
  const auto &g = coarse_grid();
  const double full = double(std::lround(60.0 * 60.0 / kPi)) * 60.0;
  EXPECT_NEAR(double(g->size()) / full, 1.0 / 24.0, 0.05 / 24.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    sum += g->weight[i];
    EXPECT_LT((to_fundamental_zone(g->q[i]) - g->q[i]).norm(), 1e-12);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(double(make_orientation_grid(kDefaultGridCirclePoints)->size()), 5e4, 2e3);
}

TEST(Odf, SingleOrientationPeaksAtItsCell) {
  const auto &g = coarse_grid();
  Rng rng(6);
  const Quat q = random_quat(rng);
  const ODFGrid f = odf_estimate({{q, 1.0}}, g);
  std::size_t nearest = 0;
  double best = 10.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double w = misorientation(g->q[i], q);
    if (w < best) best = w, nearest = i;
  }
  EXPECT_EQ(std::size_t(std::max_element(f.density.begin(), f.density.end()) - f.density.begin()), nearest);
  EXPECT_NEAR(f.integral(), 1.0, 1e-12);
}

TEST(Odf, MatchesBruteForceOracle) {
  const auto &g = coarse_grid();
  const auto cloud = random_cloud(5, 7);
  const ODFGrid f = odf_estimate(cloud, g);
  const auto oracle = brute_force_odf(cloud, *g, degrees(10));
  double worst = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    worst = std::max(worst, std::abs(f.density[i] - oracle[i]));
    peak = std::max(peak, oracle[i]);
  }
  EXPECT_LT(worst / peak, 1e-10);
}

TEST(Odf, WeightScalingLeavesDensityUnchanged) {
  auto cloud = random_cloud(6, 8);
  const ODFGrid a = odf_estimate(cloud, coarse_grid());
  for (auto &s : cloud) s.weight *= 2.0;
  const ODFGrid b = odf_estimate(cloud, coarse_grid());
  for (std::size_t i = 0; i < a.density.size(); ++i) EXPECT_NEAR(a.density[i], b.density[i], 1e-12 * (1 + a.density[i]));
}

TEST(Odf, UniformSamplesGiveFlatDensity) {
  Rng rng(9);
  OrientationSamples cloud;
  for (int k = 0; k < 10000; ++k) cloud.push_back({random_quat(rng), 1.0});
  const ODFGrid f = odf_estimate(cloud, coarse_grid());
  const auto [lo, hi] = std::minmax_element(f.density.begin(), f.density.end());
  EXPECT_GT(*lo, 0.0);
  EXPECT_LT(*hi / *lo, 1.5);
}

TEST(Odf, RejectsBadInput) {
  EXPECT_THROW(odf_estimate({{Quat(1, 0, 0, 0), 0.0}}, coarse_grid()), DataError);
  EXPECT_THROW(odf_estimate({}, coarse_grid()), DataError);
  EXPECT_THROW(odf_estimate({{Quat(1, 1, 0, 0), 1.0}}, coarse_grid()), DataError);
  EXPECT_THROW(odf_estimate({{Quat(1, 0, 0, 0), -1.0}}, coarse_grid()), DataError);
  EXPECT_THROW(make_orientation_grid(2), UsageError);
}

TEST(TextureIndex, IdentityZeroAndRatioSemantics) {
  const ODFGrid a = odf_estimate(random_cloud(8, 10), coarse_grid());
  const ODFGrid b = odf_estimate(random_cloud(8, 11), coarse_grid());
  EXPECT_EQ(texture_index_diff(b, b), 0.0);
  ODFGrid zero = a;
  std::fill(zero.density.begin(), zero.density.end(), 0.0);
  EXPECT_DOUBLE_EQ(texture_index_diff(zero, b), 1.0);
  EXPECT_THROW(texture_index_diff(b, zero), DataError);

  const double t = texture_index_diff(a, b);
  EXPECT_GT(t, 0.0);
  ODFGrid a2 = a, b2 = b;
  for (double &d : a2.density) d *= 3.0;
  for (double &d : b2.density) d *= 3.0;
  EXPECT_NEAR(texture_index_diff(a2, b2), t, 1e-12 * t);
  EXPECT_GT(std::abs(texture_index_diff(a2, b) - t), 1e-3);

  const ODFGrid other = odf_estimate(random_cloud(8, 10), make_orientation_grid(40));
  EXPECT_THROW(texture_index_diff(a, other), DataError);
}

TEST(TextureIndex, SixtyDegreePairBaseline) {
  const auto &g = coarse_grid();
  const Quat q0(1, 0, 0, 0);
  const Quat q1 = axis_angle(Vec3(1, 1, 1), degrees(60));
  ASSERT_NEAR(misorientation(q0, q1), degrees(60), 1e-12);
  const ODFGrid a = odf_estimate({{q0, 1.0}}, g);
  const ODFGrid b = odf_estimate({{q1, 1.0}}, g);
  const auto oa = brute_force_odf({{q0, 1.0}}, *g, degrees(10));
  const auto ob = brute_force_odf({{q1, 1.0}}, *g, degrees(10));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    num += g->weight[i] * (oa[i] - ob[i]) * (oa[i] - ob[i]);
    den += g->weight[i] * ob[i] * ob[i];
  }
  const double t = texture_index_diff(a, b);
  EXPECT_NEAR(t, num / den, 1e-9);
  // Well separated kernels barely overlap, so the index is close to 2.
  EXPECT_NEAR(t, 2.0, 0.05);

  // Regression baseline on the default grid.
  const auto fine = make_orientation_grid(kDefaultGridCirclePoints);
  EXPECT_NEAR(texture_index_diff(odf_estimate({{q0, 1.0}}, fine), odf_estimate({{q1, 1.0}}, fine)), 1.9916738455, 1e-8);
}

TEST(TextureIndex, ConvergesUnderGridRefinement) {
  const auto a = random_cloud(20, 12);
  const auto b = random_cloud(20, 13);
  const auto coarse = make_orientation_grid(kDefaultGridCirclePoints);
  const auto fine = make_orientation_grid(2 * kDefaultGridCirclePoints);
  const double tc = texture_index_diff(odf_estimate(a, coarse), odf_estimate(b, coarse));
  const double tf = texture_index_diff(odf_estimate(a, fine), odf_estimate(b, fine));
  EXPECT_LT(std::abs(tc - tf) / tf, 0.05);
}

TEST(PoleFigure, IdentityCubeAxes) {
  const PoleFigureData pf = pole_figure({{Quat(1, 0, 0, 0), 2.0}}, {0, 0, 1});
  ASSERT_EQ(pf.points.size(), 3u);
  int origin = 0, rim = 0;
  for (const auto &p : pf.points) {
    EXPECT_EQ(p.intensity, 2.0);
    const double r = std::hypot(p.x, p.y);
    if (r < 1e-12) ++origin;
    if (std::abs(r - 1.0) < 1e-12) ++rim;
  }
  EXPECT_EQ(origin, 1);
  EXPECT_EQ(rim, 2);
}

TEST(PoleFigure, PointCountsAndUnitDisk) {
  const auto cloud = random_cloud(7, 14);
  const std::pair<std::array<int, 3>, std::size_t> families[] = {
      {{1, 0, 0}, 3}, {{1, 1, 1}, 4}, {{1, 1, 0}, 6}, {{1, 2, 3}, 24}, {{2, 2, 0}, 6}};
  for (const auto &[hkl, n] : families) {
    const auto pf = pole_figure(cloud, hkl);
    EXPECT_EQ(pf.points.size(), cloud.size() * n);
    for (const auto &p : pf.points) EXPECT_LE(p.x * p.x + p.y * p.y, 1.0);
  }
  EXPECT_THROW(pole_figure(cloud, {0, 0, 0}), UsageError);
}

TEST(PoleFigure, RotationAboutZRotatesTheFigure) {
  auto cloud = random_cloud(5, 15);
  const double t = 0.7;
  const Quat rz = axis_angle(Vec3::UnitZ(), t);
  const auto before = pole_figure(cloud, {1, 1, 1});
  for (auto &s : cloud) s.q = quat_multiply(rz, s.q);
  const auto after = pole_figure(cloud, {1, 1, 1});
  ASSERT_EQ(before.points.size(), after.points.size());
  for (std::size_t k = 0; k < before.points.size(); ++k) {
    const auto &p = before.points[k];
    EXPECT_NEAR(after.points[k].x, std::cos(t) * p.x - std::sin(t) * p.y, 1e-12);
    EXPECT_NEAR(after.points[k].y, std::sin(t) * p.x + std::cos(t) * p.y, 1e-12);
  }
}
