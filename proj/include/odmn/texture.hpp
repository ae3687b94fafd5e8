#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <unordered_map>
#include <vector>

#include <Eigen/Geometry>

#include "odmn/error.hpp"
#include "odmn/network.hpp"
#include "odmn/parallel.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

/// Unit quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

inline Quat quat_from_matrix(const Mat3 &r) {
  const Eigen::Quaterniond q(r);
  Quat out(q.w(), q.x(), q.y(), q.z());
  out.normalize();
  return out[0] < 0.0 ? Quat(-out) : out;
}

inline Mat3 quat_to_matrix(const Quat &q) { return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix(); }

/// Hamilton product a * b (rotation b applied first).
inline Quat quat_multiply(const Quat &a, const Quat &b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

/// Rotation angle of q in [0, pi].
inline double quat_angle(const Quat &q) { return 2.0 * std::acos(std::min(1.0, std::abs(q[0]))); }

/// Shortest-arc interpolation; t = 0 gives a, t = 1 gives b.
inline Quat quat_slerp(const Quat &a, const Quat &b, double t) {
  const Eigen::Quaterniond qa(a[0], a[1], a[2], a[3]), qb(b[0], b[1], b[2], b[3]);
  const Eigen::Quaterniond q = qa.slerp(t, qb);
  return {q.w(), q.x(), q.y(), q.z()};
}

/// Haar-uniform random rotation (Shoemake's subgroup algorithm).
inline Quat random_quat(Rng &rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  Quat q(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2), a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));
  return q.normalized();
}

/// The 24 proper rotations of the cube; the identity comes first.
inline const std::array<Quat, 24> &cubic_symmetry() {
  static const std::array<Quat, 24> ops = [] {
    std::array<Quat, 24> out;
    std::size_t k = 0;
    std::array<int, 3> perm{0, 1, 2};
    do {
      for (int signs = 0; signs < 8; ++signs) {
        Mat3 m = Mat3::Zero();
        for (int r = 0; r < 3; ++r) m(r, perm[r]) = (signs >> r & 1) ? -1.0 : 1.0;
        if (m.determinant() > 0.0) out[k++] = quat_from_matrix(m);
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
  }();
  return ops;
}

/// Symmetry-reduced representative: the equivalent q * S with the smallest
/// rotation angle, sign fixed so w >= 0.
inline Quat to_fundamental_zone(const Quat &q) {
  Quat best = q;
  double w = std::abs(q[0]);
  for (const Quat &s : cubic_symmetry()) {
    const Quat c = quat_multiply(q, s);
    if (std::abs(c[0]) > w + 1e-15) {
      w = std::abs(c[0]);
      best = c;
    }
  }
  return best[0] < 0.0 ? Quat(-best) : best;
}

/// Smallest rotation angle between a and b over the cubic equivalents of b.
inline double misorientation(const Quat &a, const Quat &b) {
  double dot = 0.0;
  for (const Quat &s : cubic_symmetry()) dot = std::max(dot, std::abs(a.dot(quat_multiply(b, s))));
  return 2.0 * std::acos(std::min(1.0, dot));
}

struct OrientationSample {
  Quat q = Quat(1, 0, 0, 0);
  double weight = 1.0;
};

using OrientationSamples = std::vector<OrientationSample>;

/// Node orientations and weights of a parameter set.
inline OrientationSamples orientations_from_params(const ParameterSet &p) {
  OrientationSamples out(p.num_nodes());
  for (std::size_t i = 0; i < p.num_nodes(); ++i)
    out[i] = {quat_from_matrix(rotation_matrix_from_angles(p.angles(i))), node_weight(p.z[i])};
  return out;
}

/// Current node orientations after deformation, with the given weights.
inline OrientationSamples orientations_from_rotations(const std::vector<Mat3> &rotations,
                                                      const std::vector<double> &weights) {
  if (rotations.size() != weights.size()) throw DataError("rotation and weight counts differ");
  OrientationSamples out(rotations.size());
  for (std::size_t i = 0; i < rotations.size(); ++i) out[i] = {quat_from_matrix(rotations[i]), weights[i]};
  return out;
}

/// Orientations covering the cubic fundamental zone with equal quadrature
/// weights. Built from a Hopf-fibration grid of SO(3): a Fibonacci point set
/// on S^2 times a uniform circle, filtered to the fundamental zone.
struct OrientationGrid {
  int circle_points = 0;
  std::vector<Quat> q;
  std::vector<double> weight;

  std::size_t size() const { return q.size(); }
  /// Approximate point spacing in radians.
  double spacing() const { return 2.0 * std::numbers::pi / circle_points; }
};

inline std::shared_ptr<const OrientationGrid> make_orientation_grid(int circle_points) {
  if (circle_points < 4) throw UsageError("grid needs at least 4 circle points");
  constexpr double pi = std::numbers::pi;
  const int m = circle_points;
  const long sphere = std::max(2L, std::lround(double(m) * m / pi));
  const double golden = pi * (3.0 - std::sqrt(5.0));
  const auto &ops = cubic_symmetry();

  std::vector<std::vector<Quat>> rows(static_cast<std::size_t>(sphere));
  parallel_for(std::size_t(sphere), [&](std::size_t i) {
    const double z = 1.0 - (2.0 * double(i) + 1.0) / double(sphere);
    const double theta = std::acos(z);
    const double phi = std::fmod(golden * double(i), 2.0 * pi);
    const double ct = std::cos(0.5 * theta), st = std::sin(0.5 * theta);
    for (int k = 0; k < m; ++k) {
      const double psi = (k + 0.5) * 2.0 * pi / m;
      const Quat q(ct * std::cos(0.5 * psi), ct * std::sin(0.5 * psi), st * std::cos(phi + 0.5 * psi),
                   st * std::sin(phi + 0.5 * psi));
      // Keep q when no equivalent has a strictly smaller rotation angle.
      const double w = std::abs(q[0]);
      bool inside = true;
      for (std::size_t s = 1; s < ops.size() && inside; ++s)
        inside = std::abs(quat_multiply(q, ops[s])[0]) <= w;
      if (inside) rows[i].push_back(q[0] < 0.0 ? Quat(-q) : q);
    }
  });
  auto grid = std::make_shared<OrientationGrid>();
  grid->circle_points = m;
  for (const auto &r : rows) grid->q.insert(grid->q.end(), r.begin(), r.end());
  grid->weight.assign(grid->q.size(), 1.0 / double(grid->q.size()));
  return grid;
}

/// About 5e4 points in the fundamental zone.
inline constexpr int kDefaultGridCirclePoints = 156;

inline double degrees(double deg) { return deg * std::numbers::pi / 180.0; }

/// Squared-cosine kernel cos^(2 kappa)(w / 2) with K(halfwidth) = K(0) / 2.
struct OdfKernel {
  double halfwidth = degrees(10.0);

  double kappa() const { return 0.5 * std::log(0.5) / std::log(std::cos(0.5 * halfwidth)); }
  /// Unnormalized value from |q_a . q_b| = cos(w / 2).
  double from_dot(double dot) const { return std::pow(std::min(1.0, dot), 2.0 * kappa()); }
  /// Dot product below which the kernel is under 1e-12 of its peak.
  double cutoff_dot() const { return std::exp(std::log(1e-12) / (2.0 * kappa())); }
};

struct ODFGrid {
  std::shared_ptr<const OrientationGrid> grid;
  std::vector<double> density;

  double integral() const {
    double s = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i) s += grid->weight[i] * density[i];
    return s;
  }
};

namespace detail {

/// Buckets grid quaternions into 4-D cells of side radius / 2 for ball
/// queries of the given radius.
class QuatBins {
public:
  QuatBins(const OrientationGrid &g, double radius) : side_(0.5 * radius) {
    for (std::size_t i = 0; i < g.size(); ++i) cells_[key(cell_of(g.q[i]))].push_back(std::uint32_t(i));
    // Neighbour cells whose nearest point can lie within the radius.
    for (int d = 0; d < 625; ++d) {
      std::array<int, 4> o{};
      double gap = 0.0;
      int code = d;
      for (int k = 0; k < 4; ++k, code /= 5) {
        o[k] = code % 5 - 2;
        const double g1 = std::max(0, std::abs(o[k]) - 1) * side_;
        gap += g1 * g1;
      }
      if (gap <= radius * radius) offsets_.push_back(o);
    }
  }

  template <typename Fn> void for_near(const Quat &q, Fn &&fn) const {
    const auto c = cell_of(q);
    for (const auto &o : offsets_) {
      const auto it = cells_.find(key({c[0] + o[0], c[1] + o[1], c[2] + o[2], c[3] + o[3]}));
      if (it == cells_.end()) continue;
      for (std::uint32_t i : it->second) fn(i);
    }
  }

private:
  std::array<int, 4> cell_of(const Quat &q) const {
    std::array<int, 4> c{};
    for (int k = 0; k < 4; ++k) c[k] = int(std::floor((q[k] + 1.0) / side_));
    return c;
  }
  static std::uint64_t key(const std::array<int, 4> &c) {
    std::uint64_t k = 0;
    for (int v : c) k = (k << 16) | std::uint64_t(std::uint16_t(v + 1000));
    return k;
  }

  double side_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
  std::vector<std::array<int, 4>> offsets_;
};

} // namespace detail

/// Kernel density estimate on the fundamental-zone grid, normalized so that
/// the quadrature integral is 1 (uniform texture has density 1).
inline ODFGrid odf_estimate(const OrientationSamples &samples, std::shared_ptr<const OrientationGrid> grid,
                            const OdfKernel &kernel = {}) {
  if (!grid || grid->size() == 0) throw UsageError("empty orientation grid");
  if (!(kernel.halfwidth > 0.0) || kernel.halfwidth >= std::numbers::pi) throw UsageError("bad kernel halfwidth");
  double total_weight = 0.0;
  for (const auto &s : samples) {
    if (!(s.weight >= 0.0) || !std::isfinite(s.weight)) throw DataError("orientation weight must be non-negative");
    if (std::abs(s.q.norm() - 1.0) > 1e-12) throw DataError("orientation quaternion is not normalized");
    total_weight += s.weight;
  }
  if (!(total_weight > 0.0)) throw DataError("orientation weights are all zero");

  const double cut = kernel.cutoff_dot();
  const double radius = std::sqrt(std::max(0.0, 2.0 - 2.0 * cut));
  const detail::QuatBins bins(*grid, radius);
  const auto &ops = cubic_symmetry();
  double min_w = 1.0;
  for (const Quat &g : grid->q) min_w = std::min(min_w, g[0]);

  // Per-sample contributions are computed independently, then summed in a
  // fixed order so the result does not depend on the worker count.
  const std::size_t chunks = std::min<std::size_t>(samples.size(), 8);
  std::vector<std::vector<double>> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> acc(grid->size(), 0.0);
    std::vector<double> best(grid->size(), 0.0);
    std::vector<std::uint32_t> touched;
    for (std::size_t s = samples.size() * c / chunks; s < samples.size() * (c + 1) / chunks; ++s) {
      if (samples[s].weight == 0.0) continue;
      touched.clear();
      for (const Quat &op : ops) {
        Quat v = quat_multiply(samples[s].q, op);
        if (v[0] < 0.0) v = -v;
        // Grid points all have w >= min_w, so far equivalents are skipped.
        if (v[0] < min_w - radius) continue;
        bins.for_near(v, [&](std::uint32_t i) {
          const double dot = grid->q[i].dot(v);
          if (dot < cut) return;
          if (best[i] == 0.0) touched.push_back(i);
          best[i] = std::max(best[i], dot);
        });
      }
      for (std::uint32_t i : touched) {
        acc[i] += samples[s].weight * kernel.from_dot(best[i]);
        best[i] = 0.0;
      }
    }
    partial[c] = std::move(acc);
  });

  ODFGrid odf{grid, std::vector<double>(grid->size(), 0.0)};
  for (const auto &p : partial)
    for (std::size_t i = 0; i < p.size(); ++i) odf.density[i] += p[i];
  const double integral = odf.integral();
  if (!(integral > 0.0)) throw NumericalError("ODF estimate vanished on the grid");
  for (double &d : odf.density) d /= integral;
  return odf;
}

/// Texture index of the difference ODF,
/// sum w (f_a - f_b)^2 / sum w f_b^2, with f_b as the reference.
inline double texture_index_diff(const ODFGrid &a, const ODFGrid &b) {
  if (!a.grid || !b.grid || a.density.size() != b.density.size() ||
      (a.grid != b.grid && (a.grid->q != b.grid->q || a.grid->weight != b.grid->weight)))
    throw DataError("ODF grids differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.density.size(); ++i) {
    const double w = b.grid->weight[i];
    num += w * (a.density[i] - b.density[i]) * (a.density[i] - b.density[i]);
    den += w * b.density[i] * b.density[i];
  }
  if (!(den > 0.0)) throw DataError("reference ODF has zero norm");
  return num / den;
}

struct PolePoint {
  double x = 0.0, y = 0.0, intensity = 0.0;
};

struct PoleFigureData {
  std::array<int, 3> miller{0, 0, 1};
  std::vector<PolePoint> points;
};

/// Distinct crystal directions of the family {hkl}, one per antipodal pair.
inline std::vector<Vec3> pole_family(const std::array<int, 3> &hkl) {
  if (hkl[0] == 0 && hkl[1] == 0 && hkl[2] == 0) throw UsageError("Miller index (0,0,0) has no direction");
  const Vec3 h = Vec3(hkl[0], hkl[1], hkl[2]).normalized();
  std::vector<Vec3> out;
  for (const Quat &s : cubic_symmetry()) {
    const Vec3 v = quat_to_matrix(s) * h;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Vec3 &u) {
      return (u - v).norm() < 1e-9 || (u + v).norm() < 1e-9;
    });
    if (!seen) out.push_back(v);
  }
  return out;
}

namespace detail {

/// Picks the upper-hemisphere member of {v, -v}. On the equator the member
/// with y > 0, or x > 0 when y = 0, is kept.
inline Vec3 upper_hemisphere(const Vec3 &v) {
  constexpr double eps = 1e-12;
  if (v[2] > eps) return v;
  if (v[2] < -eps) return -v;
  if (v[1] > eps) return v;
  if (v[1] < -eps) return -v;
  return v[0] >= 0.0 ? v : Vec3(-v);
}

} // namespace detail

/// Stereographic projection of the specimen-frame poles {hkl} of every
/// sample; one point per antipodal pair, intensity = sample weight.
inline PoleFigureData pole_figure(const OrientationSamples &samples, const std::array<int, 3> &hkl) {
  const std::vector<Vec3> family = pole_family(hkl);
  PoleFigureData out;
  out.miller = hkl;
  out.points.reserve(samples.size() * family.size());
  for (const auto &s : samples) {
    const Mat3 r = quat_to_matrix(s.q);
    for (const Vec3 &h : family) {
      const Vec3 v = detail::upper_hemisphere((r * h).normalized());
      double x = v[0] / (1.0 + v[2]), y = v[1] / (1.0 + v[2]);
      const double rr = std::hypot(x, y);
      if (rr > 1.0) {
        x /= rr;
        y /= rr;
      }
      out.points.push_back({x, y, s.weight});
    }
  }
  return out;
}

} // namespace odmn
