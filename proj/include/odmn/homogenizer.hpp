#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "odmn/error.hpp"
#include "odmn/network.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

enum class PhaseMode { single, two_phase };

/// Phase stiffnesses assigned to the material nodes. In two-phase mode even
/// nodes carry phase 1 and odd nodes phase 2.
struct PhaseAssignment {
  PhaseMode mode = PhaseMode::single;
  StiffnessMatrix phase1 = StiffnessMatrix::Identity();
  std::optional<StiffnessMatrix> phase2;

  static PhaseAssignment single(const StiffnessMatrix &c) { return {PhaseMode::single, c, {}}; }
  static PhaseAssignment two_phase(const StiffnessMatrix &c1, const StiffnessMatrix &c2) {
    return {PhaseMode::two_phase, c1, c2};
  }

  void validate() const {
    if (mode == PhaseMode::two_phase && !phase2)
      throw DataError("two-phase assignment is missing the phase-2 stiffness");
  }

  const StiffnessMatrix &for_node(std::size_t i) const {
    return (mode == PhaseMode::two_phase && i % 2 == 1) ? *phase2 : phase1;
  }
};

inline std::vector<StiffnessMatrix> assign_stiffness(const Topology &topo,
                                                     const PhaseAssignment &assignment) {
  assignment.validate();
  std::vector<StiffnessMatrix> out(topo.num_nodes());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = assignment.for_node(i);
  return out;
}

/// Maps a jump vector a to the Voigt engineering strain of sym(a (x) N).
template <typename T> Eigen::Matrix<T, 6, 3> interface_basis(const Vec3T<T> &n) {
  Eigen::Matrix<T, 6, 3> h = Eigen::Matrix<T, 6, 3>::Zero();
  h(0, 0) = n[0];
  h(1, 1) = n[1];
  h(2, 2) = n[2];
  h(3, 1) = n[2];
  h(3, 2) = n[1];
  h(4, 0) = n[2];
  h(4, 2) = n[0];
  h(5, 0) = n[1];
  h(5, 1) = n[0];
  return h;
}

namespace detail {

template <typename T> void check_interface(const Mat3T<T> &s) {
  const Eigen::JacobiSVD<Mat3T<T>> svd(s);
  const auto sv = svd.singularValues();
  if (!(sv[2] >= T(1e-12) * sv[0]) || !(sv[0] > T(0))) throw NumericalError("degenerate interface");
}

} // namespace detail

/// Binary laminate homogenization
///   C = f0 C0 + f1 C1 - f0 f1 (C0 - C1) Q (C0 - C1),
///   Q = H S^{-1} H^T,  S = H^T (f1 C0 + f0 C1) H.
template <typename T>
Mat6T<T> h2(const Mat6T<T> &c0, const Mat6T<T> &c1, T f0, T f1, const Vec3T<T> &n) {
  const Eigen::Matrix<T, 6, 3> h = interface_basis<T>(n);
  const Mat3T<T> s = h.transpose() * (f1 * c0 + f0 * c1) * h;
  detail::check_interface<T>(s);
  const Mat3T<T> s_inv = s.fullPivLu().inverse();
  const Mat6T<T> q = h * s_inv * h.transpose();
  const Mat6T<T> d = c0 - c1;
  return f0 * c0 + f1 * c1 - f0 * f1 * d * q * d;
}

/// Brute-force laminate: for each unit macroscopic strain, solves traction
/// continuity across the interface for the strain jump a (x) N with the
/// volume-averaged strain held fixed, and averages the phase stresses.
/// Works on 3x3 tensors and fourth-order stiffnesses, independently of the
/// Voigt interface basis used by h2.
inline StiffnessMatrix laminate_oracle(const StiffnessMatrix &c0, const StiffnessMatrix &c1,
                                       double f0, const Vec3 &n) {
  const double f1 = 1.0 - f0;
  const Tensor4 t0 = stiffness_to_tensor(c0);
  const Tensor4 t1 = stiffness_to_tensor(c1);
  const auto contract = [](const Tensor4 &c, const Mat3 &eps) {
    Mat3 sigma = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) sigma(i, j) += c(i, j, k, l) * eps(k, l);
    return sigma;
  };
  const auto phase_strains = [&](const Mat3 &mean, const Vec3 &a) {
    const Mat3 jump = 0.5 * (a * n.transpose() + n * a.transpose());
    return std::pair<Mat3, Mat3>{mean + f1 * jump, mean - f0 * jump};
  };
  const auto traction_gap = [&](const Mat3 &mean, const Vec3 &a) -> Vec3 {
    const auto [e0, e1] = phase_strains(mean, a);
    return (contract(t0, e0) - contract(t1, e1)) * n;
  };

  StiffnessMatrix out;
  for (int J = 0; J < 6; ++J) {
    Voigt6 unit;
    unit.kind = VoigtKind::strain;
    unit.values[J] = 1.0;
    const Mat3 mean = from_voigt(unit);
    const Vec3 r0 = traction_gap(mean, Vec3::Zero());
    Mat3 k;
    for (int c = 0; c < 3; ++c) k.col(c) = traction_gap(mean, Vec3::Unit(c)) - r0;
    const Eigen::JacobiSVD<Mat3> svd(k, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()[2] < 1e-12 * svd.singularValues()[0])
      throw NumericalError("laminate_oracle: singular interface system");
    const Vec3 a = svd.solve(-r0);
    const auto [e0, e1] = phase_strains(mean, a);
    const Mat3 sigma = f0 * contract(t0, e0) + f1 * contract(t1, e1);
    out.col(J) = to_voigt(sigma, VoigtKind::stress).values;
  }
  return out;
}

/// Offline forward pass on a flat parameter vector (layout of
/// ParameterSet::flatten). Rotates each node stiffness, then merges the tree
/// level by level from the leaves up to the root.
template <typename T>
Mat6T<T> homogenize_flat(std::span<const T> flat, const Topology &topo, const Mat6T<T> &phase1,
                         const Mat6T<T> *phase2) {
  const std::size_t nodes = topo.num_nodes();
  const std::size_t inter = topo.num_interactions();
  const auto z = flat.subspan(0, nodes);
  const auto alpha = flat.subspan(nodes, nodes);
  const auto beta = flat.subspan(2 * nodes, nodes);
  const auto gamma = flat.subspan(3 * nodes, nodes);
  const auto theta = flat.subspan(4 * nodes, inter);
  const auto phi = flat.subspan(4 * nodes + inter, inter);

  std::vector<Mat6T<T>> level(nodes);
  std::vector<T> weight(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    const Mat6T<T> &c = (phase2 != nullptr && i % 2 == 1) ? *phase2 : phase1;
    level[i] = rotate_stiffness<T>(c, alpha[i], beta[i], gamma[i]);
    weight[i] = node_weight<T>(z[i]);
  }
  for (int l = topo.depth() - 1; l >= 0; --l) {
    const std::size_t count = std::size_t{1} << l;
    std::vector<Mat6T<T>> next(count);
    std::vector<T> next_weight(count);
    for (std::size_t p = 0; p < count; ++p) {
      const std::size_t j = Topology::interaction_index(l, p);
      const T w0 = weight[2 * p];
      const T w1 = weight[2 * p + 1];
      const T f0 = w0 / (w0 + w1);
      const T f1 = w1 / (w0 + w1);
      next[p] = h2<T>(level[2 * p], level[2 * p + 1], f0, f1, direction_vector<T>(theta[j], phi[j]));
      next_weight[p] = w0 + w1;
    }
    level = std::move(next);
    weight = std::move(next_weight);
  }
  return level[0];
}

inline StiffnessMatrix homogenize(const ParameterSet &params, const Topology &topo,
                                  const PhaseAssignment &assignment) {
  assignment.validate();
  if (params.depth != topo.depth()) throw DataError("parameter depth does not match topology");
  const std::vector<double> flat = params.flatten();
  const StiffnessMatrix *phase2 =
      assignment.mode == PhaseMode::two_phase ? &*assignment.phase2 : nullptr;
  return homogenize_flat<double>(flat, topo, assignment.phase1, phase2);
}

} // namespace odmn
