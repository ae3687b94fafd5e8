#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odmn/error.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

/// Binary material-network tree of depth N with 2^N material nodes and
/// 2^N - 1 interaction mechanisms.
///
/// Interactions are numbered breadth-first: j = 2^l - 1 + p for level l and
/// position p, so j = 0 is the root. Sub-list K^l_p holds the contiguous node
/// range [p * 2^(N-l), (p+1) * 2^(N-l)).
class Topology {
public:
  static constexpr int kMaxDepth = 12;

  Topology() = default;

  explicit Topology(int depth) : depth_(depth) {
    if (depth < 1 || depth > kMaxDepth)
      throw UsageError("network depth must lie in [1, " + std::to_string(kMaxDepth) + "], got " +
                       std::to_string(depth));
  }

  int depth() const { return depth_; }
  std::size_t num_nodes() const { return std::size_t{1} << depth_; }
  std::size_t num_interactions() const { return num_nodes() - 1; }

  static std::size_t interaction_index(int level, std::size_t position) {
    return (std::size_t{1} << level) - 1 + position;
  }

  /// (level, position) of interaction j.
  static std::pair<int, std::size_t> level_position(std::size_t j) {
    int level = 0;
    while (((std::size_t{1} << (level + 1)) - 1) <= j) ++level;
    return {level, j - ((std::size_t{1} << level) - 1)};
  }

  /// Half-open node range [first, last) of sub-list K^l_p.
  std::pair<std::size_t, std::size_t> sublist_range(int level, std::size_t position) const {
    const std::size_t width = std::size_t{1} << (depth_ - level);
    return {position * width, (position + 1) * width};
  }

  std::vector<std::size_t> sublist(int level, std::size_t position) const {
    const auto [first, last] = sublist_range(level, position);
    std::vector<std::size_t> nodes;
    for (std::size_t i = first; i < last; ++i) nodes.push_back(i);
    return nodes;
  }

  /// Node ranges of the first and second child branch of interaction j.
  std::pair<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>>
  branches(std::size_t j) const {
    const auto [level, position] = level_position(j);
    const auto [first, last] = sublist_range(level, position);
    const std::size_t mid = first + (last - first) / 2;
    return {{first, mid}, {mid, last}};
  }

  /// Interactions on the path from node i's leaf pair up to the root,
  /// deepest first.
  std::vector<std::size_t> interactions_of_node(std::size_t node) const {
    std::vector<std::size_t> path;
    std::size_t position = node >> 1;
    for (int level = depth_ - 1; level >= 0; --level) {
      path.push_back(interaction_index(level, position));
      position >>= 1;
    }
    return path;
  }

private:
  int depth_ = 1;
};

inline Topology build_topology(int depth) { return Topology(depth); }

/// Trainable parameters: per node {z, alpha, beta, gamma}, per interaction
/// {theta, phi}. Flat layout used by the optimizer and the gradient:
/// [z | alpha | beta | gamma | theta | phi].
struct ParameterSet {
  int depth = 1;
  std::vector<double> z, alpha, beta, gamma;
  std::vector<double> theta, phi;

  ParameterSet() = default;
  explicit ParameterSet(int n) : depth(n) {
    const Topology topo(n);
    z.assign(topo.num_nodes(), 0.0);
    alpha = beta = gamma = z;
    theta.assign(topo.num_interactions(), 0.0);
    phi = theta;
  }

  std::size_t num_nodes() const { return z.size(); }
  std::size_t num_interactions() const { return theta.size(); }
  std::size_t size() const { return 4 * num_nodes() + 2 * num_interactions(); }

  RotationAngles angles(std::size_t i) const { return {alpha[i], beta[i], gamma[i]}; }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto *v : {&z, &alpha, &beta, &gamma, &theta, &phi})
      out.insert(out.end(), v->begin(), v->end());
    return out;
  }

  void unflatten(std::span<const double> flat) {
    if (flat.size() != size()) throw DataError("parameter vector has the wrong length");
    std::size_t k = 0;
    for (auto *v : {&z, &alpha, &beta, &gamma, &theta, &phi})
      for (double &x : *v) x = flat[k++];
  }

  /// Throws DataError unless array sizes match the depth and all entries
  /// are finite.
  void validate() const {
    const Topology topo(depth);
    for (const auto *v : {&z, &alpha, &beta, &gamma})
      if (v->size() != topo.num_nodes()) throw DataError("node parameter array has wrong size");
    for (const auto *v : {&theta, &phi})
      if (v->size() != topo.num_interactions())
        throw DataError("interaction parameter array has wrong size");
    for (double x : flatten())
      if (!std::isfinite(x)) throw DataError("parameter is not finite");
  }
};

/// Deterministic uniform draws in [0, 1) from the top 53 bits of a 64-bit
/// Mersenne Twister, so streams agree across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::size_t(uniform() * double(n)); }

  template <typename It> void shuffle(It first, It last) {
    const auto n = std::size_t(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[index(i)]);
  }

private:
  std::mt19937_64 engine_;
};

/// z ~ U[0.2, 0.8], angles ~ U[0, 2pi), theta, phi ~ U(0, 1).
inline ParameterSet init_parameters(int depth, Rng &rng) {
  ParameterSet p(depth);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < p.num_nodes(); ++i) {
    p.z[i] = rng.uniform(0.2, 0.8);
    p.alpha[i] = rng.uniform(0.0, two_pi);
    p.beta[i] = rng.uniform(0.0, two_pi);
    p.gamma[i] = rng.uniform(0.0, two_pi);
  }
  for (std::size_t j = 0; j < p.num_interactions(); ++j) {
    double t;
    do t = rng.uniform(); while (t == 0.0);
    p.theta[j] = t;
    do t = rng.uniform(); while (t == 0.0);
    p.phi[j] = t;
  }
  return p;
}

/// Softplus weight ln(1 + e^z), overflow-safe.
template <typename T> T node_weight(T z) {
  using std::exp;
  using std::log1p;
  if (z > T(0)) return z + log1p(exp(-z));
  return log1p(exp(z));
}

/// d/dz softplus(z) = logistic(z).
inline double node_weight_derivative(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Inverse softplus, z = ln(e^W - 1).
inline double weight_to_activation(double w) {
  if (!(w > 0.0)) throw UsageError("weights must be positive");
  if (w > 30.0) return w + std::log1p(-std::exp(-w));
  return std::log(std::expm1(w));
}

template <typename T> std::vector<T> node_weights(const std::vector<T> &z) {
  std::vector<T> w(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) w[i] = node_weight(z[i]);
  return w;
}

/// Unit stress-equilibrium direction
/// (cos 2pi phi sin pi theta, sin 2pi phi sin pi theta, cos pi theta).
template <typename T> Vec3T<T> direction_vector(T theta, T phi) {
  using std::cos;
  using std::sin;
  const T pi = T(std::numbers::pi);
  const T st = sin(pi * theta);
  return Vec3T<T>(cos(2 * pi * phi) * st, sin(2 * pi * phi) * st, cos(pi * theta));
}

template <typename T>
std::pair<T, T> branch_volume_fractions(std::span<const T> weights,
                                        std::pair<std::size_t, std::size_t> first,
                                        std::pair<std::size_t, std::size_t> second) {
  T w0 = T(0), w1 = T(0);
  for (std::size_t i = first.first; i < first.second; ++i) w0 += weights[i];
  for (std::size_t i = second.first; i < second.second; ++i) w1 += weights[i];
  const T f0 = w0 / (w0 + w1);
  return {f0, T(1) - f0};
}

/// Non-zero interaction coefficient alpha^{i,j}.
struct Coefficient {
  std::size_t interaction;
  double value;
};

/// Sparse alpha^{i,j}: node i is coupled to the N interactions on its path
/// to the root. Nodes in the first branch of j get +1/sum_{J1} W, nodes in the
/// second branch -1/sum_{J2} W, so that sum_i W^i alpha^{i,j} = 0.
class InteractionCoefficients {
public:
  InteractionCoefficients() = default;

  InteractionCoefficients(const Topology &topo, std::span<const double> weights)
      : per_node_(topo.num_nodes()) {
    if (weights.size() != topo.num_nodes()) throw DataError("weight count does not match topology");
    for (double w : weights)
      if (!(w > 0.0)) throw NumericalError("node weights must be positive");
    for (std::size_t j = 0; j < topo.num_interactions(); ++j) {
      const auto [b0, b1] = topo.branches(j);
      double w0 = 0.0, w1 = 0.0;
      for (std::size_t i = b0.first; i < b0.second; ++i) w0 += weights[i];
      for (std::size_t i = b1.first; i < b1.second; ++i) w1 += weights[i];
      for (std::size_t i = b0.first; i < b0.second; ++i) per_node_[i].push_back({j, 1.0 / w0});
      for (std::size_t i = b1.first; i < b1.second; ++i) per_node_[i].push_back({j, -1.0 / w1});
    }
  }

  std::span<const Coefficient> of_node(std::size_t i) const { return per_node_[i]; }
  std::size_t num_nodes() const { return per_node_.size(); }

  /// alpha^{i,j}, zero when node i lies outside both branches of j.
  double operator()(std::size_t i, std::size_t j) const {
    for (const auto &c : per_node_[i])
      if (c.interaction == j) return c.value;
    return 0.0;
  }

private:
  std::vector<std::vector<Coefficient>> per_node_;
};

inline InteractionCoefficients interaction_coefficients(const Topology &topo,
                                                        std::span<const double> weights) {
  return {topo, weights};
}

inline std::vector<Vec3> interaction_directions(const ParameterSet &p) {
  std::vector<Vec3> dirs(p.num_interactions());
  for (std::size_t j = 0; j < dirs.size(); ++j) dirs[j] = direction_vector(p.theta[j], p.phi[j]);
  return dirs;
}

/// Sum of even-node weights over the total: the phase-1 volume fraction of
/// a two-phase network.
inline double phase_one_fraction(const ParameterSet &p) {
  double even = 0.0, total = 0.0;
  for (std::size_t i = 0; i < p.num_nodes(); ++i) {
    const double w = node_weight(p.z[i]);
    total += w;
    if (i % 2 == 0) even += w;
  }
  return even / total;
}

/// Rescales the even-node weights so that phase_one_fraction(p) == fraction.
inline void encode_phase_one_fraction(ParameterSet &p, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("fraction must lie in (0, 1)");
  double even = 0.0, odd = 0.0;
  for (std::size_t i = 0; i < p.num_nodes(); ++i)
    (i % 2 == 0 ? even : odd) += node_weight(p.z[i]);
  const double scale = fraction / (1.0 - fraction) * odd / even;
  for (std::size_t i = 0; i < p.num_nodes(); i += 2)
    p.z[i] = weight_to_activation(scale * node_weight(p.z[i]));
}

} // namespace odmn
