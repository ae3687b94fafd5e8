#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "odmn/error.hpp"
#include "odmn/material_laws.hpp"
#include "odmn/network.hpp"
#include "odmn/parallel.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

struct SolverConfig {
  double tol_rel = 1e-8;
  /// Absolute residual tolerance as a multiple of the laws' reference stress.
  double tol_abs_factor = 1e-10;
  int max_iterations = 50;
  int max_bisections = 12;
  /// Largest change of any node deformation gradient in one Newton update.
  double max_node_increment = 0.05;
  int max_line_search = 8;

  void validate() const {
    if (!(tol_rel > 0.0) || !(tol_abs_factor > 0.0)) throw UsageError("solver tolerances must be positive");
    if (max_iterations < 1) throw UsageError("max iterations must be positive");
    if (max_bisections < 0) throw UsageError("max bisections must be non-negative");
    if (!(max_node_increment > 0.0)) throw UsageError("max node increment must be positive");
    if (max_line_search < 0) throw UsageError("max line search must be non-negative");
  }
};

struct LoadStep {
  Mat3 f = Mat3::Identity();
  double dt = 1.0;
};

/// vec(a (x) N) = block(N) a, with vec column-major (p = i + 3j).
inline Eigen::Matrix<double, 9, 3> direction_block(const Vec3 &n) {
  Eigen::Matrix<double, 9, 3> r = Eigen::Matrix<double, 9, 3>::Zero();
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) r(i + 3 * j, i) = n[j];
  return r;
}

inline Vec9 vec(const Mat3 &m) { return Eigen::Map<const Vec9>(m.data()); }

/// Network data for online prediction: weights, coefficients, directions,
/// initial orientations and one local law per node.
struct OnlineModel {
  Topology topo;
  std::vector<double> weights;
  double weight_sum = 0.0;
  InteractionCoefficients alpha;
  std::vector<Vec3> directions;
  std::vector<Eigen::Matrix<double, 9, 3>> blocks;
  std::vector<Mat3> rotations;
  std::vector<LawPtr> laws;

  std::size_t num_nodes() const { return weights.size(); }
  std::size_t num_unknowns() const { return 3 * directions.size(); }

  double reference_stress() const {
    double s = 0.0;
    for (const auto &law : laws) s = std::max(s, law->reference_stress());
    return s;
  }
};

/// Laws are assigned like stiffnesses: even nodes phase 1, odd nodes phase 2
/// when `phase2` is given.
inline OnlineModel build_online_model(const ParameterSet &params, LawPtr phase1, LawPtr phase2 = nullptr) {
  params.validate();
  if (!phase1) throw UsageError("a local law is required");
  OnlineModel m;
  m.topo = Topology(params.depth);
  m.weights = node_weights(params.z);
  for (double w : m.weights) m.weight_sum += w;
  m.alpha = interaction_coefficients(m.topo, m.weights);
  m.directions = interaction_directions(params);
  for (const Vec3 &n : m.directions) m.blocks.push_back(direction_block(n));
  for (std::size_t i = 0; i < m.num_nodes(); ++i) {
    m.rotations.push_back(rotation_matrix_from_angles(params.angles(i)));
    m.laws.push_back((phase2 && i % 2 == 1) ? phase2 : phase1);
  }
  return m;
}

struct NetworkState {
  std::vector<NodeMaterialState> nodes;
  Eigen::VectorXd a; ///< stacked a^j
  Mat3 f_bar = Mat3::Identity();
  double time = 0.0;
};

inline NetworkState init_state(const OnlineModel &m) {
  NetworkState st;
  for (std::size_t i = 0; i < m.num_nodes(); ++i) st.nodes.push_back(m.laws[i]->initial_state(m.rotations[i]));
  st.a = Eigen::VectorXd::Zero(Eigen::Index(m.num_unknowns()));
  return st;
}

/// F^i = F_bar + sum_j alpha^{i,j} a^j (x) N^j.
inline std::vector<Mat3> downscale(const OnlineModel &m, const Mat3 &f_bar, const Eigen::VectorXd &a) {
  std::vector<Mat3> f(m.num_nodes(), f_bar);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (const Coefficient &c : m.alpha.of_node(i))
      f[i] += c.value * a.segment<3>(Eigen::Index(3 * c.interaction)) * m.directions[c.interaction].transpose();
  return f;
}

/// r_j = sum_i W^i alpha^{i,j} P^i N^j.
inline Eigen::VectorXd residual(const OnlineModel &m, const std::vector<Mat3> &p) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(Eigen::Index(m.num_unknowns()));
  for (std::size_t i = 0; i < m.num_nodes(); ++i)
    for (const Coefficient &c : m.alpha.of_node(i))
      r.segment<3>(Eigen::Index(3 * c.interaction)) +=
          m.weights[i] * c.value * (p[i] * m.directions[c.interaction]);
  return r;
}

/// dr/dA: blocks sum_i W^i alpha^{i,j} alpha^{i,k} R_j^T K^i R_k.
inline Eigen::MatrixXd residual_jacobian(const OnlineModel &m, const std::vector<Mat9> &k) {
  const auto n = Eigen::Index(m.num_unknowns());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < m.num_nodes(); ++i) {
    const auto coeffs = m.alpha.of_node(i);
    for (const Coefficient &cj : coeffs) {
      const Eigen::Matrix<double, 3, 9> left = m.weights[i] * cj.value * m.blocks[cj.interaction].transpose() * k[i];
      for (const Coefficient &ck : coeffs)
        jac.block<3, 3>(Eigen::Index(3 * cj.interaction), Eigen::Index(3 * ck.interaction)) +=
            ck.value * left * m.blocks[ck.interaction];
    }
  }
  return jac;
}

/// dr/dvec(F_bar): blocks sum_i W^i alpha^{i,j} R_j^T K^i.
inline Eigen::MatrixXd residual_macro_jacobian(const OnlineModel &m, const std::vector<Mat9> &k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Eigen::Index(m.num_unknowns()), 9);
  for (std::size_t i = 0; i < m.num_nodes(); ++i)
    for (const Coefficient &c : m.alpha.of_node(i))
      out.block<3, 9>(Eigen::Index(3 * c.interaction), 0) +=
          m.weights[i] * c.value * m.blocks[c.interaction].transpose() * k[i];
  return out;
}

inline Mat3 upscale_stress(const OnlineModel &m, const std::vector<Mat3> &p) {
  Mat3 out = Mat3::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) out += m.weights[i] * p[i];
  return out / m.weight_sum;
}

/// Factorized dr/dA; throws "indeterminate network" when singular.
inline Eigen::PartialPivLU<Eigen::MatrixXd> factorize(const Eigen::MatrixXd &jac) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
  const double rc = lu.rcond();
  if (!(rc > 1e-14) || !std::isfinite(rc)) throw NumericalError("indeterminate network");
  return lu;
}

/// mat(L) = sum_i W^i K^i / sum W + Y dA/dvec(F_bar),
/// Y = sum_i W^i K^i D^i / sum W,  dA/dvec(F_bar) = -(dr/dA)^{-1} dr/dvec(F_bar).
inline Mat9 upscale_tangent(const OnlineModel &m, const std::vector<Mat9> &k,
                            const Eigen::PartialPivLU<Eigen::MatrixXd> &lu) {
  const Eigen::MatrixXd da_df = -lu.solve(residual_macro_jacobian(m, k));
  Mat9 out = Mat9::Zero();
  for (std::size_t i = 0; i < m.num_nodes(); ++i) {
    Eigen::Matrix<double, 9, 9> coupled = k[i];
    Eigen::Matrix<double, 9, 9> dfi = Eigen::Matrix<double, 9, 9>::Zero();
    for (const Coefficient &c : m.alpha.of_node(i))
      dfi += c.value * m.blocks[c.interaction] * da_df.block<3, 9>(Eigen::Index(3 * c.interaction), 0);
    coupled += k[i] * dfi;
    out += m.weights[i] * coupled;
  }
  return out / m.weight_sum;
}

struct NodeRecord {
  Mat3 f;
  Mat3 p;
  Mat3 rotation; ///< R_t from the polar decomposition of F_e
};

struct StepResult {
  NetworkState state;
  Mat3 p_bar = Mat3::Zero();
  Mat9 tangent = Mat9::Zero();
  double residual = 0.0;
  int iterations = 0; ///< Newton updates in the final (sub)increment
  int bisections = 0;
  std::vector<NodeRecord> nodes;
};

namespace detail {

struct LocalEvaluation {
  std::vector<NodeResponse> responses;
  std::vector<Mat3> p;
  std::vector<Mat9> k;
};

inline LocalEvaluation evaluate_nodes(const OnlineModel &m, const NetworkState &old, const std::vector<Mat3> &f,
                                      double dt) {
  LocalEvaluation ev;
  ev.responses.resize(m.num_nodes());
  parallel_for(m.num_nodes(), [&](std::size_t i) { ev.responses[i] = m.laws[i]->integrate(old.nodes[i], f[i], dt); });
  for (const auto &r : ev.responses) {
    ev.p.push_back(r.p);
    ev.k.push_back(r.dpdf);
  }
  return ev;
}

struct Trial {
  std::vector<Mat3> f;
  LocalEvaluation local;
  Eigen::VectorXd r;
  double norm = 0.0;
};

/// Evaluates all nodes at the given jumps; false when a material point fails.
inline bool try_evaluate(const OnlineModel &m, const NetworkState &old, const Mat3 &f_bar, const Eigen::VectorXd &a,
                         double dt, Trial &t) {
  t.f = downscale(m, f_bar, a);
  try {
    t.local = evaluate_nodes(m, old, t.f, dt);
  } catch (const NumericalError &) {
    return false;
  }
  t.r = residual(m, t.local.p);
  t.norm = t.r.norm();
  return std::isfinite(t.norm);
}

/// One Newton solve with a clamped, backtracked update; returns false when
/// the iteration stalls or the limit is hit.
inline bool newton(const OnlineModel &m, const NetworkState &old, const Mat3 &f_bar, double dt,
                   const SolverConfig &cfg, StepResult &out) {
  Eigen::VectorXd a = old.a;
  const double tol_abs = cfg.tol_abs_factor * m.reference_stress();
  Trial cur;
  if (!try_evaluate(m, old, f_bar, a, dt, cur)) return false;
  const double r0 = cur.norm;
  for (int iter = 0;; ++iter) {
    const bool converged = cur.norm < tol_abs || (r0 > 0.0 && cur.norm / r0 < cfg.tol_rel);
    if (converged) {
      const auto lu = factorize(residual_jacobian(m, cur.local.k));
      out.state.nodes.clear();
      out.nodes.clear();
      for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        const NodeResponse &n = cur.local.responses[i];
        out.state.nodes.push_back(n.state);
        out.nodes.push_back({cur.f[i], cur.local.p[i], polar_decompose(n.state.elastic_deformation()).rotation});
      }
      out.state.a = a;
      out.state.f_bar = f_bar;
      out.state.time = old.time + dt;
      out.p_bar = upscale_stress(m, cur.local.p);
      out.tangent = upscale_tangent(m, cur.local.k, lu);
      out.residual = cur.norm;
      out.iterations = iter;
      return true;
    }
    if (iter == cfg.max_iterations) return false;
    const auto lu = factorize(residual_jacobian(m, cur.local.k));
    const Eigen::VectorXd da = -lu.solve(cur.r);
    double largest = 0.0;
    for (const Mat3 &df : downscale(m, Mat3::Zero(), da)) largest = std::max(largest, df.norm());
    double lambda = largest > cfg.max_node_increment ? cfg.max_node_increment / largest : 1.0;
    bool accepted = false;
    for (int ls = 0; ls <= cfg.max_line_search; ++ls, lambda *= 0.5) {
      Trial next;
      const Eigen::VectorXd trial_a = a + lambda * da;
      if (try_evaluate(m, old, f_bar, trial_a, dt, next) && next.norm < (1.0 - 1e-4 * lambda) * cur.norm) {
        a = trial_a;
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
}

inline StepResult solve_bisected(const OnlineModel &m, const NetworkState &old, const Mat3 &f_bar, double dt,
                                 const SolverConfig &cfg, int depth) {
  StepResult out;
  bool ok = false;
  try {
    ok = newton(m, old, f_bar, dt, cfg, out);
  } catch (const NumericalError &) {
    if (depth >= cfg.max_bisections) throw;
  }
  if (ok) return out;
  if (depth >= cfg.max_bisections)
    throw NumericalError("equilibrium did not converge after " + std::to_string(depth) + " bisections");
  const Mat3 mid = old.f_bar + 0.5 * (f_bar - old.f_bar);
  const StepResult first = solve_bisected(m, old, mid, 0.5 * dt, cfg, depth + 1);
  StepResult second = solve_bisected(m, first.state, f_bar, 0.5 * dt, cfg, depth + 1);
  second.bisections = std::max({depth + 1, first.bisections, second.bisections});
  return second;
}

} // namespace detail

/// Solves the equilibrium of one load increment from a converged state,
/// bisecting the increment on failure.
inline StepResult newton_solve(const OnlineModel &m, const NetworkState &old, const LoadStep &step,
                               const SolverConfig &cfg = {}) {
  cfg.validate();
  if (!(step.f.determinant() > 0.0)) throw DataError("load step has det F <= 0");
  if (!(step.dt > 0.0)) throw DataError("load step has dt <= 0");
  return detail::solve_bisected(m, old, step.f, step.dt, cfg, 0);
}

using StepCallback = std::function<void(std::size_t, const StepResult &)>;

/// Runs the steps in order, carrying the converged state forward. The
/// callback sees every converged step.
inline std::vector<StepResult> run_path(const OnlineModel &m, const std::vector<LoadStep> &steps,
                                        const SolverConfig &cfg = {}, const StepCallback &on_step = {}) {
  NetworkState state = init_state(m);
  std::vector<StepResult> history;
  history.reserve(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    StepResult r;
    try {
      r = newton_solve(m, state, steps[k], cfg);
    } catch (const NumericalError &e) {
      throw NumericalError("step " + std::to_string(k + 1) + " failed (last converged step " + std::to_string(k) +
                           "): " + e.what());
    }
    state = r.state;
    if (on_step) on_step(k, r);
    history.push_back(std::move(r));
  }
  return history;
}

} // namespace odmn
