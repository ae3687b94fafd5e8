#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "odmn/error.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

// ---------------------------------------------------------------------------
// FCC slip geometry

struct SlipSystem {
  Vec3 direction; ///< unit slip direction s
  Vec3 normal;    ///< unit plane normal n
  Mat3 schmid() const { return direction * normal.transpose(); }
};

/// Slip-slip interaction classes, numbered as the entries of the 7-value
/// interaction vector.
enum class SlipInteraction {
  self = 1,
  coplanar = 2,
  collinear = 3,
  hirth = 4,
  glissile = 5,
  lomer = 6,
  unused = 7,
};

inline const char *to_string(SlipInteraction c) {
  switch (c) {
  case SlipInteraction::self: return "self";
  case SlipInteraction::coplanar: return "coplanar";
  case SlipInteraction::collinear: return "collinear";
  case SlipInteraction::hirth: return "hirth";
  case SlipInteraction::glissile: return "glissile";
  case SlipInteraction::lomer: return "lomer";
  case SlipInteraction::unused: return "unused";
  }
  return "?";
}

struct SlipSystemSet {
  std::vector<SlipSystem> systems;
  /// classes(a, b): interaction class of systems a and b.
  std::vector<std::vector<SlipInteraction>> classes;

  std::size_t size() const { return systems.size(); }

  /// h^{ab} from the 7-entry interaction vector.
  Eigen::MatrixXd interaction_matrix(const std::array<double, 7> &h) const {
    Eigen::MatrixXd m(size(), size());
    for (std::size_t a = 0; a < size(); ++a)
      for (std::size_t b = 0; b < size(); ++b) m(a, b) = h[int(classes[a][b]) - 1];
    return m;
  }
};

/// Classifies a pair of octahedral systems from their geometry. Burgers
/// vectors are taken unnormalized as <110> with |b|^2 = 2.
inline SlipInteraction classify_fcc_pair(const Vec3 &b1, const Vec3 &n1, const Vec3 &b2, const Vec3 &n2,
                                         bool same) {
  constexpr double eps = 1e-9;
  if (same) return SlipInteraction::self;
  if (n1.cross(n2).norm() < eps) return SlipInteraction::coplanar;
  if (b1.cross(b2).norm() < eps) return SlipInteraction::collinear;
  const double dot = b1.dot(b2);
  if (std::abs(dot) < eps) return SlipInteraction::hirth;
  const Vec3 b3 = dot > 0 ? Vec3(b1 - b2) : Vec3(b1 + b2);
  if (std::abs(b3.dot(n1)) < eps || std::abs(b3.dot(n2)) < eps) return SlipInteraction::glissile;
  return SlipInteraction::lomer;
}

/// The 12 {111}<110> systems, three per plane.
inline SlipSystemSet fcc_slip_systems() {
  static const int raw[12][6] = {
      {0, 1, -1, 1, 1, 1},    {-1, 0, 1, 1, 1, 1},   {1, -1, 0, 1, 1, 1},
      {0, -1, -1, -1, -1, 1}, {1, 0, 1, -1, -1, 1},  {-1, 1, 0, -1, -1, 1},
      {0, -1, 1, 1, -1, -1},  {-1, 0, -1, 1, -1, -1}, {1, 1, 0, 1, -1, -1},
      {0, 1, 1, -1, 1, -1},   {1, 0, -1, -1, 1, -1}, {-1, -1, 0, -1, 1, -1},
  };
  SlipSystemSet set;
  std::vector<Vec3> b(12), n(12);
  for (int k = 0; k < 12; ++k) {
    b[k] = Vec3(raw[k][0], raw[k][1], raw[k][2]);
    n[k] = Vec3(raw[k][3], raw[k][4], raw[k][5]);
    set.systems.push_back({b[k].normalized(), n[k].normalized()});
  }
  set.classes.assign(12, std::vector<SlipInteraction>(12));
  for (int a = 0; a < 12; ++a)
    for (int c = 0; c < 12; ++c) set.classes[a][c] = classify_fcc_pair(b[a], n[a], b[c], n[c], a == c);
  return set;
}

// ---------------------------------------------------------------------------
// Constitutive pieces

/// S = C : E with E = (F_e^T F_e - I) / 2.
inline Mat3 hooke_second_pk(const Mat3 &fe, const StiffnessMatrix &c) {
  const Mat3 e = 0.5 * (fe.transpose() * fe - Mat3::Identity());
  Voigt6 s;
  s.kind = VoigtKind::stress;
  s.values = c * to_voigt(e, VoigtKind::strain).values;
  return from_voigt(s);
}

inline double resolved_shear(const Mat3 &mandel, const SlipSystem &system) {
  return system.direction.dot(mandel * system.normal);
}

struct PhenoPlasticityParams {
  int slip_systems = 12;
  double h0 = 1020.0;      ///< MPa
  double xi_inf = 266.0;   ///< MPa
  double xi0 = 76.0;       ///< MPa
  double n = 20.0;
  double a = 3.7;
  double gamma_dot0 = 1e-3; ///< 1/s
  double h_int = 0.0;
  std::array<double, 7> h_slsl{1.0, 1.0, 5.123, 0.574, 1.123, 1.123, 1.0};
  double c11 = 191000.0; ///< MPa
  double c12 = 162000.0;
  double c44 = 42200.0;

  /// AA6022-T4, also phase 1 of the two-phase example.
  static PhenoPlasticityParams aa6022_t4() { return {}; }

  /// Phase 2 of the two-phase example.
  static PhenoPlasticityParams soft_phase() {
    PhenoPlasticityParams p;
    p.xi_inf = 88.6;
    p.xi0 = 25.3;
    return p;
  }

  StiffnessMatrix stiffness() const { return cubic_stiffness(c11, c12, c44); }

  void validate() const {
    if (slip_systems != 12) throw DataError("only the 12 FCC octahedral slip systems are supported");
    if (!(h0 >= 0.0)) throw DataError("h0 must be non-negative");
    if (!(xi_inf > 0.0) || !(xi0 > 0.0)) throw DataError("slip resistances must be positive");
    if (!(n >= 1.0)) throw DataError("rate exponent n must be at least 1");
    if (!(a > 0.0)) throw DataError("hardening exponent a must be positive");
    if (!(gamma_dot0 > 0.0)) throw DataError("reference shear rate must be positive");
    if (!(c11 - c12 > 0.0) || !(c11 + 2 * c12 > 0.0) || !(c44 > 0.0))
      throw DataError("elastic constants are not positive definite");
  }
};

inline double shear_rate(double tau, double xi, const PhenoPlasticityParams &p) {
  if (tau == 0.0) return 0.0;
  return std::copysign(p.gamma_dot0 * std::pow(std::abs(tau / xi), p.n), tau);
}

inline std::vector<double> hardening_rate(std::span<const double> xi, std::span<const double> gamma_dot,
                                          const Eigen::MatrixXd &h, const PhenoPlasticityParams &p) {
  const std::size_t ns = xi.size();
  std::vector<double> drive(ns);
  for (std::size_t b = 0; b < ns; ++b) {
    const double x = 1.0 - xi[b] / p.xi_inf;
    drive[b] = std::abs(gamma_dot[b]) * std::pow(std::abs(x), p.a) * (x > 0 ? 1.0 : x < 0 ? -1.0 : 0.0);
  }
  std::vector<double> rate(ns, 0.0);
  for (std::size_t a = 0; a < ns; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < ns; ++b) sum += drive[b] * h(a, b);
    rate[a] = p.h0 * (1.0 + p.h_int) * sum;
  }
  return rate;
}

inline Mat3 plastic_velocity_gradient(std::span<const double> gamma_dot, const SlipSystemSet &set) {
  Mat3 lp = Mat3::Zero();
  for (std::size_t a = 0; a < set.size(); ++a) lp += gamma_dot[a] * set.systems[a].schmid();
  return lp;
}

// ---------------------------------------------------------------------------
// Local laws

/// Per-node state. `s` is the last converged second Piola-Kirchhoff stress
/// in the intermediate configuration, kept as an initial guess.
struct NodeMaterialState {
  Mat3 f = Mat3::Identity();
  Mat3 fp = Mat3::Identity();
  Mat3 s = Mat3::Zero();
  std::vector<double> xi;
  double accumulated_shear = 0.0;

  Mat3 elastic_deformation() const { return f * fp.inverse(); }
};

struct NodeResponse {
  NodeMaterialState state;
  Mat3 p = Mat3::Zero();
  Mat9 dpdf = Mat9::Zero(); ///< mat(dP/dF), p = i + 3j, q = k + 3l
};

class LocalLaw {
public:
  virtual ~LocalLaw() = default;

  /// Initial state with F_e = R and F_p = R^T.
  virtual NodeMaterialState initial_state(const Mat3 &rotation) const {
    NodeMaterialState st;
    st.fp = rotation.transpose();
    return st;
  }

  virtual NodeResponse integrate(const NodeMaterialState &old, const Mat3 &f, double dt) const = 0;

  /// Stress scale in MPa for absolute tolerances.
  virtual double reference_stress() const = 0;

  virtual std::string name() const = 0;
};

using LawPtr = std::shared_ptr<const LocalLaw>;

/// Hooke's law on the Green-Lagrange strain of F_e = F F_p^{-1}, with F_p
/// fixed at its initial rotation.
class ElasticLaw final : public LocalLaw {
public:
  explicit ElasticLaw(const StiffnessMatrix &c) : c_(c), t_(stiffness_to_tensor(c)) {}

  const StiffnessMatrix &stiffness() const { return c_; }

  NodeResponse integrate(const NodeMaterialState &old, const Mat3 &f, double) const override {
    if (!(f.determinant() > 0.0)) throw NumericalError("non-invertible deformation");
    NodeResponse out;
    out.state = old;
    out.state.f = f;
    const Mat3 k = old.fp.inverse();
    const Mat3 g = k.transpose();
    const Mat3 fe = f * k;
    // F_p is a rotation, so E = K^T (F^T F - I) K / 2 is exactly zero at F = I.
    const Mat3 e = 0.5 * (g * (f.transpose() * f - Mat3::Identity()) * k);
    Voigt6 sv;
    sv.kind = VoigtKind::stress;
    sv.values = c_ * to_voigt(e, VoigtKind::strain).values;
    const Mat3 s = from_voigt(sv);
    out.state.s = s;
    out.p = fe * s * g;

    const Mat3 sg = s * g;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int kk = 0; kk < 3; ++kk)
          for (int l = 0; l < 3; ++l) {
            double v = (i == kk) ? (k.row(l) * sg.col(j))(0, 0) : 0.0;
            for (int a = 0; a < 3; ++a) {
              if (fe(i, a) == 0.0) continue;
              for (int b = 0; b < 3; ++b) {
                double inner = 0.0;
                for (int pp = 0; pp < 3; ++pp)
                  for (int q = 0; q < 3; ++q) inner += t_(a, b, pp, q) * k(l, pp) * fe(kk, q);
                v += fe(i, a) * inner * g(b, j);
              }
            }
            out.dpdf(i + 3 * j, kk + 3 * l) = v;
          }
    return out;
  }

  double reference_stress() const override { return c_.diagonal().maxCoeff(); }
  std::string name() const override { return "elastic"; }

private:
  StiffnessMatrix c_;
  Tensor4 t_;
};

/// Small-strain Hooke's law P = C_R : sym(F - I), where C_R is the crystal
/// stiffness rotated by the node orientation F_p^{-1}. The stress is affine
/// in F.
class LinearElasticLaw final : public LocalLaw {
public:
  explicit LinearElasticLaw(const StiffnessMatrix &c) : c_(c), t_(stiffness_to_tensor(c)) {}

  NodeResponse integrate(const NodeMaterialState &old, const Mat3 &f, double) const override {
    NodeResponse out;
    out.state = old;
    out.state.f = f;
    const Tensor4 cr = rotate_tensor4(t_, old.fp.inverse());
    const Mat3 eps = 0.5 * (f + f.transpose()) - Mat3::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) v += cr(i, j, k, l) * eps(k, l);
        out.p(i, j) = v;
      }
    out.dpdf = mat_fourth_order(cr);
    out.state.s = out.p;
    return out;
  }

  double reference_stress() const override { return c_.diagonal().maxCoeff(); }
  std::string name() const override { return "linear_elastic"; }

private:
  StiffnessMatrix c_;
  Tensor4 t_;
};

/// Phenomenological power-law crystal plasticity on the FCC octahedral
/// systems, backward Euler in time.
class CrystalPlasticityLaw final : public LocalLaw {
public:
  static constexpr int kMaxIterations = 100;
  static constexpr int kMaxSubstepDepth = 20;

  explicit CrystalPlasticityLaw(const PhenoPlasticityParams &p)
      : p_(p), c_(p.stiffness()), compliance_(c_.inverse()), slip_(fcc_slip_systems()),
        h_(slip_.interaction_matrix(p.h_slsl)) {
    p_.validate();
  }

  const PhenoPlasticityParams &params() const { return p_; }
  const SlipSystemSet &slip_systems() const { return slip_; }

  NodeMaterialState initial_state(const Mat3 &rotation) const override {
    NodeMaterialState st = LocalLaw::initial_state(rotation);
    st.xi.assign(slip_.size(), p_.xi0);
    return st;
  }

  /// Converged state and stress without the tangent.
  NodeResponse update(const NodeMaterialState &old, const Mat3 &f, double dt) const {
    return substep(old, f, dt, 0, nullptr);
  }

  NodeResponse integrate(const NodeMaterialState &old, const Mat3 &f, double dt) const override {
    NodeResponse out = update(old, f, dt);
    const double h = 1e-7 * f.norm();
    for (int q = 0; q < 9; ++q) {
      Mat3 fp = f;
      fp(q % 3, q / 3) += h;
      const NodeResponse pert = substep(old, fp, dt, 0, &out.state.s);
      const Mat3 dp = (pert.p - out.p) / h;
      out.dpdf.col(q) = Eigen::Map<const Vec9>(dp.data());
    }
    return out;
  }

  double reference_stress() const override { return p_.c11; }
  std::string name() const override { return "crystal_plasticity"; }

private:
  using Vec18 = Eigen::Matrix<double, 18, 1>;
  using Mat18 = Eigen::Matrix<double, 18, 18>;

  struct Evaluation {
    Vec18 residual;
    Mat3 fp_inv;
    Mat3 fe;
    std::array<double, 12> gamma_dot{};
  };

  static Mat3 sym_from(const Vec18 &x) {
    Voigt6 v;
    v.kind = VoigtKind::stress;
    v.values = x.head<6>();
    return from_voigt(v);
  }

  bool evaluate(const Vec18 &x, const NodeMaterialState &old, const Mat3 &fp_inv_old, const Mat3 &f,
                double dt, Evaluation &ev) const {
    for (int a = 0; a < 12; ++a)
      if (!(x[6 + a] > 0.0)) return false;
    const Mat3 s = sym_from(x);
    Voigt6 ev6;
    ev6.kind = VoigtKind::strain;
    ev6.values = compliance_ * x.head<6>();
    const Mat3 e = from_voigt(ev6);
    const Mat3 mandel = (Mat3::Identity() + 2.0 * e) * s;
    for (int a = 0; a < 12; ++a)
      ev.gamma_dot[a] = shear_rate(resolved_shear(mandel, slip_.systems[a]), x[6 + a], p_);
    const Mat3 lp = plastic_velocity_gradient(ev.gamma_dot, slip_);
    ev.fp_inv = fp_inv_old * (Mat3::Identity() - dt * lp);
    ev.fe = f * ev.fp_inv;
    const Mat3 se = hooke_second_pk(ev.fe, c_);
    ev.residual.head<6>() = to_voigt(Mat3(s - se), VoigtKind::stress).values;
    const std::array<double, 12> xi_new = [&] {
      std::array<double, 12> v{};
      for (int a = 0; a < 12; ++a) v[a] = x[6 + a];
      return v;
    }();
    const auto rate = hardening_rate(xi_new, ev.gamma_dot, h_, p_);
    for (int a = 0; a < 12; ++a) ev.residual[6 + a] = x[6 + a] - old.xi[a] - dt * rate[a];
    return ev.residual.allFinite();
  }

  /// Newton on (S, xi) with a forward-difference Jacobian and backtracking.
  bool solve(const NodeMaterialState &old, const Mat3 &f, double dt, const Mat3 *hint, NodeResponse &out) const {
    const Mat3 fp_inv_old = old.fp.inverse();
    const double tol = 1e-9 * std::max(1.0, p_.xi_inf);

    std::vector<Vec18> guesses;
    const auto pack = [&](const Mat3 &s) {
      Vec18 x;
      x.head<6>() = to_voigt(Mat3(0.5 * (s + s.transpose())), VoigtKind::stress).values;
      for (int a = 0; a < 12; ++a) x[6 + a] = old.xi[a];
      return x;
    };
    if (hint != nullptr) guesses.push_back(pack(*hint));
    guesses.push_back(pack(old.s));
    guesses.push_back(pack(hooke_second_pk(f * fp_inv_old, c_)));

    Vec18 x;
    Evaluation ev;
    double best = std::numeric_limits<double>::infinity();
    for (const Vec18 &g : guesses) {
      Evaluation e;
      if (evaluate(g, old, fp_inv_old, f, dt, e) && e.residual.norm() < best) {
        best = e.residual.norm();
        x = g;
        ev = e;
      }
    }
    if (!std::isfinite(best)) return false;

    for (int it = 0; it <= kMaxIterations; ++it) {
      const double norm = ev.residual.norm();
      if (norm < tol) {
        finish(old, f, dt, x, ev, out);
        return true;
      }
      if (it == kMaxIterations) return false;
      Mat18 jac;
      for (int m = 0; m < 18; ++m) {
        Vec18 xp = x;
        const double h = 1e-7 * std::max(1.0, std::abs(x[m]));
        xp[m] += h;
        Evaluation ep;
        if (!evaluate(xp, old, fp_inv_old, f, dt, ep)) {
          xp[m] = x[m] - h;
          if (!evaluate(xp, old, fp_inv_old, f, dt, ep)) return false;
          jac.col(m) = (ev.residual - ep.residual) / h;
        } else {
          jac.col(m) = (ep.residual - ev.residual) / h;
        }
      }
      const Eigen::PartialPivLU<Mat18> lu(jac);
      const Vec18 dx = -lu.solve(ev.residual);
      if (!dx.allFinite()) return false;
      double lambda = 1.0;
      bool accepted = false;
      while (lambda > 1e-6) {
        Evaluation trial;
        const Vec18 xt = x + lambda * dx;
        if (evaluate(xt, old, fp_inv_old, f, dt, trial) && trial.residual.norm() < (1.0 - 1e-4 * lambda) * norm) {
          x = xt;
          ev = trial;
          accepted = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!accepted) return false;
    }
    return false;
  }

  void finish(const NodeMaterialState &old, const Mat3 &f, double dt, const Vec18 &x, const Evaluation &ev,
              NodeResponse &out) const {
    NodeMaterialState st = old;
    st.f = f;
    Mat3 fp = ev.fp_inv.inverse();
    fp *= std::pow(fp.determinant(), -1.0 / 3.0);
    st.fp = fp;
    for (int a = 0; a < 12; ++a) {
      st.xi[a] = x[6 + a];
      st.accumulated_shear += dt * std::abs(ev.gamma_dot[a]);
    }
    const Mat3 fp_inv = fp.inverse();
    const Mat3 fe = f * fp_inv;
    st.s = hooke_second_pk(fe, c_);
    out.state = std::move(st);
    out.p = fe * out.state.s * fp_inv.transpose();
    out.dpdf.setZero();
  }

  NodeResponse substep(const NodeMaterialState &old, const Mat3 &f, double dt, int depth, const Mat3 *hint) const {
    if (!(f.determinant() > 0.0)) throw NumericalError("non-invertible deformation");
    if (!(dt > 0.0)) throw UsageError("time increment must be positive");
    NodeResponse out;
    if (solve(old, f, dt, hint, out)) return out;
    if (depth >= kMaxSubstepDepth) throw NumericalError("material point divergence");
    const Mat3 mid = old.f + 0.5 * (f - old.f);
    const NodeResponse half = substep(old, mid, 0.5 * dt, depth + 1, nullptr);
    return substep(half.state, f, 0.5 * dt, depth + 1, nullptr);
  }

  PhenoPlasticityParams p_;
  StiffnessMatrix c_;
  StiffnessMatrix compliance_;
  SlipSystemSet slip_;
  Eigen::MatrixXd h_;
};

} // namespace odmn
