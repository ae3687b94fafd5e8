#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "odmn/error.hpp"
#include "odmn/homogenizer.hpp"
#include "odmn/network.hpp"
#include "odmn/tensor.hpp"

namespace odmn {

/// Handle to a value recorded on a GradientTape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over small dense matrices.
///
/// The primitive set is closed: the offline forward pass only needs sums,
/// products, transposes, scalar scaling, small inverses, softplus, and the
/// two trigonometric constructors (per-axis Voigt rotation factor and the
/// interface basis H(theta, phi)). Scalars are 1x1 matrices.
class GradientTape {
public:
  using Matrix = Eigen::MatrixXd;

  enum class Op {
    leaf,
    add,
    sub,
    matmul,
    transpose,
    scale,
    inverse,
    softplus,
    frob_dot,
    voigt_rotation,
    interface_basis,
  };

  Var leaf(Matrix value) { return push(Op::leaf, {}, {}, 0, std::move(value)); }
  Var scalar(double value) { return leaf(Matrix::Constant(1, 1, value)); }

  Var add(Var a, Var b) {
    check_same_shape(a, b);
    return push(Op::add, a, b, 0, value(a) + value(b));
  }
  Var sub(Var a, Var b) {
    check_same_shape(a, b);
    return push(Op::sub, a, b, 0, value(a) - value(b));
  }
  Var matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) throw Error("tape matmul: shape mismatch");
    return push(Op::matmul, a, b, 0, value(a) * value(b));
  }
  Var transpose(Var a) { return push(Op::transpose, a, {}, 0, value(a).transpose()); }
  /// s * a with s a 1x1 value.
  Var scale(Var a, Var s) {
    check_scalar(s);
    return push(Op::scale, a, s, 0, value(s)(0, 0) * value(a));
  }
  /// Inverse of a 1x1, 2x2 or 3x3 matrix via the adjugate.
  Var inverse(Var a) { return push(Op::inverse, a, {}, 0, adjugate_inverse(value(a))); }
  Var softplus(Var a) { return push(Op::softplus, a, {}, 0, softplus_of(value(a))); }
  /// sum_ij a_ij b_ij as a 1x1 value.
  Var frob_dot(Var a, Var b) {
    check_same_shape(a, b);
    return push(Op::frob_dot, a, b, 0, Matrix::Constant(1, 1, value(a).cwiseProduct(value(b)).sum()));
  }
  /// 6x6 Voigt stress-rotation factor about `axis` by the 1x1 angle.
  Var voigt_rotation(int axis, Var angle) {
    check_scalar(angle);
    return push(Op::voigt_rotation, angle, {}, axis,
                voigt_axis_factor<double>(axis, value(angle)(0, 0), false));
  }
  /// 6x3 interface basis H(N(theta, phi)).
  Var interface_basis(Var theta, Var phi) {
    check_scalar(theta);
    check_scalar(phi);
    return push(Op::interface_basis, theta, phi, 0, basis_of(value(theta)(0, 0), value(phi)(0, 0)));
  }

  const Matrix &value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix &adjoint(Var v) const { return nodes_.at(v.id).adjoint; }
  double scalar_value(Var v) const { return value(v)(0, 0); }
  double scalar_adjoint(Var v) const { return adjoint(v)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  void set_leaf(Var v, Matrix value) {
    auto &node = nodes_.at(v.id);
    if (node.op != Op::leaf) throw Error("set_leaf: not a leaf");
    node.value = std::move(value);
  }

  /// Recomputes every recorded value from the current leaf values, in
  /// recording order.
  void replay() {
    for (auto &node : nodes_) {
      if (node.op == Op::leaf) continue;
      node.value = evaluate(node);
    }
  }

  /// Accumulates d(output)/d(node) into every node's adjoint. `output` must
  /// be 1x1.
  void backward(Var output) {
    check_scalar(output);
    for (auto &node : nodes_) node.adjoint.setZero(node.value.rows(), node.value.cols());
    nodes_[output.id].adjoint(0, 0) = 1.0;
    for (std::size_t k = output.id + 1; k-- > 0;) propagate(nodes_[k]);
  }

private:
  struct Node {
    Op op;
    std::size_t a = 0, b = 0;
    int aux = 0;
    Matrix value;
    Matrix adjoint;
  };

  Var push(Op op, Var a, Var b, int aux, Matrix value) {
    nodes_.push_back(Node{op, a.id, b.id, aux, std::move(value), Matrix()});
    return Var{nodes_.size() - 1};
  }

  void check_scalar(Var v) const {
    if (value(v).rows() != 1 || value(v).cols() != 1) throw Error("tape: expected a 1x1 value");
  }
  void check_same_shape(Var a, Var b) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw Error("tape: shape mismatch");
  }

  static Matrix softplus_of(const Matrix &a) {
    return a.unaryExpr([](double x) { return node_weight(x); });
  }

  static Matrix basis_of(double theta, double phi) {
    const Vec3 n = direction_vector(theta, phi);
    return odmn::interface_basis<double>(n);
  }

  static Matrix adjugate_inverse(const Matrix &a) {
    if (a.rows() != a.cols() || a.rows() > 3 || a.rows() < 1)
      throw Error("tape inverse: only 1x1, 2x2 and 3x3 supported");
    const auto n = a.rows();
    Matrix adj(n, n);
    double det;
    if (n == 1) {
      adj(0, 0) = 1.0;
      det = a(0, 0);
    } else if (n == 2) {
      adj << a(1, 1), -a(0, 1), -a(1, 0), a(0, 0);
      det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    } else {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const int r0 = (j + 1) % 3, r1 = (j + 2) % 3;
          const int c0 = (i + 1) % 3, c1 = (i + 2) % 3;
          adj(i, j) = a(r0, c0) * a(r1, c1) - a(r0, c1) * a(r1, c0);
        }
      det = a(0, 0) * adj(0, 0) + a(0, 1) * adj(1, 0) + a(0, 2) * adj(2, 0);
    }
    if (det == 0.0 || !std::isfinite(det)) throw NumericalError("tape inverse: singular matrix");
    return adj / det;
  }

  Matrix evaluate(const Node &n) const {
    const Matrix &a = nodes_[n.a].value;
    switch (n.op) {
    case Op::leaf: return n.value;
    case Op::add: return a + nodes_[n.b].value;
    case Op::sub: return a - nodes_[n.b].value;
    case Op::matmul: return a * nodes_[n.b].value;
    case Op::transpose: return a.transpose();
    case Op::scale: return nodes_[n.b].value(0, 0) * a;
    case Op::inverse: return adjugate_inverse(a);
    case Op::softplus: return softplus_of(a);
    case Op::frob_dot: return Matrix::Constant(1, 1, a.cwiseProduct(nodes_[n.b].value).sum());
    case Op::voigt_rotation: return voigt_axis_factor<double>(n.aux, a(0, 0), false);
    case Op::interface_basis: return basis_of(a(0, 0), nodes_[n.b].value(0, 0));
    }
    throw Error("tape: unknown op");
  }

  void propagate(const Node &n) {
    const Matrix &g = n.adjoint;
    switch (n.op) {
    case Op::leaf: return;
    case Op::add:
      nodes_[n.a].adjoint += g;
      nodes_[n.b].adjoint += g;
      return;
    case Op::sub:
      nodes_[n.a].adjoint += g;
      nodes_[n.b].adjoint -= g;
      return;
    case Op::matmul: {
      const Matrix &a = nodes_[n.a].value;
      const Matrix &b = nodes_[n.b].value;
      nodes_[n.a].adjoint.noalias() += g * b.transpose();
      nodes_[n.b].adjoint.noalias() += a.transpose() * g;
      return;
    }
    case Op::transpose: nodes_[n.a].adjoint += g.transpose(); return;
    case Op::scale: {
      const double s = nodes_[n.b].value(0, 0);
      nodes_[n.b].adjoint(0, 0) += g.cwiseProduct(nodes_[n.a].value).sum();
      nodes_[n.a].adjoint += s * g;
      return;
    }
    case Op::inverse: {
      // d(A^{-1}) = -A^{-1} dA A^{-1}
      const Matrix inv_t = n.value.transpose();
      nodes_[n.a].adjoint.noalias() -= inv_t * g * inv_t;
      return;
    }
    case Op::softplus: {
      const Matrix &a = nodes_[n.a].value;
      for (Eigen::Index i = 0; i < a.size(); ++i)
        nodes_[n.a].adjoint(i) += g(i) * node_weight_derivative(a(i));
      return;
    }
    case Op::frob_dot: {
      const double s = g(0, 0);
      const Matrix a = nodes_[n.a].value;
      const Matrix b = nodes_[n.b].value;
      nodes_[n.a].adjoint += s * b;
      nodes_[n.b].adjoint += s * a;
      return;
    }
    case Op::voigt_rotation: {
      const Matrix d = n.value * voigt_axis_generator(n.aux, false);
      nodes_[n.a].adjoint(0, 0) += g.cwiseProduct(d).sum();
      return;
    }
    case Op::interface_basis: {
      constexpr double pi = std::numbers::pi;
      const double theta = nodes_[n.a].value(0, 0);
      const double phi = nodes_[n.b].value(0, 0);
      const double st = std::sin(pi * theta), ct = std::cos(pi * theta);
      const double sp = std::sin(2 * pi * phi), cp = std::cos(2 * pi * phi);
      const Vec3 dtheta(pi * cp * ct, pi * sp * ct, -pi * st);
      const Vec3 dphi(-2 * pi * sp * st, 2 * pi * cp * st, 0.0);
      double gt = 0.0, gp = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double dk = g.cwiseProduct(odmn::interface_basis<double>(Vec3::Unit(k))).sum();
        gt += dtheta[k] * dk;
        gp += dphi[k] * dk;
      }
      nodes_[n.a].adjoint(0, 0) += gt;
      nodes_[n.b].adjoint(0, 0) += gp;
      return;
    }
    }
  }

  std::vector<Node> nodes_;
};

} // namespace odmn
