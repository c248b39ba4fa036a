#pragma once

#include "unreg/problem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace unreg {

/// Closed-form minimizers for squared-loss ERM problems:
/// F(x) = (1/2) x^T H x - r^T x + const with H = A^T W A + gamma I, r = A^T W b.
template <typename Scalar>
class LeastSquaresSolver {
 public:
  explicit LeastSquaresSolver(const ErmProblem<Scalar>& p) : p_(&p) {
    const Index n = p.size();
    Vector<Scalar> w(n), b(n);
    for (Index i = 0; i < n; ++i) {
      if (p.loss(i).kind != LossKind::squared) throw ConfigError("LeastSquaresSolver: all losses must be squared");
      w[i] = p.loss(i).weight;
      b[i] = p.loss(i).label;
    }
    const auto& A = p.data();
    hessian_ = A.transpose() * w.asDiagonal() * A;
    hessian_.diagonal().array() += p.explicitStrongConvexity();
    linear_ = A.transpose() * w.cwiseProduct(b);
  }

  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& hessian() const { return hessian_; }

  /// argmin F(x) + (lambda/2)||x - s||^2; lambda = 0 gives argmin F.
  Vector<Scalar> proxMinimizer(const Vector<Scalar>& s, Scalar lambda) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> M = hessian_;
    M.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> ldlt(M);
    if (ldlt.info() != Eigen::Success) throw ConfigError("LeastSquaresSolver: singular system");
    return ldlt.solve(linear_ + lambda * s);
  }

  Vector<Scalar> minimizer() const { return proxMinimizer(Vector<Scalar>::Zero(p_->dim()), Scalar(0)); }
  Scalar minimum() const { return p_->value(minimizer()); }

  /// Smallest and largest eigenvalues of the Hessian of F.
  std::pair<Scalar, Scalar> curvatureRange() const {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> eig(
        hessian_, Eigen::EigenvaluesOnly);
    return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
  }

 private:
  const ErmProblem<Scalar>* p_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hessian_;
  Vector<Scalar> linear_;
};

}  // namespace unreg
