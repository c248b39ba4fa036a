#pragma once

#include "unreg/proximal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace unreg {

/// Dual variables y in R^n with the cached product A^T y in R^d.
template <typename Scalar>
struct DualState {
  Vector<Scalar> y;
  Vector<Scalar> aTy;

  DualState() = default;
  DualState(const RowMatrix<Scalar>& data, Vector<Scalar> dual) : y(std::move(dual)) {
    requireSameDim(data.rows(), y.size(), "DualState");
    refresh(data);
  }

  void refresh(const RowMatrix<Scalar>& data) { aTy.noalias() = data.transpose() * y; }

  /// Applies y_i += delta with the matching O(d) cache update.
  void addToCoordinate(const RowMatrix<Scalar>& data, Index i, Scalar delta) {
    y[i] += delta;
    aTy += delta * data.row(i).transpose();
  }

  /// Distance between the cache and a fresh A^T y.
  Scalar cacheDrift(const RowMatrix<Scalar>& data) const {
    return (data.transpose() * y - aTy).cwiseAbs().maxCoeff();
  }
};

/// g_{s,lambda}(y) = sum_i phi_i*(y_i) + (1/2 lambda)||A^T y||^2 - s^T A^T y.
template <typename Scalar>
Scalar regDualValue(const RegularizedProblem<Scalar>& rp, const DualState<Scalar>& ds) {
  const auto& p = rp.base();
  requireSameDim(p.size(), ds.y.size(), "regDualValue");
  Scalar conj = 0;
  for (Index i = 0; i < p.size(); ++i) {
    try {
      conj += lossConjugate(p.loss(i), ds.y[i]);
    } catch (const DomainError& e) {
      throw DomainError("regDualValue: coordinate " + std::to_string(i) + ": " + e.what());
    }
  }
  const Scalar lam = rp.dualLambda();
  return conj + ds.aTy.squaredNorm() / (2 * lam) - rp.dualCenter().dot(ds.aTy) - rp.dualOffset();
}

/// x_hat_{s,lambda}(y) = s - A^T y / lambda, O(d) from the cache.
template <typename Scalar>
Vector<Scalar> dualToPrimal(const RegularizedProblem<Scalar>& rp, const DualState<Scalar>& ds) {
  return rp.dualCenter() - ds.aTy / rp.dualLambda();
}

/// y_hat(x)_i = phi_i'(a_i^T x), with a fresh cache.
template <typename Scalar>
DualState<Scalar> primalToDual(const ErmProblem<Scalar>& p, const Vector<Scalar>& x) {
  requireSameDim(p.dim(), x.size(), "primalToDual");
  return DualState<Scalar>(p.data(), p.marginDerivatives(x));
}

template <typename Scalar>
Scalar dualityGap(const RegularizedProblem<Scalar>& rp, const Vector<Scalar>& x,
                  const DualState<Scalar>& ds) {
  return regPrimalValue(rp, x) + regDualValue(rp, ds);
}

/// Warm start for the next stage: if x = x_hat_s(y) then x_hat_x(y) = 2x - s
/// (more generally x + lambda/(lambda+gamma) (x - s)).
template <typename Scalar>
Vector<Scalar> recenteredPrimal(const RegularizedProblem<Scalar>& rp, const Vector<Scalar>& x) {
  return x + (rp.lambda() / rp.dualLambda()) * (x - rp.center());
}

/// Outcome of checking lhs <= rhs with additive slack 1e-9 (1 + |lhs| + |rhs|).
template <typename Scalar>
struct InequalityCheck {
  Scalar lhs = 0;
  Scalar rhs = 0;
  Scalar tolerance = 0;

  Scalar margin() const { return rhs + tolerance - lhs; }
  bool holds() const { return lhs <= rhs + tolerance; }
  explicit operator bool() const { return holds(); }
};

template <typename Scalar>
InequalityCheck<Scalar> makeCheck(Scalar lhs, Scalar rhs, Scalar relTol = Scalar(1e-9)) {
  return {lhs, rhs, relTol * (1 + std::abs(lhs) + std::abs(rhs))};
}

/// value - optimum, floored at 0: an error against a true optimum is
/// non-negative and anything below is rounding.
template <typename Scalar>
Scalar errorAbove(Scalar value, Scalar optimum) {
  return std::max(value - optimum, Scalar(0));
}

/// f(x_hat(y)) - f* <= 2 (n kappa_lambda)^2 (g(y) - g*).
template <typename Scalar>
InequalityCheck<Scalar> checkDualBoundsPrimal(const RegularizedProblem<Scalar>& rp,
                                              const DualState<Scalar>& ds, Scalar fStar,
                                              Scalar gStar) {
  const Scalar n = Scalar(rp.base().size());
  const Scalar kl = Scalar(rp.kappaLambda());
  const Scalar lhs = errorAbove(rp.value(dualToPrimal(rp, ds)), fStar);
  const Scalar rhs = 2 * (n * kl) * (n * kl) * errorAbove(regDualValue(rp, ds), gStar);
  return makeCheck(lhs, rhs);
}

/// Which constant to use in the initial-dual-error bound.
enum class InitialDualConstant {
  /// 2 n kappa_lambda: what the gradient-norm argument establishes.
  proved,
  /// 2 kappa_lambda as usually quoted; fails on some instances with n > 2.
  asStated,
};

/// g_{x,lambda}(y_hat(x)) - g* <= C (f_{x,lambda}(x) - f*), centered at x itself.
template <typename Scalar>
InequalityCheck<Scalar> checkInitialDualError(const ErmProblem<Scalar>& p, const Vector<Scalar>& x,
                                              Scalar lambda, Scalar fStar, Scalar gStar,
                                              InitialDualConstant constant = InitialDualConstant::proved) {
  const RegularizedProblem<Scalar> rp(p, x, lambda);
  const DualState<Scalar> ds = primalToDual(p, x);
  const Scalar kl = Scalar(rp.kappaLambda());
  const Scalar factor = constant == InitialDualConstant::proved ? 2 * Scalar(p.size()) * kl : 2 * kl;
  return makeCheck(errorAbove(regDualValue(rp, ds), gStar), factor * errorAbove(rp.value(x), fStar));
}

/// Optima needed by the re-centering bound.
template <typename Scalar>
struct RecenterOptima {
  Scalar gStarOld;  ///< min g_{xOld,lambda}
  Scalar gStarNew;  ///< min g_{xNew,lambda}
  Scalar FStar;     ///< min F
};

/// g_{x',lambda}(y) - g*' <= 2 (g_{x,lambda}(y) - g*) + 4 n kappa [F(x') - F* + F(x) - F*]
/// where x' = x_hat_{x,lambda}(y).
template <typename Scalar>
InequalityCheck<Scalar> checkRecenterErrorBound(const ErmProblem<Scalar>& p, const DualState<Scalar>& ds,
                                                const Vector<Scalar>& xOld, Scalar lambda,
                                                const RecenterOptima<Scalar>& optima) {
  const RegularizedProblem<Scalar> oldRp(p, xOld, lambda);
  const Vector<Scalar> xNew = dualToPrimal(oldRp, ds);
  const RegularizedProblem<Scalar> newRp(p, xNew, lambda);
  const Scalar lhs = errorAbove(regDualValue(newRp, ds), optima.gStarNew);
  const Scalar n = Scalar(p.size());
  const Scalar rhs = 2 * errorAbove(regDualValue(oldRp, ds), optima.gStarOld) +
                     4 * n * Scalar(p.kappa()) *
                         (errorAbove(p.value(xNew), optima.FStar) + errorAbove(p.value(xOld), optima.FStar));
  return makeCheck(lhs, rhs);
}

}  // namespace unreg
