#pragma once

#include "unreg/problem.hpp"

#include <cstdint>
#include <utility>

namespace unreg {

/// The proximal sub-problem f_{s,lambda}(x) = F(x) + (lambda/2)||x - s||^2.
///
/// Holds a non-owning reference to the base objective, which must outlive it.
/// When the base carries an explicit (gamma/2)||x||^2 term, the dual view folds
/// it into the proximal term: lambda + gamma is the effective weight and
/// lambda s / (lambda + gamma) the effective center, up to a constant offset.
template <SmoothObjective Base>
class Proximal {
 public:
  using Scalar = typename Base::Scalar;
  using VectorType = Vector<Scalar>;

  Proximal(const Base& base, VectorType center, Scalar lambda)
      : base_(&base), center_(std::move(center)), lambda_(lambda) {
    if (!(lambda_ > 0)) throw ConfigError("Proximal: lambda must be positive");
    requireSameDim(base.dim(), center_.size(), "Proximal center");
  }

  const Base& base() const { return *base_; }
  const VectorType& center() const { return center_; }
  Scalar lambda() const { return lambda_; }
  Index dim() const { return base_->dim(); }

  /// Strong convexity of f_{s,lambda}.
  Scalar mu() const { return base_->mu() + lambda_; }

  Scalar value(const VectorType& x) const {
    return base_->value(x) + lambda_ / 2 * (x - center_).squaredNorm();
  }

  VectorType gradient(const VectorType& x) const {
    VectorType g = base_->gradient(x);
    g += lambda_ * (x - center_);
    return g;
  }

  /// ||grad f(x)||^2 / (2 mu(f)): a certified upper bound on f(x) - f*.
  Scalar errorBound(const VectorType& x) const {
    return gradient(x).squaredNorm() / (2 * mu());
  }

  /// ceil(L R^2 / lambda); for black-box bases L R^2 is the component smoothness.
  std::int64_t kappaLambda() const {
    if constexpr (requires { base_->radius(); }) {
      return conditionNumber(base_->smoothness(), base_->radius(), lambda_);
    } else {
      return conditionNumber(base_->componentSmoothness(), Scalar(1), lambda_);
    }
  }

  Proximal recentered(VectorType center) const { return Proximal(*base_, std::move(center), lambda_); }

  // --- dual view -----------------------------------------------------------
  Scalar gamma() const {
    if constexpr (requires { base_->explicitStrongConvexity(); }) {
      return base_->explicitStrongConvexity();
    } else {
      return Scalar(0);
    }
  }
  Scalar dualLambda() const { return lambda_ + gamma(); }
  VectorType dualCenter() const { return (lambda_ / dualLambda()) * center_; }
  /// f_{s,lambda}(x) = sum phi_i + (Lambda/2)||x - s'||^2 + offset.
  Scalar dualOffset() const { return lambda_ * gamma() * center_.squaredNorm() / (2 * dualLambda()); }

 private:
  const Base* base_;
  VectorType center_;
  Scalar lambda_;
};

template <typename Scalar>
using RegularizedProblem = Proximal<ErmProblem<Scalar>>;

template <SmoothObjective Base>
typename Base::Scalar regPrimalValue(const Proximal<Base>& rp, const Vector<typename Base::Scalar>& x) {
  requireSameDim(rp.dim(), x.size(), "regPrimalValue");
  return rp.value(x);
}

}  // namespace unreg
