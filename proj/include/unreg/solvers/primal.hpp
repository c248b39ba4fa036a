#pragma once

#include "unreg/proximal.hpp"
#include "unreg/solvers/dual_coordinate.hpp"

#include <cmath>
#include <cstdint>

namespace unreg {

/// f(x) = base(x) + (lambda/2)||x - center||^2 seen as the average of
/// h_i(x) = n psi_i(x) + ((gamma + lambda)/2)-type quadratic terms.
template <FiniteSumObjective Base>
struct FiniteSumView {
  using Scalar = typename Base::Scalar;
  const Base& base;
  Scalar lambda;
  Vector<Scalar> center;

  Index size() const { return base.size(); }
  Scalar quadratic() const { return base.explicitStrongConvexity() + lambda; }
  Scalar mu() const { return base.mu() + lambda; }
  /// Smoothness of the worst h_i.
  Scalar averagedSmoothness() const { return Scalar(size()) * base.componentSmoothness() + quadratic(); }
  Scalar value(const Vector<Scalar>& x) const {
    return base.value(x) + lambda / 2 * (x - center).squaredNorm();
  }
  Vector<Scalar> gradient(const Vector<Scalar>& x) const {
    Vector<Scalar> g = base.gradient(x);
    g += lambda * (x - center);
    return g;
  }
};

template <FiniteSumObjective Base>
FiniteSumView<Base> viewOf(const Proximal<Base>& rp) {
  return {rp.base(), rp.lambda(), rp.center()};
}

template <FiniteSumObjective Base>
FiniteSumView<Base> viewOf(const Base& base) {
  return {base, typename Base::Scalar(0), Vector<typename Base::Scalar>::Zero(base.dim())};
}

/// n (grad psi_i(x) - grad psi_i(anchor)) + quad (x - anchor) + grad f(anchor).
template <FiniteSumObjective Base>
Vector<typename Base::Scalar> varianceReducedGradient(const FiniteSumView<Base>& f,
                                                      const Vector<typename Base::Scalar>& x,
                                                      const Vector<typename Base::Scalar>& anchor,
                                                      const Vector<typename Base::Scalar>& anchorGradient,
                                                      Index i) {
  using Scalar = typename Base::Scalar;
  const Scalar n = Scalar(f.size());
  Vector<Scalar> v = anchorGradient + f.quadratic() * (x - anchor);
  f.base.addComponentGradient(i, x, n, v);
  f.base.addComponentGradient(i, anchor, -n, v);
  return v;
}

template <typename Scalar>
struct SvrgOptions {
  Scalar stepSize = 0;      ///< 0 selects 1 / (10 L_max) with L_max the worst h_i smoothness
  Index stageLength = 0;    ///< inner steps m; 0 selects n
  bool averageIterates = false;
};

template <typename Scalar>
struct SvrgEpochResult {
  Vector<Scalar> x;
  Scalar passes = 0;
  bool finite = true;
};

template <FiniteSumObjective Base>
typename Base::Scalar svrgDefaultStep(const FiniteSumView<Base>& f) {
  return typename Base::Scalar(1) / (10 * f.averagedSmoothness());
}

/// One SVRG stage: full gradient at the anchor, then m variance-reduced
/// steps. Returns the last iterate, or the iterate average when requested.
template <FiniteSumObjective Base>
SvrgEpochResult<typename Base::Scalar> svrgEpoch(const FiniteSumView<Base>& f,
                                                 const Vector<typename Base::Scalar>& anchor,
                                                 const SvrgOptions<typename Base::Scalar>& options,
                                                 Rng& rng) {
  using Scalar = typename Base::Scalar;
  const Index n = f.size();
  const Index m = options.stageLength > 0 ? options.stageLength : n;
  const Scalar eta = options.stepSize > 0 ? options.stepSize : svrgDefaultStep(f);
  const Scalar quad = f.quadratic();
  const Vector<Scalar> anchorGradient = f.gradient(anchor);

  SvrgEpochResult<Scalar> out;
  out.x = anchor;
  Vector<Scalar> average = Vector<Scalar>::Zero(anchor.size());

  if constexpr (LinearModelObjective<Base>) {
    // cache phi_i'(a_i^T anchor): one loss access per inner step
    const auto& A = f.base.data();
    Vector<Scalar> anchorDerivs(n);
    const Vector<Scalar> anchorMargins = A * anchor;
    for (Index i = 0; i < n; ++i) anchorDerivs[i] = lossDerivative(f.base.loss(i), anchorMargins[i]);
    for (Index k = 0; k < m; ++k) {
      const Index i = uniformIndex(rng, n);
      const Scalar z = A.row(i).dot(out.x);
      if (!std::isfinite(z)) {
        out.finite = false;
        break;
      }
      const Scalar coeff = Scalar(n) * (lossDerivative(f.base.loss(i), z) - anchorDerivs[i]);
      out.x -= eta * (anchorGradient + quad * (out.x - anchor));
      out.x -= (eta * coeff) * A.row(i).transpose();
      if (options.averageIterates) average += out.x;
    }
    out.passes = Scalar(1) + Scalar(m) / Scalar(n);
  } else {
    for (Index k = 0; k < m; ++k) {
      const Index i = uniformIndex(rng, n);
      out.x -= eta * varianceReducedGradient(f, out.x, anchor, anchorGradient, i);
      if (!out.x.allFinite()) {
        out.finite = false;
        break;
      }
      if (options.averageIterates) average += out.x;
    }
    out.passes = Scalar(1) + Scalar(2 * m) / Scalar(n);
  }
  if (options.averageIterates && out.finite) out.x = average / Scalar(m);
  if (!out.x.allFinite()) out.finite = false;
  return out;
}

/// Expected per-epoch contraction of SVRG (iterate-averaged anchor):
/// 1/(mu eta (1 - 2 L eta) m) + 2 L eta / (1 - 2 L eta), or >= 1 when the step
/// is too large for the bound to apply.
template <FiniteSumObjective Base>
typename Base::Scalar svrgRate(const FiniteSumView<Base>& f, typename Base::Scalar eta, Index m) {
  using Scalar = typename Base::Scalar;
  const Scalar L = f.averagedSmoothness();
  const Scalar slack = 1 - 2 * L * eta;
  if (slack <= 0) return Scalar(2);
  return Scalar(1) / (f.mu() * eta * slack * Scalar(m)) + 2 * L * eta / slack;
}

/// Smallest m giving svrgRate(f, eta, m) <= target, or 0 if unattainable.
template <FiniteSumObjective Base>
Index svrgStageLengthFor(const FiniteSumView<Base>& f, typename Base::Scalar eta,
                         typename Base::Scalar target) {
  using Scalar = typename Base::Scalar;
  const Scalar L = f.averagedSmoothness();
  const Scalar slack = 1 - 2 * L * eta;
  if (slack <= 0) return 0;
  const Scalar room = target - 2 * L * eta / slack;
  if (room <= 0) return 0;
  return static_cast<Index>(std::ceil(Scalar(1) / (f.mu() * eta * slack * room)));
}

/// Gradient descent step x - eta grad f(x).
template <typename Objective>
Vector<typename Objective::Scalar> gradientStep(const Objective& f, const Vector<typename Objective::Scalar>& x,
                                                typename Objective::Scalar eta) {
  return x - eta * f.gradient(x);
}

/// Nesterov's constant-momentum scheme for mu-strongly convex, L-smooth f.
template <typename Objective>
class AcceleratedGradient {
 public:
  using Scalar = typename Objective::Scalar;

  AcceleratedGradient(const Objective& f, Vector<Scalar> x0, Scalar smoothness, Scalar mu)
      : f_(&f), x_(std::move(x0)), previous_(x_), eta_(Scalar(1) / smoothness) {
    const Scalar root = std::sqrt(smoothness / mu);
    momentum_ = (root - 1) / (root + 1);
  }

  void step() {
    const Vector<Scalar> lookahead = x_ + momentum_ * (x_ - previous_);
    previous_ = x_;
    x_ = lookahead - eta_ * f_->gradient(lookahead);
  }

  const Vector<Scalar>& x() const { return x_; }

 private:
  const Objective* f_;
  Vector<Scalar> x_;
  Vector<Scalar> previous_;
  Scalar eta_;
  Scalar momentum_ = 0;
};

/// Plain SGD on f: x -= (step / sqrt(t)) * (n grad psi_i(x) + quadratic part).
template <FiniteSumObjective Base>
bool sgdSteps(const FiniteSumView<Base>& f, Vector<typename Base::Scalar>& x, typename Base::Scalar step,
              std::int64_t& t, Index count, Rng& rng) {
  using Scalar = typename Base::Scalar;
  const Index n = f.size();
  const Scalar quad = f.quadratic();
  for (Index k = 0; k < count; ++k) {
    ++t;
    const Scalar eta = step / std::sqrt(Scalar(t));
    const Index i = uniformIndex(rng, n);
    Vector<Scalar> g = quad * x - f.lambda * f.center;
    try {
      f.base.addComponentGradient(i, x, Scalar(n), g);
    } catch (const DomainError&) {
      return false;
    }
    x -= eta * g;
    if (!x.allFinite()) return false;
  }
  return true;
}

}  // namespace unreg
