#pragma once

#include "unreg/duality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace unreg {

using Rng = std::mt19937_64;

inline Index uniformIndex(Rng& rng, Index n) {
  return static_cast<Index>(std::uniform_int_distribution<std::int64_t>(0, n - 1)(rng));
}

/// Exactly minimizes z -> g_{s,lambda}(y + z e_i), applies the step to y_i and
/// the cache in O(d), and returns the step.
template <typename Scalar>
Scalar sdcaCoordinateStep(const RegularizedProblem<Scalar>& rp, DualState<Scalar>& ds, Index i) {
  const auto& p = rp.base();
  const auto row = p.data().row(i);
  const Scalar lam = rp.dualLambda();
  const Scalar curvature = p.rowSquaredNorms()[i] / lam;
  Scalar updated;
  if (curvature > 0) {
    // g restricted to coordinate i: phi*(u) + (q/2)(u - y_i)^2 + slope (u - y_i)
    const Scalar slope = row.dot(ds.aTy) / lam - row.dot(rp.dualCenter());
    updated = conjugateProx(p.loss(i), ds.y[i] - slope / curvature, curvature);
  } else {
    updated = conjugateProx(p.loss(i), Scalar(0), Scalar(0));
  }
  const Scalar delta = updated - ds.y[i];
  if (delta != 0) ds.addToCoordinate(p.data(), i, delta);
  return delta;
}

/// n uniformly sampled coordinate steps followed by a full cache refresh.
template <typename Scalar>
void sdcaPass(const RegularizedProblem<Scalar>& rp, DualState<Scalar>& ds, Rng& rng) {
  const Index n = rp.base().size();
  for (Index k = 0; k < n; ++k) sdcaCoordinateStep(rp, ds, uniformIndex(rng, n));
  ds.refresh(rp.base().data());
}

/// Per-step expected contraction of the dual error under exact coordinate
/// minimization with uniform sampling: 1 - lambda / (n (lambda + max_i L_i ||a_i||^2)).
template <typename Scalar>
Scalar sdcaRate(const RegularizedProblem<Scalar>& rp) {
  const auto& p = rp.base();
  const Scalar lam = rp.dualLambda();
  return Scalar(1) - lam / (Scalar(p.size()) * (lam + p.componentSmoothness()));
}

/// Strong convexity of g_{s,lambda} in the norm weighted by the coordinate
/// smoothness constants ||a_i||^2 / lambda, capped at 1.
template <typename Scalar>
Scalar apcgStrongConvexity(const RegularizedProblem<Scalar>& rp) {
  const auto& p = rp.base();
  const Scalar lam = rp.dualLambda();
  Scalar mu = 1;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar lip = p.rowSquaredNorms()[i] / lam;
    const Scalar conjStrong = Scalar(1) / p.loss(i).smoothness();
    if (lip > 0) mu = std::min(mu, conjStrong / lip);
  }
  return mu;
}

/// Expected per-iteration contraction of APCG: 1 - sqrt(mu) / n.
template <typename Scalar>
Scalar apcgRate(const RegularizedProblem<Scalar>& rp) {
  return Scalar(1) - std::sqrt(apcgStrongConvexity(rp)) / Scalar(rp.base().size());
}

/// Accelerated proximal coordinate gradient on g_{s,lambda}, strongly convex
/// variant with alpha = sqrt(mu)/n and blocks of size one:
///
///   y_k     = (x_k + alpha z_k) / (1 + alpha)
///   z_{k+1} = argmin (n alpha / 2)||z - (1-alpha) z_k - alpha y_k||_L^2 + <grad_i f(y_k), z_i> + phi_i*(z_i)
///   x_{k+1} = y_k + n alpha (z_{k+1} - z_k) + (mu/n)(z_k - y_k)
///
/// The full-vector recursions reduce to p = x + z being updated sparsely and
/// q = x - z contracting by theta = (1-alpha)/(1+alpha) plus a sparse update,
/// so each iteration costs O(d). q is stored as q / theta^k.
template <typename Scalar>
class Apcg {
 public:
  Apcg(const RegularizedProblem<Scalar>& rp, const DualState<Scalar>& start)
      : rp_(&rp),
        lambda_(rp.dualLambda()),
        alpha_(std::sqrt(apcgStrongConvexity(rp)) / Scalar(rp.base().size())),
        theta_((1 - alpha_) / (1 + alpha_)),
        stepWeight_(Scalar(rp.base().size()) * alpha_),
        centerProducts_(rp.base().data() * rp.dualCenter()),
        sum_(2 * start.y),
        diff_(Vector<Scalar>::Zero(start.y.size())),
        aTsum_(2 * start.aTy),
        aTdiff_(Vector<Scalar>::Zero(start.aTy.size())) {}

  void run(std::int64_t iterations, Rng& rng) {
    const auto& p = rp_->base();
    const auto& A = p.data();
    const Index n = p.size();
    // floor keeps zero rows well defined; such coordinates decouple anyway
    const Scalar lipFloor = std::numeric_limits<Scalar>::min() / std::numeric_limits<Scalar>::epsilon();
    for (std::int64_t k = 0; k < iterations; ++k) {
      const Index i = uniformIndex(rng, n);
      const auto row = A.row(i);
      const Scalar xi = (sum_[i] + scale_ * diff_[i]) / 2;
      const Scalar zi = (sum_[i] - scale_ * diff_[i]) / 2;
      const Scalar yi = (xi + alpha_ * zi) / (1 + alpha_);
      const Scalar rowATy = row.dot(aTsum_) / 2 + theta_ * scale_ * row.dot(aTdiff_) / 2;
      const Scalar grad = rowATy / lambda_ - centerProducts_[i];
      const Scalar zhat = (1 - alpha_) * zi + alpha_ * yi;
      const Scalar weight = stepWeight_ * std::max(p.rowSquaredNorms()[i] / lambda_, lipFloor);
      const Scalar znew = conjugateProx(p.loss(i), zhat - grad / weight, weight);
      const Scalar delta = znew - zhat;

      const Scalar sumStep = (stepWeight_ + 1) * delta;
      sum_[i] += sumStep;
      aTsum_ += sumStep * row.transpose();
      scale_ *= theta_;
      const Scalar diffStep = (stepWeight_ - 1) * delta / scale_;
      diff_[i] += diffStep;
      aTdiff_ += diffStep * row.transpose();
      if (scale_ < Scalar(1e-150)) {
        diff_ *= scale_;
        aTdiff_ *= scale_;
        scale_ = 1;
      }
    }
  }

  /// Writes the current x_k with a freshly computed cache.
  void current(DualState<Scalar>& ds) const {
    const auto& p = rp_->base();
    // x_k is a convex combination of the z's, so it stays in the conjugate
    // domain up to rounding.
    ds.y = (sum_ + scale_ * diff_) / 2;
    for (Index i = 0; i < p.size(); ++i) {
      const auto [lo, hi] = conjugateDomain(p.loss(i));
      ds.y[i] = std::clamp(ds.y[i], lo, hi);
    }
    ds.refresh(p.data());
  }

 private:
  const RegularizedProblem<Scalar>* rp_;
  Scalar lambda_;
  Scalar alpha_;
  Scalar theta_;
  Scalar stepWeight_;
  Vector<Scalar> centerProducts_;
  Vector<Scalar> sum_;     // x + z
  Vector<Scalar> diff_;    // (x - z) / scale
  Vector<Scalar> aTsum_;
  Vector<Scalar> aTdiff_;
  Scalar scale_ = 1;
};

template <typename Scalar>
void apcgSolve(const RegularizedProblem<Scalar>& rp, DualState<Scalar>& ds, std::int64_t iterations,
               Rng& rng) {
  Apcg<Scalar> solver(rp, ds);
  solver.run(iterations, rng);
  solver.current(ds);
}

}  // namespace unreg
