#pragma once

#include "unreg/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace unreg {

enum class LossKind { squared, logistic };

/// A scalar loss phi(z) attached to one example: its label b and a positive
/// per-example weight w.
///
///   squared:  w * (z - b)^2 / 2
///   logistic: w * log(1 + exp(-z b))
template <typename Scalar>
struct ScalarLoss {
  LossKind kind = LossKind::squared;
  Scalar label = 0;
  Scalar weight = 1;

  static ScalarLoss squared(Scalar label, Scalar weight = 1) {
    return validated({LossKind::squared, label, weight});
  }
  static ScalarLoss logistic(Scalar label, Scalar weight = 1) {
    return validated({LossKind::logistic, label, weight});
  }

  static ScalarLoss validated(ScalarLoss loss) {
    if (!(loss.weight > 0) || !std::isfinite(loss.weight)) {
      throw ConfigError("loss weight must be positive and finite");
    }
    if (!std::isfinite(loss.label)) throw ConfigError("loss label must be finite");
    if (loss.kind == LossKind::logistic && loss.label == 0) {
      throw ConfigError("logistic loss needs a non-zero label");
    }
    return loss;
  }

  /// Smoothness constant of z -> phi(z).
  Scalar smoothness() const {
    return kind == LossKind::squared ? weight : weight * label * label / Scalar(4);
  }
};

namespace detail {

template <typename Scalar>
void requireFinite(Scalar z, const char* what) {
  if (!std::isfinite(z)) throw DomainError(std::string(what) + ": non-finite argument");
}

/// log(1 + exp(t)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

/// 1 / (1 + exp(-t)) without overflow.
template <typename Scalar>
Scalar sigmoid(Scalar t) {
  if (t >= 0) return Scalar(1) / (Scalar(1) + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar xlogx(Scalar t) {
  return t > 0 ? t * std::log(t) : Scalar(0);
}

}  // namespace detail

template <typename Scalar>
Scalar lossValue(const ScalarLoss<Scalar>& loss, Scalar z) {
  detail::requireFinite(z, "lossValue");
  if (loss.kind == LossKind::squared) {
    const Scalar r = z - loss.label;
    return loss.weight * r * r / Scalar(2);
  }
  return loss.weight * detail::softplus(-z * loss.label);
}

template <typename Scalar>
Scalar lossDerivative(const ScalarLoss<Scalar>& loss, Scalar z) {
  detail::requireFinite(z, "lossDerivative");
  if (loss.kind == LossKind::squared) return loss.weight * (z - loss.label);
  return -loss.weight * loss.label * detail::sigmoid(-z * loss.label);
}

template <typename Scalar>
Scalar lossSecondDerivative(const ScalarLoss<Scalar>& loss, Scalar z) {
  if (loss.kind == LossKind::squared) return loss.weight;
  const Scalar s = detail::sigmoid(-z * loss.label);
  return loss.weight * loss.label * loss.label * s * (Scalar(1) - s);
}

/// Closed interval on which the conjugate is finite. Unbounded for squared loss.
template <typename Scalar>
std::pair<Scalar, Scalar> conjugateDomain(const ScalarLoss<Scalar>& loss) {
  constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();
  if (loss.kind == LossKind::squared) return {-inf, inf};
  // u = -w b t with t in [0, 1]
  const Scalar end = -loss.weight * loss.label;
  return {std::min(Scalar(0), end), std::max(Scalar(0), end)};
}

/// Moves u strictly inside the conjugate domain by a relative margin.
template <typename Scalar>
Scalar clampToConjugateInterior(const ScalarLoss<Scalar>& loss, Scalar u, Scalar margin) {
  if (loss.kind == LossKind::squared) return u;
  const auto [lo, hi] = conjugateDomain(loss);
  const Scalar pad = margin * (hi - lo);
  return std::clamp(u, lo + pad, hi - pad);
}

/// Fenchel conjugate phi*(u). For logistic loss the boundary of the domain is
/// included with 0 log 0 = 0.
template <typename Scalar>
Scalar lossConjugate(const ScalarLoss<Scalar>& loss, Scalar u) {
  detail::requireFinite(u, "lossConjugate");
  if (loss.kind == LossKind::squared) {
    return u * u / (Scalar(2) * loss.weight) + loss.label * u;
  }
  Scalar t = -u / (loss.weight * loss.label);
  // a few ulps of slack absorb rounding in -w b sigma(.)
  constexpr Scalar slack = 8 * std::numeric_limits<Scalar>::epsilon();
  if (t < -slack) {
    throw DomainError("lossConjugate: u = " + std::to_string(double(u)) +
                      " violates lower bound t >= 0 of the logistic conjugate domain");
  }
  if (t > Scalar(1) + slack) {
    throw DomainError("lossConjugate: u = " + std::to_string(double(u)) +
                      " violates upper bound t <= 1 of the logistic conjugate domain");
  }
  t = std::clamp(t, Scalar(0), Scalar(1));
  return loss.weight * (detail::xlogx(t) + detail::xlogx(Scalar(1) - t));
}

/// argmin_z phi(z) + (gamma/2)(z - center)^2.
template <typename Scalar>
Scalar lossProx1d(const ScalarLoss<Scalar>& loss, Scalar center, Scalar gamma) {
  if (!(gamma > 0)) throw ConfigError("lossProx1d: gamma must be positive");
  detail::requireFinite(center, "lossProx1d");
  if (loss.kind == LossKind::squared) {
    return (loss.weight * loss.label + gamma * center) / (loss.weight + gamma);
  }

  // Guarded Newton on h(z) = phi'(z) + gamma (z - center), which is increasing.
  // |phi'| <= w|b| brackets the root.
  const Scalar reach = loss.weight * std::abs(loss.label) / gamma;
  Scalar lo = center - reach;
  Scalar hi = center + reach;
  Scalar z = center;
  for (int iter = 0; iter < 200; ++iter) {
    const Scalar h = lossDerivative(loss, z) + gamma * (z - center);
    if (h == 0) break;
    if (h > 0) hi = z; else lo = z;
    const Scalar slope = lossSecondDerivative(loss, z) + gamma;
    Scalar next = z - h / slope;
    if (!(next > lo && next < hi)) next = lo + (hi - lo) / 2;
    const Scalar step = next - z;
    z = next;
    if (std::abs(step) < Scalar(1e-12) * std::max(Scalar(1), std::abs(z))) break;
    if (hi - lo <= std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), std::abs(z))) break;
  }
  return z;
}

/// argmin_u phi*(u) + (beta/2)(u - center)^2. With beta = 0 this is the
/// minimizer of phi*, namely phi'(0).
template <typename Scalar>
Scalar conjugateProx(const ScalarLoss<Scalar>& loss, Scalar center, Scalar beta) {
  if (beta < 0) throw ConfigError("conjugateProx: beta must be non-negative");
  if (beta == 0) return lossDerivative(loss, Scalar(0));
  if (loss.kind == LossKind::squared) {
    return loss.weight * (beta * center - loss.label) / (loss.weight * beta + Scalar(1));
  }
  // Moreau: the minimizer is phi'(z) where z = prox_{phi, 1/beta}(beta * center).
  const Scalar z = lossProx1d(loss, beta * center, Scalar(1) / beta);
  return lossDerivative(loss, z);
}

}  // namespace unreg
