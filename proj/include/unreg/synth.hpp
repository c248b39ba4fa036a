#pragma once

#include "unreg/data.hpp"
#include "unreg/loss.hpp"

#include <cstdint>

namespace unreg {

struct SynthSpec {
  LossKind kind = LossKind::squared;
  Index n = 2000;
  Index d = 50;
  /// Target ceil(L R^2 / mu); exact for least squares, shapes the spectrum for logistic.
  double kappa = 100;
  std::uint64_t seed = 0;
  /// Regression noise level relative to the signal.
  double noise = 0.1;
  /// Probability of flipping a classification label.
  double labelFlip = 0.1;

  void validate() const;
};

struct SynthResult {
  Dataset data;
  /// Strong convexity of F under the 1/n-weighted loss; for logistic the
  /// smallest Hessian eigenvalue at the minimizer.
  double mu = 0;
  std::int64_t kappa = 0;
  double fStar = 0;
};

/// A = U S V^T with orthonormal U (n x d), orthogonal V and a geometric
/// singular-value profile tuned by bisection to reach the target kappa; rows
/// rescaled to mean norm sqrt(d).
SynthResult synthesize(const SynthSpec& spec);

}  // namespace unreg
