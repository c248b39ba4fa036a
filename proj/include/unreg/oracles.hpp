#pragma once

#include "unreg/duality.hpp"
#include "unreg/solvers/dual_coordinate.hpp"
#include "unreg/solvers/primal.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace unreg {

enum class OracleMode { theory, practical };

enum class SolverKind { svrg, sdca, apcg, gd, agd, sgd };

inline std::string toString(SolverKind kind) {
  switch (kind) {
    case SolverKind::svrg: return "svrg";
    case SolverKind::sdca: return "sdca";
    case SolverKind::apcg: return "apcg";
    case SolverKind::gd: return "gd";
    case SolverKind::agd: return "agd";
    case SolverKind::sgd: return "sgd";
  }
  return "?";
}

/// Accuracy contract for an inner solve: reduce the sub-problem error by c.
template <typename Scalar>
struct OracleSpec {
  Scalar c = 2;
  Scalar lambda = 1;
  OracleMode mode = OracleMode::theory;
  /// practical mode stops once the certified gap shrank by this factor
  Scalar practicalGapFactor = 1e3;
  std::int64_t maxPasses = 100;

  void validate() const {
    if (!(c > 1)) throw ConfigError("OracleSpec: c must exceed 1");
    if (!(lambda > 0)) throw ConfigError("OracleSpec: lambda must be positive");
    if (!(practicalGapFactor > 1)) throw ConfigError("OracleSpec: practicalGapFactor must exceed 1");
    if (maxPasses < 1) throw ConfigError("OracleSpec: maxPasses must be >= 1");
  }
};

struct SolverConfig {
  SolverKind kind = SolverKind::svrg;
  double stepSize = 0;   ///< 0 selects the solver default
  Index stageLength = 0; ///< SVRG inner steps; 0 selects the solver default
  std::uint64_t seed = 0;

  void validate() const {
    if (stepSize < 0) throw ConfigError("SolverConfig: stepSize must be positive");
    if (stageLength < 0) throw ConfigError("SolverConfig: stageLength must be >= 1");
  }
};

template <typename Scalar>
struct OracleResult {
  Vector<Scalar> point;
  Scalar passes = 0;
  std::optional<Scalar> certifiedGap;
  bool converged = true;
};

namespace detail {

template <typename Scalar>
std::int64_t iterationsFor(Scalar reduction, Scalar rate) {
  if (reduction <= 1) return 0;
  if (!(rate < 1)) throw ConfigError("oracle: no contraction available for the requested reduction");
  const Scalar k = std::ceil(std::log(reduction) / -std::log1p(rate - 1));
  if (!(k < Scalar(std::numeric_limits<std::int64_t>::max() / 4))) {
    throw ConfigError("oracle: iteration budget overflows");
  }
  return static_cast<std::int64_t>(k);
}

template <typename Scalar>
void requireLambda(Scalar expected, Scalar actual) {
  if (std::abs(expected - actual) > Scalar(1e-12) * std::abs(actual)) {
    throw ConfigError("oracle: spec.lambda does not match the sub-problem");
  }
}

template <typename Base>
constexpr bool isErm = std::same_as<Base, ErmProblem<typename Base::Scalar>>;

}  // namespace detail

/// Duality gap at x paired with y_hat(x) for ERM bases; otherwise the
/// strong-convexity bound ||grad f||^2 / (2 mu). Both dominate f(x) - f*.
template <SmoothObjective Base>
typename Base::Scalar certifiedPrimalGap(const Proximal<Base>& rp, const Vector<typename Base::Scalar>& x) {
  if constexpr (detail::isErm<Base>) {
    return dualityGap(rp, x, primalToDual(rp.base(), x));
  } else {
    return rp.errorBound(x);
  }
}

/// Certified gap of the primal-dual pair (x_hat(y), y).
template <typename Scalar>
Scalar certifiedDualGap(const RegularizedProblem<Scalar>& rp, const DualState<Scalar>& ds) {
  return dualityGap(rp, dualToPrimal(rp, ds), ds);
}

/// Dual (c, lambda)-oracle: returns y with g(y) - g* <= (g(y0) - g*) / c, in
/// expectation. Theory mode runs the iteration count of the solver's rate
/// bound; practical mode runs whole passes until the certified gap has shrunk
/// by practicalGapFactor or maxPasses is reached.
template <typename Scalar>
OracleResult<Scalar> dualOracleSolve(const RegularizedProblem<Scalar>& rp, DualState<Scalar>& ds,
                                     const OracleSpec<Scalar>& spec, const SolverConfig& cfg, Rng& rng) {
  spec.validate();
  cfg.validate();
  detail::requireLambda(spec.lambda, rp.lambda());
  if (cfg.kind != SolverKind::sdca && cfg.kind != SolverKind::apcg) {
    throw ConfigError("dual oracle needs an sdca or apcg solver");
  }
  const Index n = rp.base().size();
  OracleResult<Scalar> result;

  if (spec.mode == OracleMode::theory) {
    if (cfg.kind == SolverKind::sdca) {
      const std::int64_t steps = detail::iterationsFor(spec.c, sdcaRate(rp));
      for (std::int64_t k = 0; k < steps; ++k) {
        sdcaCoordinateStep(rp, ds, uniformIndex(rng, n));
        if ((k + 1) % n == 0) ds.refresh(rp.base().data());
      }
      ds.refresh(rp.base().data());
      result.passes = Scalar(steps) / Scalar(n);
    } else {
      // E[g(x_k) - g*] <= rate^k (g(x_0) - g* + (mu/2)||x_0 - y*||_L^2) <= 2 rate^k (g(x_0) - g*)
      const std::int64_t steps = detail::iterationsFor(2 * spec.c, apcgRate(rp));
      apcgSolve(rp, ds, steps, rng);
      result.passes = Scalar(steps) / Scalar(n);
    }
    result.certifiedGap = certifiedDualGap(rp, ds);
  } else {
    const Scalar initialGap = certifiedDualGap(rp, ds);
    const Scalar target = initialGap / spec.practicalGapFactor;
    Scalar gap = initialGap;
    std::optional<Apcg<Scalar>> apcg;
    if (cfg.kind == SolverKind::apcg) apcg.emplace(rp, ds);
    std::int64_t passes = 0;
    while (gap > target && passes < spec.maxPasses) {
      if (apcg) {
        apcg->run(n, rng);
        apcg->current(ds);
      } else {
        sdcaPass(rp, ds, rng);
      }
      ++passes;
      gap = certifiedDualGap(rp, ds);
    }
    result.passes = Scalar(passes);
    result.certifiedGap = gap;
    result.converged = gap <= target;
  }
  result.point = ds.y;
  return result;
}

/// Dual-error reduction that guarantees primal reduction c after mapping
/// x -> y_hat(x) and back: the initial gap is at most (n L R^2 + lambda)/lambda
/// <= 2 n kappa_lambda times the primal error, and primal error is at most
/// 2 (n kappa_lambda)^2 times dual error.
template <typename Scalar>
Scalar primalViaDualFactor(const RegularizedProblem<Scalar>& rp) {
  const Scalar nk = Scalar(rp.base().size()) * Scalar(rp.kappaLambda());
  return 4 * nk * nk * nk;
}

/// Primal (c, lambda)-oracle started at x0 (the sub-problem's center may
/// differ from x0).
template <SmoothObjective Base>
OracleResult<typename Base::Scalar> primalOracleSolve(const Proximal<Base>& rp,
                                                      const Vector<typename Base::Scalar>& x0,
                                                      const OracleSpec<typename Base::Scalar>& spec,
                                                      const SolverConfig& cfg, Rng& rng) {
  using Scalar = typename Base::Scalar;
  spec.validate();
  cfg.validate();
  detail::requireLambda(spec.lambda, rp.lambda());
  requireSameDim(rp.dim(), x0.size(), "primalOracleSolve");
  OracleResult<Scalar> result;
  const bool theory = spec.mode == OracleMode::theory;

  auto finish = [&](Vector<Scalar> x, Scalar passes, bool converged, std::optional<Scalar> gap) {
    result.point = std::move(x);
    result.passes = passes;
    result.converged = converged;
    result.certifiedGap = gap;
    if (!result.certifiedGap && detail::isErm<Base> && result.point.allFinite()) {
      result.certifiedGap = certifiedPrimalGap(rp, result.point);
    }
    return result;
  };

  if (cfg.kind == SolverKind::sdca || cfg.kind == SolverKind::apcg) {
    if constexpr (detail::isErm<Base>) {
      DualState<Scalar> ds = primalToDual(rp.base(), x0);
      OracleSpec<Scalar> dualSpec = spec;
      if (theory) dualSpec.c = spec.c * primalViaDualFactor(rp);
      const auto inner = dualOracleSolve(rp, ds, dualSpec, cfg, rng);
      Vector<Scalar> x = dualToPrimal(rp, ds);
      // keep the start when the mapped point is worse
      if (!(rp.value(x) <= rp.value(x0))) x = x0;
      return finish(std::move(x), inner.passes + 2, inner.converged, std::nullopt);
    } else {
      throw ConfigError("sdca/apcg primal oracles need an ERM problem");
    }
  }

  if (cfg.kind == SolverKind::sgd) {
    throw ConfigError("sgd cannot serve as a (c, lambda)-oracle");
  }

  const auto view = viewOf(rp);
  if (cfg.kind == SolverKind::svrg) {
    SvrgOptions<Scalar> options;
    options.stepSize = cfg.stepSize > 0 ? Scalar(cfg.stepSize) : svrgDefaultStep(view);
    Vector<Scalar> x = x0;
    Scalar passes = 0;
    if (theory) {
      options.averageIterates = true;
      options.stageLength = cfg.stageLength > 0 ? cfg.stageLength
                                                : svrgStageLengthFor(view, options.stepSize, Scalar(0.5));
      if (options.stageLength == 0) throw ConfigError("svrg: step size too large for a guaranteed rate");
      const Scalar rate = svrgRate(view, options.stepSize, options.stageLength);
      const std::int64_t epochs = detail::iterationsFor(spec.c, rate);
      for (std::int64_t e = 0; e < epochs; ++e) {
        auto epoch = svrgEpoch(view, x, options, rng);
        passes += epoch.passes;
        x = std::move(epoch.x);
        if (!epoch.finite) return finish(std::move(x), passes, false, std::nullopt);
      }
      return finish(std::move(x), passes, true, std::nullopt);
    }
    options.stageLength = cfg.stageLength;
    const Scalar target = certifiedPrimalGap(rp, x) / spec.practicalGapFactor;
    Scalar gap = std::numeric_limits<Scalar>::infinity();
    while (passes < Scalar(spec.maxPasses)) {
      auto epoch = svrgEpoch(view, x, options, rng);
      passes += epoch.passes;
      x = std::move(epoch.x);
      if (!epoch.finite) return finish(std::move(x), passes, false, std::nullopt);
      gap = certifiedPrimalGap(rp, x);
      if (gap <= target) break;
    }
    return finish(std::move(x), passes, gap <= target, gap);
  }

  // deterministic gradient methods on f_{s,lambda}
  const Scalar smooth = view.averagedSmoothness();
  const Scalar mu = rp.mu();
  Vector<Scalar> x = x0;
  std::int64_t iterations = 0;
  if (theory) {
    iterations = cfg.kind == SolverKind::gd ? detail::iterationsFor(spec.c, 1 - mu / smooth)
                                            : detail::iterationsFor(2 * spec.c, 1 - std::sqrt(mu / smooth));
  } else {
    iterations = spec.maxPasses;
  }
  const Scalar target = theory ? Scalar(0) : certifiedPrimalGap(rp, x0) / spec.practicalGapFactor;
  std::optional<Scalar> gap;
  std::int64_t done = 0;
  if (cfg.kind == SolverKind::gd) {
    const Scalar eta = cfg.stepSize > 0 ? Scalar(cfg.stepSize) : 1 / smooth;
    for (; done < iterations; ++done) {
      x = gradientStep(rp, x, eta);
      if (!theory && (gap = certifiedPrimalGap(rp, x), *gap <= target)) { ++done; break; }
    }
  } else {
    AcceleratedGradient<Proximal<Base>> agd(rp, x, smooth, mu);
    for (; done < iterations; ++done) {
      agd.step();
      if (!theory && (gap = certifiedPrimalGap(rp, agd.x()), *gap <= target)) { ++done; break; }
    }
    x = agd.x();
  }
  const bool converged = theory || (gap && *gap <= target);
  return finish(std::move(x), Scalar(done), converged, gap);
}

}  // namespace unreg
