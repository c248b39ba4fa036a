#pragma once

#include "unreg/oracles.hpp"
#include "unreg/trace.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace unreg {

/// Primal oracle: approximately minimizes rp starting from `start`, aiming at
/// error reduction c.
template <SmoothObjective Base>
using PrimalOracle = std::function<OracleResult<typename Base::Scalar>(
    const Proximal<Base>&, const Vector<typename Base::Scalar>&, typename Base::Scalar, Rng&)>;

/// Dual oracle: improves ds in place on g_{s,lambda}, aiming at reduction c.
template <typename Scalar>
using DualOracle =
    std::function<OracleResult<Scalar>(const RegularizedProblem<Scalar>&, DualState<Scalar>&, Scalar, Rng&)>;

template <SmoothObjective Base>
PrimalOracle<Base> makePrimalOracle(SolverConfig cfg, OracleMode mode,
                                    typename Base::Scalar practicalGapFactor = 1e3,
                                    std::int64_t maxPasses = 100) {
  using Scalar = typename Base::Scalar;
  return [=](const Proximal<Base>& rp, const Vector<Scalar>& start, Scalar c, Rng& rng) {
    OracleSpec<Scalar> spec{c, rp.lambda(), mode, practicalGapFactor, maxPasses};
    return primalOracleSolve(rp, start, spec, cfg, rng);
  };
}

template <typename Scalar>
DualOracle<Scalar> makeDualOracle(SolverConfig cfg, OracleMode mode, Scalar practicalGapFactor = 1e3,
                                  std::int64_t maxPasses = 100) {
  return [=](const RegularizedProblem<Scalar>& rp, DualState<Scalar>& ds, Scalar c, Rng& rng) {
    OracleSpec<Scalar> spec{c, rp.lambda(), mode, practicalGapFactor, maxPasses};
    return dualOracleSolve(rp, ds, spec, cfg, rng);
  };
}

/// Ignores c and runs a fixed number of dataset passes of SDCA or APCG.
template <typename Scalar>
DualOracle<Scalar> fixedPassDualOracle(SolverKind kind, std::int64_t passes) {
  if (kind != SolverKind::sdca && kind != SolverKind::apcg) throw ConfigError("fixed-pass dual oracle needs sdca or apcg");
  if (passes < 1) throw ConfigError("fixed-pass dual oracle needs at least one pass");
  return [=](const RegularizedProblem<Scalar>& rp, DualState<Scalar>& ds, Scalar, Rng& rng) {
    const Index n = rp.base().size();
    if (kind == SolverKind::sdca) {
      for (std::int64_t k = 0; k < passes; ++k) sdcaPass(rp, ds, rng);
    } else {
      apcgSolve(rp, ds, passes * n, rng);
    }
    OracleResult<Scalar> out;
    out.point = ds.y;
    out.passes = Scalar(passes);
    return out;
  };
}

/// Ignores c and runs a fixed number of SVRG epochs (last iterate).
template <FiniteSumObjective Base>
PrimalOracle<Base> fixedEpochPrimalOracle(SolverConfig cfg, std::int64_t epochs) {
  using Scalar = typename Base::Scalar;
  if (cfg.kind != SolverKind::svrg) throw ConfigError("fixed-epoch primal oracle needs svrg");
  if (epochs < 1) throw ConfigError("fixed-epoch primal oracle needs at least one epoch");
  return [=](const Proximal<Base>& rp, const Vector<Scalar>& start, Scalar, Rng& rng) {
    const auto view = viewOf(rp);
    SvrgOptions<Scalar> options;
    options.stepSize = Scalar(cfg.stepSize);
    options.stageLength = cfg.stageLength;
    OracleResult<Scalar> out;
    out.point = start;
    for (std::int64_t e = 0; e < epochs; ++e) {
      auto epoch = svrgEpoch(view, out.point, options, rng);
      out.passes += epoch.passes;
      out.point = std::move(epoch.x);
      if (!epoch.finite) {
        out.converged = false;
        break;
      }
    }
    return out;
  };
}

// ---------------------------------------------------------------------------

/// Optional diagnostics and labelling for an outer run.
template <typename Scalar>
struct RunOptions {
  std::string algorithm = "run";
  std::optional<Scalar> fStar;
  /// Fills extra columns such as test error from the stage iterate.
  std::function<void(const Vector<Scalar>&, TraceRow&)> annotate;
  /// Extra stopping rule checked on every recorded row.
  std::function<bool(const TraceRow&)> stopWhen;
};

template <typename Scalar>
struct RunResult {
  Vector<Scalar> x;
  ConvergenceTrace trace;
  bool converged = true;
  bool diverged = false;
  std::vector<std::string> warnings;
};

/// A run diverges once the loss is non-finite or exceeds 1e12 times its
/// initial value.
template <typename Scalar>
bool lossDiverged(Scalar loss, Scalar initialLoss) {
  if (!std::isfinite(loss)) return true;
  return initialLoss > 0 && loss > Scalar(1e12) * initialLoss;
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Metrics of F at x. certifiedGap is ||grad F||^2 / (2 mu) >= F(x) - F*.
template <SmoothObjective Base>
TraceRow measureStage(const Base& F, const Vector<typename Base::Scalar>& x, std::int64_t stage, double passes,
                      double lambda, const RunOptions<typename Base::Scalar>& options, const Stopwatch& clock) {
  TraceRow row;
  row.algorithm = options.algorithm;
  row.lambda = lambda;
  row.stage = stage;
  row.passes = passes;
  auto blowUp = [&row] {
    row.trainLoss = std::numeric_limits<double>::infinity();
    row.gradNorm = std::numeric_limits<double>::infinity();
    row.certifiedGap.reset();
    row.diverged = true;
  };
  if (!x.allFinite()) {
    blowUp();
  } else {
    try {
      row.trainLoss = double(F.value(x));
      const auto g = F.gradient(x);
      row.gradNorm = double(g.norm());
      row.certifiedGap = double(g.squaredNorm() / (2 * F.mu()));
      if (options.fStar) row.excessLoss = row.trainLoss - double(*options.fStar);
      if (options.annotate) options.annotate(x, row);
    } catch (const DomainError&) {
      // margins overflowed
      blowUp();
    }
  }
  row.wallSeconds = clock.seconds();
  return row;
}

/// Appends the row and reports whether the run should stop.
template <typename Scalar>
bool recordStage(RunResult<Scalar>& result, TraceRow row, double initialLoss, std::optional<Scalar> target,
                 const std::function<bool(const TraceRow&)>& stopWhen = {}) {
  if (result.trace.rows().size() > 0 && lossDiverged(row.trainLoss, initialLoss)) row.diverged = true;
  const bool diverged = row.diverged;
  const bool reached = (target && row.certifiedGap && *row.certifiedGap <= double(*target)) ||
                       (stopWhen && !diverged && stopWhen(row));
  if (!row.converged) result.converged = false;
  result.trace.append(std::move(row));
  if (diverged) result.diverged = true;
  return diverged || reached;
}

}  // namespace detail

// --- APPA ------------------------------------------------------------------

template <typename Scalar>
struct AppaConfig {
  Scalar lambda = 1;
  std::int64_t outerIterations = 10;
  std::optional<Scalar> targetEpsilon;
  Scalar cPrime = Scalar(0.5);

  void validate() const {
    if (!(lambda > 0)) throw ConfigError("AppaConfig: lambda must be positive");
    if (outerIterations < 0) throw ConfigError("AppaConfig: outerIterations must be >= 0");
    if (!(cPrime > 0 && cPrime < 1)) throw ConfigError("AppaConfig: cPrime must lie in (0, 1)");
    if (targetEpsilon && !(*targetEpsilon > 0)) throw ConfigError("AppaConfig: targetEpsilon must be positive");
  }

  /// (lambda + mu) / (c' mu).
  Scalar oracleFactor(Scalar mu) const { return (lambda + mu) / (cPrime * mu); }
};

/// x_t = P(x_{t-1}) for T steps, each oracle centered and started at x_{t-1}.
template <SmoothObjective Base>
RunResult<typename Base::Scalar> appaRun(const Base& F, const Vector<typename Base::Scalar>& x0,
                                         const AppaConfig<typename Base::Scalar>& cfg,
                                         const PrimalOracle<Base>& oracle, Rng& rng,
                                         const RunOptions<typename Base::Scalar>& options = {}) {
  using Scalar = typename Base::Scalar;
  cfg.validate();
  requireSameDim(F.dim(), x0.size(), "appaRun");
  detail::Stopwatch clock;
  RunResult<Scalar> result;
  result.x = x0;
  const Scalar c = cfg.oracleFactor(F.mu());
  double passes = 0;
  auto first = detail::measureStage(F, x0, 0, passes, double(cfg.lambda), options, clock);
  const double initialLoss = first.trainLoss;
  if (detail::recordStage(result, std::move(first), initialLoss, cfg.targetEpsilon, options.stopWhen)) return result;

  for (std::int64_t t = 1; t <= cfg.outerIterations; ++t) {
    const Proximal<Base> rp(F, result.x, cfg.lambda);
    auto inner = oracle(rp, result.x, c, rng);
    passes += double(inner.passes);
    result.x = std::move(inner.point);
    auto row = detail::measureStage(F, result.x, t, passes, double(cfg.lambda), options, clock);
    row.converged = inner.converged;
    if (detail::recordStage(result, std::move(row), initialLoss, cfg.targetEpsilon, options.stopWhen)) break;
  }
  return result;
}

// --- Accelerated APPA --------------------------------------------------------

template <typename Scalar>
struct AcceleratedState {
  Vector<Scalar> x;
  Vector<Scalar> v;
  Scalar rho = 0;
  Scalar zeta = 0;
  Scalar muPrime = 0;
  Scalar beta = 0;
  Scalar gamma = 0;
  std::optional<Scalar> psiStar;

  /// v0 = x0. With F* known, psi*_0 = F(x0) - ((lambda + 2 mu') / mu')(F(x0) - F*).
  static AcceleratedState start(Vector<Scalar> x0, Scalar mu, Scalar lambda, std::optional<Scalar> fStar = {},
                                std::optional<Scalar> fx0 = {}) {
    if (!(mu > 0)) throw ConfigError("AcceleratedState: mu must be positive");
    if (!(lambda > 2 * mu)) throw ConfigError("Accelerated APPA needs lambda > 2 mu");
    AcceleratedState s;
    s.x = x0;
    s.v = std::move(x0);
    s.rho = (mu + 2 * lambda) / mu;
    s.zeta = 2 / mu + 1 / lambda;
    s.muPrime = mu / 2;
    s.beta = 1 - 1 / std::sqrt(s.rho);
    s.gamma = 1 + s.muPrime / lambda;
    if (fStar) {
      if (!fx0) throw ConfigError("AcceleratedState: F(x0) is required alongside F*");
      s.psiStar = *fx0 - s.inflation(lambda) * (*fx0 - *fStar);
    }
    return s;
  }

  /// (lambda + 2 mu') / mu'.
  Scalar inflation(Scalar lambda) const { return (lambda + 2 * muPrime) / muPrime; }

  /// psi_t(z) = psi*_t + (mu'/2)||z - v_t||^2; requires tracking.
  Scalar lowerBound(const Vector<Scalar>& z) const { return *psiStar + muPrime / 2 * (z - v).squaredNorm(); }
};

/// 4 rho^{3/2}.
template <typename Scalar>
Scalar acceleratedOracleFactor(Scalar mu, Scalar lambda) {
  const Scalar rho = (mu + 2 * lambda) / mu;
  return 4 * rho * std::sqrt(rho);
}

/// One Accelerated APPA step, centered at y_t and started at x_t. When psi* is
/// tracked, epsilon_t is bounded by ||grad f_{y,lambda}(x_{t+1})||^2 / (2(mu + lambda)).
template <SmoothObjective Base>
OracleResult<typename Base::Scalar> acceleratedStep(const Base& F, AcceleratedState<typename Base::Scalar>& s,
                                                    typename Base::Scalar lambda,
                                                    const PrimalOracle<Base>& oracle, Rng& rng) {
  using Scalar = typename Base::Scalar;
  const Scalar r = 1 / std::sqrt(s.rho);
  const Vector<Scalar> y = (s.x + r * s.v) / (1 + r);
  const Proximal<Base> rp(F, y, lambda);
  auto inner = oracle(rp, s.x, 4 * s.rho * std::sqrt(s.rho), rng);
  const Vector<Scalar>& xNext = inner.point;
  const Vector<Scalar> g = lambda * (y - xNext);
  const Vector<Scalar> target = y - s.zeta * g;
  if (s.psiStar) {
    const Scalar eps = rp.errorBound(xNext);
    const Scalar fresh = F.value(xNext) - g.squaredNorm() / (2 * s.muPrime) - s.inflation(lambda) * eps;
    s.psiStar = s.beta * *s.psiStar + (1 - s.beta) * fresh +
                s.beta * (1 - s.beta) * (s.muPrime / 2) * (s.v - target).squaredNorm();
  }
  s.v = s.beta * s.v + (1 - s.beta) * target;
  s.x = xNext;
  return inner;
}

/// Runs Accelerated APPA; psi* is tracked when options.fStar is set. The
/// observer sees the state after every step, including step 0.
template <SmoothObjective Base>
RunResult<typename Base::Scalar> acceleratedAppaRun(
    const Base& F, const Vector<typename Base::Scalar>& x0, const AppaConfig<typename Base::Scalar>& cfg,
    const PrimalOracle<Base>& oracle, Rng& rng, const RunOptions<typename Base::Scalar>& options = {},
    const std::function<void(const AcceleratedState<typename Base::Scalar>&)>& observer = {}) {
  using Scalar = typename Base::Scalar;
  cfg.validate();
  requireSameDim(F.dim(), x0.size(), "acceleratedAppaRun");
  detail::Stopwatch clock;
  const std::optional<Scalar> fx0 = options.fStar ? std::optional<Scalar>(F.value(x0)) : std::nullopt;
  auto state = AcceleratedState<Scalar>::start(x0, F.mu(), cfg.lambda, options.fStar, fx0);
  RunResult<Scalar> result;
  result.x = x0;
  double passes = 0;
  auto first = detail::measureStage(F, x0, 0, passes, double(cfg.lambda), options, clock);
  const double initialLoss = first.trainLoss;
  if (observer) observer(state);
  if (detail::recordStage(result, std::move(first), initialLoss, cfg.targetEpsilon, options.stopWhen)) return result;

  for (std::int64_t t = 1; t <= cfg.outerIterations; ++t) {
    const auto inner = acceleratedStep(F, state, cfg.lambda, oracle, rng);
    passes += double(inner.passes);
    result.x = state.x;
    if (observer) observer(state);
    auto row = detail::measureStage(F, result.x, t, passes, double(cfg.lambda), options, clock);
    row.converged = inner.converged;
    if (detail::recordStage(result, std::move(row), initialLoss, cfg.targetEpsilon, options.stopWhen)) break;
  }
  return result;
}

/// Outer steps guaranteeing reduction c: ceil(log(c infl) / -log(1 - rho^{-1/2}/2))
/// with infl = (lambda + 2 mu')/mu'; 0 when c <= 1.
template <typename Scalar>
std::int64_t theoremOneIterations(Scalar mu, Scalar lambda, Scalar c) {
  if (c <= 1) return 0;
  const auto s = AcceleratedState<Scalar>::start(Vector<Scalar>::Zero(1), mu, lambda);
  const Scalar rate = 1 - 1 / (2 * std::sqrt(s.rho));
  return static_cast<std::int64_t>(std::ceil(std::log(c * s.inflation(lambda)) / -std::log(rate)));
}

/// Returns x with E F(x) - F* <= (F(x0) - F*) / c using Accelerated APPA.
template <SmoothObjective Base>
Vector<typename Base::Scalar> theoremOneReduction(const Base& F, const Vector<typename Base::Scalar>& x0,
                                                  typename Base::Scalar c, typename Base::Scalar lambda,
                                                  const PrimalOracle<Base>& oracle, Rng& rng) {
  using Scalar = typename Base::Scalar;
  const std::int64_t steps = theoremOneIterations(F.mu(), lambda, c);
  if (steps == 0) return x0;
  auto state = AcceleratedState<Scalar>::start(x0, F.mu(), lambda);
  for (std::int64_t t = 0; t < steps; ++t) acceleratedStep(F, state, lambda, oracle, rng);
  return state.x;
}

// --- Dual APPA --------------------------------------------------------------

template <typename Scalar>
struct DualAppaConfig {
  Scalar lambda = 1;
  /// Dual oracle factor; 0 selects the theory value.
  Scalar sigma = 0;
  OracleMode mode = OracleMode::practical;
  std::int64_t outerIterations = 10;
  std::optional<Scalar> targetEpsilon;
  Scalar cPrime = Scalar(0.5);

  void validate() const {
    if (!(lambda > 0)) throw ConfigError("DualAppaConfig: lambda must be positive");
    if (sigma < 0) throw ConfigError("DualAppaConfig: sigma must be non-negative");
    if (outerIterations < 0) throw ConfigError("DualAppaConfig: outerIterations must be >= 0");
    if (!(cPrime > 0 && cPrime < 1)) throw ConfigError("DualAppaConfig: cPrime must lie in (0, 1)");
    if (targetEpsilon && !(*targetEpsilon > 0)) throw ConfigError("DualAppaConfig: targetEpsilon must be positive");
  }
};

/// (40 / c') n^2 kappa_lambda^2 max{kappa, kappa_lambda} ceil(lambda / mu).
template <typename Scalar>
Scalar dualAppaTheorySigma(const ErmProblem<Scalar>& p, Scalar lambda, Scalar cPrime = Scalar(0.5)) {
  const Scalar n = Scalar(p.size());
  const Scalar kl = Scalar(conditionNumber(p.smoothness(), p.radius(), lambda));
  const Scalar k = Scalar(p.kappa());
  return (40 / cPrime) * n * n * kl * kl * std::max(k, kl) * std::ceil(lambda / p.mu());
}

/// Per-stage diagnostics of Dual APPA.
template <typename Scalar>
struct DualAppaStage {
  /// max |x_hat_{x_t}(y_t) - (x_t + lambda/(lambda+gamma)(x_t - x_{t-1}))| with a fresh A^T y.
  Scalar warmStartError = 0;
  /// F(x_{t-1}) - F* and its bound r^{t-1}(F(x0) - F*); set when F* is known.
  std::optional<Scalar> primalError;
  std::optional<Scalar> primalBound;
  /// g_{x_{t-1}}(y_t) - g*_{x_{t-1}}; set when a dual optimum oracle is given.
  std::optional<Scalar> dualError;
};

template <typename Scalar>
struct DualAppaResult : RunResult<Scalar> {
  DualState<Scalar> dual;
  std::vector<DualAppaStage<Scalar>> stages;
};

/// y0 = y_hat(x0), then y_t = D(x_{t-1}, y_{t-1}) and x_t = x_hat_{x_{t-1}}(y_t).
/// dualOptimum, when given, returns min g of a sub-problem (diagnostics only).
template <typename Scalar>
DualAppaResult<Scalar> dualAppaRun(
    const ErmProblem<Scalar>& p, const Vector<Scalar>& x0, const DualAppaConfig<Scalar>& cfg,
    const DualOracle<Scalar>& oracle, Rng& rng, const RunOptions<Scalar>& options = {},
    const std::function<Scalar(const RegularizedProblem<Scalar>&)>& dualOptimum = {}) {
  cfg.validate();
  requireSameDim(p.dim(), x0.size(), "dualAppaRun");
  detail::Stopwatch clock;
  DualAppaResult<Scalar> result;
  result.x = x0;

  result.dual = primalToDual(p, x0);
  Index clamped = 0;
  for (Index i = 0; i < p.size(); ++i) {
    const auto& loss = p.loss(i);
    if (loss.kind != LossKind::logistic) continue;
    const auto [lo, hi] = conjugateDomain(loss);
    const Scalar yi = result.dual.y[i];
    if (yi <= lo || yi >= hi) {
      result.dual.y[i] = clampToConjugateInterior(loss, yi, Scalar(1e-12));
      ++clamped;
    }
  }
  if (clamped > 0) {
    result.dual.refresh(p.data());
    result.warnings.push_back("dual initialization: clamped " + std::to_string(clamped) +
                              " saturated coordinates into the conjugate domain interior");
  }

  const Scalar sigma = cfg.sigma > 0 ? cfg.sigma : dualAppaTheorySigma(p, cfg.lambda, cfg.cPrime);
  const Scalar r = (cfg.lambda + cfg.cPrime * p.mu()) / (cfg.lambda + p.mu());
  const Scalar initialError = options.fStar ? p.value(x0) - *options.fStar : Scalar(0);

  double passes = 1;  // the y_hat(x0) mapping
  auto first = detail::measureStage(p, x0, 0, 0, double(cfg.lambda), options, clock);
  const double initialLoss = first.trainLoss;
  if (detail::recordStage(result, std::move(first), initialLoss, cfg.targetEpsilon, options.stopWhen)) return result;

  Scalar scale = 1;
  for (std::int64_t t = 1; t <= cfg.outerIterations; ++t) {
    const RegularizedProblem<Scalar> rp(p, result.x, cfg.lambda);
    auto inner = oracle(rp, result.dual, sigma, rng);
    passes += double(inner.passes);

    DualAppaStage<Scalar> stage;
    if (options.fStar) {
      stage.primalError = p.value(result.x) - *options.fStar;
      stage.primalBound = scale * initialError;
    }
    if (dualOptimum) stage.dualError = regDualValue(rp, result.dual) - dualOptimum(rp);
    scale *= r;

    const Vector<Scalar> xNext = dualToPrimal(rp, result.dual);
    const Vector<Scalar> warm = recenteredPrimal(rp, xNext);
    result.x = xNext;
    const RegularizedProblem<Scalar> nextRp(p, result.x, cfg.lambda);
    const Vector<Scalar> fresh = nextRp.dualCenter() - p.data().transpose() * result.dual.y / nextRp.dualLambda();
    stage.warmStartError = (fresh - warm).cwiseAbs().maxCoeff();
    if (!(stage.warmStartError <= Scalar(1e-8) * (1 + warm.cwiseAbs().maxCoeff()))) {
      result.warnings.push_back("stage " + std::to_string(t) + ": warm-start identity off by " +
                                std::to_string(double(stage.warmStartError)));
    }
    result.stages.push_back(stage);

    auto row = detail::measureStage(p, result.x, t, passes, double(cfg.lambda), options, clock);
    row.converged = inner.converged;
    if (detail::recordStage(result, std::move(row), initialLoss, cfg.targetEpsilon, options.stopWhen)) break;
  }
  return result;
}

// --- lambda schedule ---------------------------------------------------------

/// Divides lambda by 10 (floored at 2 mu) when the per-stage error ratio over
/// the last three stages exceeds (lambda + mu)/(lambda + 2 mu). The error is
/// the excess loss when present, else the certified gap.
inline double lambdaDecreaseSchedule(const ConvergenceTrace& trace, double currentLambda, double muEstimate) {
  const auto& rows = trace.rows();
  if (rows.size() < 3) throw ConfigError("lambdaDecreaseSchedule: needs at least two completed stages");
  const double floor = 2 * muEstimate;
  if (currentLambda <= floor) return currentLambda;
  auto error = [](const TraceRow& row) {
    if (row.excessLoss) return *row.excessLoss;
    return row.certifiedGap.value_or(row.trainLoss);
  };
  const std::size_t span = std::min<std::size_t>(3, rows.size() - 1);
  const double latest = error(rows.back());
  const double earlier = error(rows[rows.size() - 1 - span]);
  if (!(earlier > 0)) return currentLambda;
  const double ratio = std::pow(std::max(latest, 0.0) / earlier, 1.0 / double(span));
  const double threshold = (currentLambda + muEstimate) / (currentLambda + 2 * muEstimate);
  if (ratio > threshold) return std::max(currentLambda / 10, floor);
  return currentLambda;
}

}  // namespace unreg
