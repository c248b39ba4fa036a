#include "unreg/experiment.hpp"
#include "unreg/least_squares.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace unreg {

using Erm = ErmProblem<double>;

Algorithm parseAlgorithm(const std::string& name) {
  if (name == "appa") return Algorithm::appa;
  if (name == "accel-appa") return Algorithm::accelAppa;
  if (name == "dual-appa") return Algorithm::dualAppa;
  if (name == "sdca") return Algorithm::sdca;
  if (name == "svrg") return Algorithm::svrg;
  if (name == "sgd") return Algorithm::sgd;
  if (name == "gd") return Algorithm::gd;
  if (name == "agd") return Algorithm::agd;
  throw ConfigError("unknown algorithm '" + name + "'");
}

std::string toString(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::appa: return "appa";
    case Algorithm::accelAppa: return "accel-appa";
    case Algorithm::dualAppa: return "dual-appa";
    case Algorithm::sdca: return "sdca";
    case Algorithm::svrg: return "svrg";
    case Algorithm::sgd: return "sgd";
    case Algorithm::gd: return "gd";
    case Algorithm::agd: return "agd";
  }
  return "?";
}

LossKind parseLoss(const std::string& name) {
  if (name == "squared") return LossKind::squared;
  if (name == "logistic") return LossKind::logistic;
  throw ConfigError("unknown loss '" + name + "' (expected squared or logistic)");
}

SolverKind parseSolver(const std::string& name) {
  for (auto kind : {SolverKind::svrg, SolverKind::sdca, SolverKind::apcg, SolverKind::gd, SolverKind::agd,
                    SolverKind::sgd}) {
    if (toString(kind) == name) return kind;
  }
  throw ConfigError("unknown inner solver '" + name + "'");
}

Erm buildProblem(const Dataset& ds, LossKind loss, double mu, double gamma) {
  if (ds.size() == 0) throw ConfigError("buildProblem: empty dataset");
  const double w = 1.0 / double(ds.size());
  std::vector<ScalarLoss<double>> losses;
  losses.reserve(ds.size());
  for (Index i = 0; i < ds.size(); ++i) {
    losses.push_back(loss == LossKind::squared ? ScalarLoss<double>::squared(ds.labels[i], w)
                                               : ScalarLoss<double>::logistic(ds.labels[i], w));
  }
  return Erm(ds.features, std::move(losses), mu, gamma);
}

Optimum leastSquaresOptimum(const Erm& p) {
  Optimum out;
  out.x = LeastSquaresSolver<double>(p).minimizer();
  out.value = p.value(out.x);
  out.gradNorm = p.gradient(out.x).norm();
  return out;
}

namespace {

/// Hessian of F at x.
Eigen::MatrixXd hessianAt(const Erm& p, const Vector<double>& x) {
  const Vector<double> margins = p.data() * x;
  Vector<double> curv(p.size());
  for (Index i = 0; i < p.size(); ++i) curv[i] = lossSecondDerivative(p.loss(i), margins[i]);
  Eigen::MatrixXd H = p.data().transpose() * curv.asDiagonal() * p.data();
  H.diagonal().array() += p.explicitStrongConvexity();
  return H;
}

/// Upper bound on the smoothness of F: the largest eigenvalue of sum_i L_i a_i a_i^T + gamma I.
double globalSmoothness(const Erm& p) {
  Vector<double> L(p.size());
  for (Index i = 0; i < p.size(); ++i) L[i] = p.loss(i).smoothness();
  Eigen::MatrixXd H = p.data().transpose() * L.asDiagonal() * p.data();
  H.diagonal().array() += p.explicitStrongConvexity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

}  // namespace

Optimum logisticOptimum(const Erm& p, double tolerance, std::int64_t maxIterations) {
  const double eta = 1 / globalSmoothness(p);
  Vector<double> x = Vector<double>::Zero(p.dim());
  Vector<double> previous = x;
  Vector<double> g = p.gradient(x);
  double k = 0;
  for (std::int64_t it = 0; it < maxIterations && g.norm() > tolerance; ++it) {
    const Vector<double> lookahead = x + (k / (k + 3)) * (x - previous);
    const Vector<double> gl = p.gradient(lookahead);
    previous = x;
    x = lookahead - eta * gl;
    // gradient restart: drop momentum when it points uphill
    if (gl.dot(x - previous) > 0) {
      k = 0;
    } else {
      k += 1;
    }
    g = p.gradient(x);
  }
  Optimum out;
  out.x = std::move(x);
  out.value = p.value(out.x);
  out.gradNorm = g.norm();
  return out;
}

Optimum ermOptimum(const Erm& p) {
  return p.loss(0).kind == LossKind::squared ? leastSquaresOptimum(p) : logisticOptimum(p);
}

double curvatureAt(const Erm& p, const Vector<double>& x) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessianAt(p, x), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

void ExperimentConfig::validate() const {
  if (!(lambda > 0) || !std::isfinite(lambda)) throw ConfigError("experiment: lambda must be positive");
  if (!(mu > 0) || !std::isfinite(mu)) throw ConfigError("experiment: mu must be positive");
  if (stages < 0) throw ConfigError("experiment: stages must be >= 0");
  if (innerPasses < 1) throw ConfigError("experiment: inner passes must be >= 1");
  if (gapFactor && !(*gapFactor > 1)) throw ConfigError("experiment: gap factor must exceed 1");
  if (oracle == SolverKind::sgd) throw ConfigError("experiment: sgd cannot serve as an oracle");
  if (algorithm == Algorithm::dualAppa && oracle && *oracle != SolverKind::sdca && *oracle != SolverKind::apcg) {
    throw ConfigError("experiment: dual-appa needs an sdca or apcg oracle");
  }
  if (algorithm == Algorithm::accelAppa && !(lambda > 2 * mu)) {
    throw ConfigError("experiment: accel-appa needs lambda > 2 mu");
  }
}

SolverKind ExperimentConfig::innerSolver() const {
  if (oracle) return *oracle;
  return algorithm == Algorithm::dualAppa ? SolverKind::sdca : SolverKind::svrg;
}

double testError(const Dataset& test, const Vector<double>& x) {
  if (test.size() == 0) throw ConfigError("testError: empty test set");
  const Vector<double> z = test.features * x;
  Index wrong = 0;
  for (Index i = 0; i < test.size(); ++i) {
    if ((z[i] > 0) != (test.labels[i] > 0)) ++wrong;
  }
  return double(wrong) / double(test.size());
}

namespace {

/// Primal oracle spending a fixed budget and ignoring the requested factor.
PrimalOracle<Erm> budgetOracle(const ExperimentConfig& cfg) {
  const SolverKind kind = cfg.innerSolver();
  if (kind == SolverKind::svrg && !cfg.gapFactor) {
    return fixedEpochPrimalOracle<Erm>(SolverConfig{SolverKind::svrg}, cfg.innerPasses);
  }
  const double factor = cfg.gapFactor.value_or(std::numeric_limits<double>::infinity());
  auto inner = makePrimalOracle<Erm>(SolverConfig{kind}, OracleMode::practical, factor, cfg.innerPasses);
  const bool budgetOnly = !cfg.gapFactor;
  return [inner, budgetOnly](const Proximal<Erm>& rp, const Vector<double>& start, double c, Rng& rng) {
    auto out = inner(rp, start, c, rng);
    if (budgetOnly) out.converged = out.point.allFinite();
    return out;
  };
}

DualOracle<double> dualOracle(const ExperimentConfig& cfg) {
  const SolverKind kind = cfg.innerSolver();
  if (cfg.theoryOracle) return makeDualOracle<double>(SolverConfig{kind}, OracleMode::theory);
  if (cfg.gapFactor) return makeDualOracle<double>(SolverConfig{kind}, OracleMode::practical, *cfg.gapFactor, cfg.innerPasses);
  return fixedPassDualOracle<double>(kind, cfg.innerPasses);
}

template <typename Result>
ExperimentResult finish(Result&& run) {
  ExperimentResult out;
  out.trace = std::move(run.trace);
  out.x = std::move(run.x);
  out.converged = run.converged;
  out.diverged = run.diverged;
  out.warnings = std::move(run.warnings);
  return out;
}

/// SDCA on the ridge problem F + (lambda/2)||x||^2, one pass per stage.
RunResult<double> sdcaRidge(const Erm& p, const ExperimentConfig& cfg, Rng& rng, const RunOptions<double>& options) {
  detail::Stopwatch clock;
  RunResult<double> result;
  const RegularizedProblem<double> rp(p, Vector<double>::Zero(p.dim()), cfg.lambda);
  DualState<double> ds = primalToDual(p, rp.center());
  for (Index i = 0; i < p.size(); ++i) {
    const auto [lo, hi] = conjugateDomain(p.loss(i));
    if (ds.y[i] <= lo || ds.y[i] >= hi) ds.y[i] = clampToConjugateInterior(p.loss(i), ds.y[i], 1e-12);
  }
  ds.refresh(p.data());
  result.x = rp.center();
  auto first = detail::measureStage(p, result.x, 0, 0, cfg.lambda, options, clock);
  const double initial = first.trainLoss;
  if (detail::recordStage(result, std::move(first), initial, std::optional<double>(), options.stopWhen)) return result;
  double passes = 1;
  for (std::int64_t t = 1; t <= cfg.stages; ++t) {
    sdcaPass(rp, ds, rng);
    passes += 1;
    result.x = dualToPrimal(rp, ds);
    auto row = detail::measureStage(p, result.x, t, passes, cfg.lambda, options, clock);
    if (detail::recordStage(result, std::move(row), initial, std::optional<double>(), options.stopWhen)) break;
  }
  return result;
}

/// Baselines on F itself. One stage: an SVRG epoch with m = n and step lambda,
/// n SGD steps with step lambda / sqrt(t), or one (accelerated) gradient step.
RunResult<double> baseline(const Erm& p, const ExperimentConfig& cfg, Rng& rng, const RunOptions<double>& options) {
  detail::Stopwatch clock;
  RunResult<double> result;
  result.x = Vector<double>::Zero(p.dim());
  auto first = detail::measureStage(p, result.x, 0, 0, cfg.lambda, options, clock);
  const double initial = first.trainLoss;
  if (detail::recordStage(result, std::move(first), initial, std::optional<double>(), options.stopWhen)) return result;

  const auto view = viewOf(p);
  const double smooth = view.averagedSmoothness();
  std::optional<AcceleratedGradient<Erm>> agd;
  if (cfg.algorithm == Algorithm::agd) agd.emplace(p, result.x, smooth, p.mu());
  SvrgOptions<double> svrg;
  svrg.stepSize = cfg.lambda;
  svrg.stageLength = p.size();
  std::int64_t sgdClock = 0;
  double passes = 0;

  for (std::int64_t t = 1; t <= cfg.stages; ++t) {
    bool finite = true;
    try {
      switch (cfg.algorithm) {
        case Algorithm::svrg: {
          auto epoch = svrgEpoch(view, result.x, svrg, rng);
          passes += epoch.passes;
          result.x = std::move(epoch.x);
          finite = epoch.finite;
          break;
        }
        case Algorithm::sgd:
          finite = sgdSteps(view, result.x, cfg.lambda, sgdClock, p.size(), rng);
          passes += 1;
          break;
        case Algorithm::gd:
          result.x = gradientStep(p, result.x, 1 / smooth);
          passes += 1;
          break;
        default:
          agd->step();
          result.x = agd->x();
          passes += 1;
          break;
      }
    } catch (const DomainError&) {
      // margins overflowed inside the step
      finite = false;
    }
    auto row = detail::measureStage(p, result.x, t, passes, cfg.lambda, options, clock);
    if (!finite) row.diverged = true;
    if (detail::recordStage(result, std::move(row), initial, std::optional<double>(), options.stopWhen)) break;
  }
  return result;
}

}  // namespace

ExperimentResult runExperiment(const Erm& p, const Dataset* test, const ExperimentConfig& cfg,
                               std::optional<double> fStar) {
  cfg.validate();
  Rng rng(cfg.seed);
  RunOptions<double> options;
  options.algorithm = toString(cfg.algorithm);
  options.fStar = fStar;
  if (test && test->size() > 0) {
    options.annotate = [test](const Vector<double>& x, TraceRow& row) { row.testError = testError(*test, x); };
  }
  const Vector<double> x0 = Vector<double>::Zero(p.dim());

  switch (cfg.algorithm) {
    case Algorithm::appa: {
      AppaConfig<double> appa;
      appa.lambda = cfg.lambda;
      appa.outerIterations = cfg.stages;
      const auto oracle = cfg.theoryOracle ? makePrimalOracle<Erm>(SolverConfig{cfg.innerSolver()}, OracleMode::theory)
                                           : budgetOracle(cfg);
      return finish(appaRun(p, x0, appa, oracle, rng, options));
    }
    case Algorithm::accelAppa: {
      AppaConfig<double> appa;
      appa.lambda = cfg.lambda;
      appa.outerIterations = cfg.stages;
      const auto oracle = cfg.theoryOracle ? makePrimalOracle<Erm>(SolverConfig{cfg.innerSolver()}, OracleMode::theory)
                                           : budgetOracle(cfg);
      return finish(acceleratedAppaRun(p, x0, appa, oracle, rng, options));
    }
    case Algorithm::dualAppa: {
      DualAppaConfig<double> dual;
      dual.lambda = cfg.lambda;
      dual.mode = cfg.theoryOracle ? OracleMode::theory : OracleMode::practical;
      dual.outerIterations = cfg.stages;
      return finish(dualAppaRun(p, x0, dual, dualOracle(cfg), rng, options));
    }
    case Algorithm::sdca:
      return finish(sdcaRidge(p, cfg, rng, options));
    default:
      return finish(baseline(p, cfg, rng, options));
  }
}

ExperimentResult runExperiment(const Dataset& ds, const ExperimentConfig& cfg, std::optional<double> fStar) {
  cfg.validate();
  const Dataset train = ds.trainSet();
  const Erm p = buildProblem(train, cfg.loss, cfg.mu);
  if (ds.test.empty()) return runExperiment(p, nullptr, cfg, fStar);
  const Dataset test = ds.testSet();
  return runExperiment(p, &test, cfg, fStar);
}

std::vector<double> lambdaGrid(int lo, int hi) {
  if (lo > hi) throw ConfigError("lambda grid: lo must not exceed hi");
  std::vector<double> grid;
  for (int e = lo; e <= hi; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

std::vector<SweepCell> sweepLambda(const Dataset& ds, const std::vector<Algorithm>& algorithms,
                                   const std::vector<double>& grid, const ExperimentConfig& base, unsigned threads) {
  if (algorithms.empty() || grid.empty()) throw ConfigError("sweep: need at least one algorithm and one lambda");
  const Dataset train = ds.trainSet();
  const Erm p = buildProblem(train, base.loss, base.mu);
  const Dataset test = ds.testSet();
  const Dataset* testPtr = ds.test.empty() ? nullptr : &test;

  std::vector<SweepCell> cells(algorithms.size() * grid.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      ExperimentConfig cfg = base;
      cfg.algorithm = algorithms[k / grid.size()];
      cfg.lambda = grid[k % grid.size()];
      SweepCell& cell = cells[k];
      cell.algorithm = cfg.algorithm;
      cell.lambda = cfg.lambda;
      try {
        const auto run = runExperiment(p, testPtr, cfg);
        const auto& last = run.trace.back();
        cell.stages = last.stage;
        cell.passes = last.passes;
        cell.finalObjective = last.trainLoss;
        cell.diverged = run.diverged;
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cells.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw ConfigError("sweep: " + e);
  }
  return cells;
}

void writeSweepCsv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << kSweepSchema << '\n' << kSweepHeader << '\n';
  for (const auto& c : cells) {
    out << toString(c.algorithm) << ',' << formatReal(c.lambda) << ',' << c.stages << ',' << formatReal(c.passes)
        << ',' << formatReal(c.finalObjective) << ',' << (c.diverged ? 1 : 0) << '\n';
  }
}

}  // namespace unreg
