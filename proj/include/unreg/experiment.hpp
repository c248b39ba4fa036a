#pragma once

#include "unreg/appa.hpp"
#include "unreg/data.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace unreg {

enum class Algorithm { appa, accelAppa, dualAppa, sdca, svrg, sgd, gd, agd };

Algorithm parseAlgorithm(const std::string& name);
std::string toString(Algorithm algorithm);
LossKind parseLoss(const std::string& name);
SolverKind parseSolver(const std::string& name);

/// phi_i(z) = (1/2n)(z - b_i)^2 or (1/n) log(1 + exp(-z b_i)) over the rows of ds.
ErmProblem<double> buildProblem(const Dataset& ds, LossKind loss, double mu, double gamma = 0);

struct Optimum {
  Vector<double> x;
  double value = 0;
  double gradNorm = 0;
};

/// Normal equations by dense factorization.
Optimum leastSquaresOptimum(const ErmProblem<double>& p);
/// Restarted AGD until ||grad F|| <= tolerance or the iteration cap.
Optimum logisticOptimum(const ErmProblem<double>& p, double tolerance = 1e-12, std::int64_t maxIterations = 2'000'000);
/// Dispatches on the loss of the first example.
Optimum ermOptimum(const ErmProblem<double>& p);

/// Smallest eigenvalue of the Hessian of F at x.
double curvatureAt(const ErmProblem<double>& p, const Vector<double>& x);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::dualAppa;
  LossKind loss = LossKind::squared;
  double lambda = 1;
  double mu = 0;
  std::int64_t stages = 20;
  std::uint64_t seed = 0;
  /// Inner solver of the APPA variants; defaults to sdca for dual-appa, svrg otherwise.
  std::optional<SolverKind> oracle;
  /// Passes (SVRG: epochs) per oracle call when not in theory mode.
  std::int64_t innerPasses = 1;
  bool theoryOracle = false;
  /// Practical-mode oracles: stop once the certified gap shrank by this factor.
  std::optional<double> gapFactor;

  void validate() const;
  SolverKind innerSolver() const;
};

struct ExperimentResult {
  ConvergenceTrace trace;
  Vector<double> x;
  bool converged = true;
  bool diverged = false;
  std::vector<std::string> warnings;
};

/// Runs on the training rows of ds; test error is recorded when the test split
/// is non-empty and excess loss when fStar is given.
ExperimentResult runExperiment(const Dataset& ds, const ExperimentConfig& cfg, std::optional<double> fStar = {});
ExperimentResult runExperiment(const ErmProblem<double>& p, const Dataset* test, const ExperimentConfig& cfg,
                               std::optional<double> fStar = {});

/// Fraction of rows where sign(a_i^T x) (ties to -1) differs from sign(label).
double testError(const Dataset& test, const Vector<double>& x);

struct SweepCell {
  Algorithm algorithm = Algorithm::dualAppa;
  double lambda = 0;
  std::int64_t stages = 0;
  double passes = 0;
  double finalObjective = 0;
  bool diverged = false;
};

/// 10^lo, ..., 10^hi.
std::vector<double> lambdaGrid(int lo, int hi);

/// One runExperiment per (algorithm, lambda) cell, run on a worker pool; rows
/// come back in algorithm-major order regardless of scheduling.
std::vector<SweepCell> sweepLambda(const Dataset& ds, const std::vector<Algorithm>& algorithms,
                                   const std::vector<double>& grid, const ExperimentConfig& base,
                                   unsigned threads = 0);

inline constexpr const char* kSweepSchema = "# unreg-sweep v1";
inline constexpr const char* kSweepHeader = "algorithm,lambda,stages,passes,final_objective,diverged";
void writeSweepCsv(std::ostream& out, const std::vector<SweepCell>& cells);

}  // namespace unreg
