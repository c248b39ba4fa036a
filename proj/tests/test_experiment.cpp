#include <doctest.h>

#include "oracle.hpp"
#include "unreg/experiment.hpp"
#include "unreg/synth.hpp"

#include <algorithm>
#include <sstream>

using namespace unreg;
using oracle::Vec;

namespace {

Dataset smallRegression(std::uint64_t seed) {
  SynthSpec spec;
  spec.n = 200;
  spec.d = 10;
  spec.kappa = 50;
  spec.seed = seed;
  return synthesize(spec).data;
}

ExperimentConfig config(Algorithm algorithm, double lambda, double mu) {
  ExperimentConfig cfg;
  cfg.algorithm = algorithm;
  cfg.lambda = lambda;
  cfg.mu = mu;
  cfg.stages = 5;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("names round trip") {
  for (Algorithm a : {Algorithm::appa, Algorithm::accelAppa, Algorithm::dualAppa, Algorithm::sdca, Algorithm::svrg,
                      Algorithm::sgd, Algorithm::gd, Algorithm::agd}) {
    CHECK((parseAlgorithm(toString(a)) == a));
  }
  CHECK_THROWS_AS(parseAlgorithm("newton"), ConfigError);
  CHECK((parseLoss("logistic") == LossKind::logistic));
  CHECK_THROWS_AS(parseLoss("hinge"), ConfigError);
  CHECK((parseSolver("apcg") == SolverKind::apcg));
}

TEST_CASE("problem construction uses 1/n weights") {
  RowMatrix<double> f(2, 1);
  f << 1, 2;
  const auto ds = Dataset::allTrain(f, (Vec(2) << 1, 2).finished());
  const auto p = buildProblem(ds, LossKind::squared, 1.0);
  CHECK(p.value(Vec::Zero(1)) == doctest::Approx((1.0 + 4.0) / 4));
  const auto q = buildProblem(ds, LossKind::logistic, 1.0);
  CHECK(q.value(Vec::Zero(1)) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("optima against the closed form") {
  std::mt19937_64 gen(61);
  const auto p = oracle::randomLs(30, 4, gen, 1.0 / 30, 0.01);
  const auto ls = oracle::LsData::of(p);
  const auto opt = leastSquaresOptimum(p);
  CHECK((opt.x - ls.minimizer()).norm() <= 1e-10 * (1 + opt.x.norm()));
  CHECK(curvatureAt(p, opt.x) == doctest::Approx(ls.mu()).epsilon(1e-10));

  RowMatrix<double> f = p.data();
  Vec labels(30);
  for (Index i = 0; i < 30; ++i) labels[i] = i % 3 ? 1 : -1;
  const auto q = buildProblem(Dataset::allTrain(f, labels), LossKind::logistic, 0.01, 0.01);
  const auto lopt = logisticOptimum(q);
  CHECK(lopt.gradNorm <= 1e-12);
  const Vec xs = oracle::newton([&](const Vec& x) { return q.value(x); }, [&](const Vec& x) { return q.gradient(x); },
                                Vec::Zero(4));
  CHECK(lopt.value == doctest::Approx(q.value(xs)).epsilon(1e-12));
  CHECK(ermOptimum(q).value == doctest::Approx(lopt.value));
}

TEST_CASE("synthetic least squares hits the target condition number") {
  SynthSpec spec;
  spec.n = 300;
  spec.d = 20;
  spec.kappa = 500;
  spec.seed = 2;
  const auto out = synthesize(spec);
  CHECK(out.kappa == 500);
  const auto p = buildProblem(out.data, LossKind::squared, out.mu);
  const auto ls = oracle::LsData::of(p);
  CHECK(out.mu == doctest::Approx(ls.mu()).epsilon(1e-9));
  CHECK(out.fStar == doctest::Approx(ls.value(ls.minimizer())).epsilon(1e-9));
  spec.d = 400;
  CHECK_THROWS_AS(synthesize(spec), ConfigError);
}

TEST_CASE("experiment configuration checks") {
  auto cfg = config(Algorithm::accelAppa, 1.0, 1.0);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lambda = 3;
  CHECK_NOTHROW(cfg.validate());
  cfg.mu = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK((config(Algorithm::dualAppa, 1, 1).innerSolver() == SolverKind::sdca));
  CHECK((config(Algorithm::appa, 1, 1).innerSolver() == SolverKind::svrg));
}

TEST_CASE("zero stages records only the start") {
  const auto ds = smallRegression(1);
  auto cfg = config(Algorithm::svrg, 1e-2, 1e-3);
  cfg.stages = 0;
  const auto out = runExperiment(ds, cfg);
  CHECK(out.trace.rows().size() == 1);
  CHECK(out.trace.rows()[0].passes == 0);
}

TEST_CASE("every algorithm runs and reports passes") {
  const auto synth = [] {
    SynthSpec spec;
    spec.n = 200;
    spec.d = 10;
    spec.kappa = 50;
    spec.seed = 4;
    return synthesize(spec);
  }();
  for (Algorithm a : {Algorithm::appa, Algorithm::accelAppa, Algorithm::dualAppa, Algorithm::sdca, Algorithm::svrg,
                      Algorithm::sgd, Algorithm::gd, Algorithm::agd}) {
    CAPTURE(toString(a));
    auto cfg = config(a, 10 * synth.mu, synth.mu);
    const auto out = runExperiment(synth.data, cfg, synth.fStar);
    const auto& rows = out.trace.rows();
    REQUIRE(rows.size() == 6);
    CHECK(rows.back().passes > rows.front().passes);
    CHECK(rows.back().excessLoss.has_value());
    CHECK_FALSE(out.diverged);
    CHECK(rows.back().trainLoss < rows.front().trainLoss);
  }
}

TEST_CASE("dual APPA on the 1-D problem decreases the loss every stage") {
  RowMatrix<double> f(2, 1);
  f << 1, 2;
  const auto ds = Dataset::allTrain(f, (Vec(2) << 1, 2).finished());
  auto cfg = config(Algorithm::dualAppa, 2.5, 2.5);
  cfg.stages = 6;
  cfg.innerPasses = 5;
  const auto out = runExperiment(ds, cfg);
  const auto& rows = out.trace.rows();
  for (std::size_t t = 1; t < rows.size(); ++t) CHECK(rows[t].trainLoss < rows[t - 1].trainLoss);
}

TEST_CASE("test error is a fraction") {
  SynthSpec spec;
  spec.kind = LossKind::logistic;
  spec.n = 200;
  spec.d = 5;
  spec.kappa = 20;
  spec.seed = 5;
  const auto synth = synthesize(spec);
  const auto ds = holdoutSplit(synth.data, 0.25, 1);
  auto cfg = config(Algorithm::sdca, synth.mu, synth.mu);
  cfg.loss = LossKind::logistic;
  const auto out = runExperiment(ds, cfg);
  for (const auto& row : out.trace.rows()) {
    REQUIRE(row.testError.has_value());
    CHECK(*row.testError >= 0);
    CHECK(*row.testError <= 1);
  }
  CHECK(testError(ds.testSet(), Vec::Zero(ds.dim())) >= 0);
}

TEST_CASE("sweep cells match single runs") {
  const auto ds = smallRegression(6);
  auto base = config(Algorithm::dualAppa, 1.0, 1e-3);
  const auto grid = lambdaGrid(-2, 0);
  REQUIRE(grid.size() == 3);
  CHECK(grid[0] == doctest::Approx(0.01));
  const std::vector<Algorithm> algos = {Algorithm::dualAppa, Algorithm::svrg};
  const auto cells = sweepLambda(ds, algos, grid, base, 3);
  REQUIRE(cells.size() == 6);
  CHECK((cells[0].algorithm == Algorithm::dualAppa));
  CHECK((cells[3].algorithm == Algorithm::svrg));

  auto single = base;
  single.algorithm = Algorithm::svrg;
  single.lambda = grid[1];
  const auto run = runExperiment(ds, single);
  CHECK(cells[4].finalObjective == run.trace.back().trainLoss);
  CHECK(cells[4].passes == run.trace.back().passes);

  std::ostringstream a, b;
  writeSweepCsv(a, cells);
  writeSweepCsv(b, sweepLambda(ds, algos, grid, base, 1));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind(std::string(kSweepSchema) + "\n" + kSweepHeader + "\n", 0) == 0);
}

TEST_CASE("huge SGD steps diverge on squared loss") {
  const auto ds = rowNormalize(smallRegression(7));
  auto cfg = config(Algorithm::sgd, 1e8, 1e-3);
  const auto out = runExperiment(ds, cfg);
  CHECK(out.diverged);
  CHECK(out.trace.back().diverged);
}

TEST_CASE("identical seeds give identical traces") {
  const auto ds = smallRegression(8);
  for (Algorithm a : {Algorithm::dualAppa, Algorithm::svrg, Algorithm::sgd}) {
    auto cfg = config(a, 0.1, 1e-3);
    std::ostringstream first, second;
    writeTraceCsv(first, runExperiment(ds, cfg).trace, false);
    writeTraceCsv(second, runExperiment(ds, cfg).trace, false);
    CHECK(first.str() == second.str());
  }
}

TEST_CASE("overflowing margins mark a sweep cell diverged") {
  const auto ds = smallRegression(9);
  auto base = config(Algorithm::sgd, 1.0, 1e-3);
  const auto cells = sweepLambda(ds, {Algorithm::sgd, Algorithm::svrg}, lambdaGrid(0, 4), base, 2);
  CHECK(std::any_of(cells.begin(), cells.end(), [](const SweepCell& c) { return c.diverged; }));
}
