#include <doctest.h>

#include "oracle.hpp"
#include "unreg/appa.hpp"

#include <cmath>
#include <random>

using namespace unreg;
using oracle::Vec;
using Erm = ErmProblem<double>;

namespace {

Vec randomVec(Index d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(d);
  for (Index j = 0; j < d; ++j) v[j] = normal(rng);
  return v;
}

AppaConfig<double> appaConfig(double lambda, std::int64_t stages) {
  AppaConfig<double> cfg;
  cfg.lambda = lambda;
  cfg.outerIterations = stages;
  return cfg;
}

SolverConfig solver(SolverKind kind) {
  SolverConfig cfg;
  cfg.kind = kind;
  return cfg;
}

TraceRow row(std::int64_t stage, double excess) {
  TraceRow r;
  r.stage = stage;
  r.passes = double(stage);
  r.excessLoss = excess;
  return r;
}

}  // namespace

TEST_CASE("one exact-prox APPA step on the 1-D problem") {
  const auto p = oracle::oneDim();
  Rng rng(0);
  const auto out = appaRun(p, Vec(Vec::Zero(1)), appaConfig(5, 1), oracle::exactProx(p), rng);
  CHECK(out.x[0] == doctest::Approx(0.5));
  CHECK(p.value(out.x) / p.value(Vec::Zero(1)) == doctest::Approx(0.25));
  CHECK(out.trace.rows().size() == 2);

  // min f_{0,5} - F* = (lambda/(mu+lambda))(F(0) - F*), both 5/4
  const auto ls = oracle::LsData::of(p);
  CHECK(ls.proxValue(Vec::Zero(1), 5.0) == doctest::Approx(1.25));
  CHECK(5.0 / 10.0 * p.value(Vec::Zero(1)) == doctest::Approx(1.25));
}

TEST_CASE("APPA oracle factor") {
  auto cfg = appaConfig(3, 1);
  CHECK(cfg.oracleFactor(1.0) == doctest::Approx(8.0));
  cfg.cPrime = 0.25;
  CHECK(cfg.oracleFactor(1.0) == doctest::Approx(16.0));
  cfg.cPrime = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("APPA fixed point and monotone exact-prox trace") {
  std::mt19937_64 gen(31);
  const auto p = oracle::randomLs(10, 3, gen);
  const auto ls = oracle::LsData::of(p);
  const Vec xs = ls.minimizer();
  Rng rng(0);
  const auto still = appaRun(p, xs, appaConfig(2.0, 5), oracle::exactProx(p), rng);
  CHECK((still.x - xs).norm() <= 1e-10 * (1 + xs.norm()));

  const auto run = appaRun(p, Vec(Vec::Constant(3, 4.0)), appaConfig(2.0, 20), oracle::exactProx(p), rng);
  const auto& rows = run.trace.rows();
  for (std::size_t t = 1; t < rows.size(); ++t) CHECK(rows[t].trainLoss <= rows[t - 1].trainLoss + 1e-12);
}

TEST_CASE("APPA with an SVRG oracle contracts in expectation") {
  std::mt19937_64 gen(32);
  const Index n = 30;
  const auto p = oracle::randomLs(n, 4, gen, 1.0 / n);
  const auto ls = oracle::LsData::of(p);
  const double fStar = ls.value(ls.minimizer());
  const double lambda = 4 * p.mu();
  const auto oracle = makePrimalOracle<Erm>(solver(SolverKind::svrg), OracleMode::theory);
  double total = 0;
  int stagesSeen = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    RunOptions<double> options;
    options.fStar = fStar;
    const auto run = appaRun(p, randomVec(4, gen, 3.0), appaConfig(lambda, 3), oracle, rng, options);
    const auto& rows = run.trace.rows();
    for (std::size_t t = 1; t < rows.size(); ++t) {
      total += *rows[t].excessLoss / *rows[t - 1].excessLoss;
      ++stagesSeen;
    }
  }
  CHECK(total / stagesSeen <= (lambda + 0.75 * p.mu()) / (lambda + p.mu()));
}

TEST_CASE("APPA stops at the target gap") {
  std::mt19937_64 gen(33);
  const auto p = oracle::randomLs(10, 3, gen);
  auto cfg = appaConfig(p.mu(), 100);
  cfg.targetEpsilon = 1e-8;
  Rng rng(0);
  const auto run = appaRun(p, Vec(Vec::Ones(3)), cfg, oracle::exactProx(p), rng);
  CHECK(run.trace.rows().size() < 101);
  CHECK(*run.trace.back().certifiedGap <= 1e-8);
  CHECK(run.converged);
}

TEST_CASE("accelerated state") {
  const auto s = AcceleratedState<double>::start(Vec(Vec::Ones(2)), 1.0, 4.0);
  CHECK(s.rho == doctest::Approx(9.0));
  CHECK(s.zeta == doctest::Approx(2.25));
  CHECK(s.muPrime == doctest::Approx(0.5));
  CHECK(s.beta == doctest::Approx(1 - 1.0 / 3));
  CHECK(s.v == s.x);
  CHECK_FALSE(s.psiStar.has_value());
  CHECK_THROWS_AS(AcceleratedState<double>::start(Vec(Vec::Ones(2)), 1.0, 2.0), ConfigError);
  CHECK(acceleratedOracleFactor(1.0, 4.0) == doctest::Approx(108.0));
}

TEST_CASE("accelerated APPA lower bound and contraction") {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 gen(40 + seed);
    const auto p = oracle::randomQuadratic(2 + seed, gen);
    const auto ls = oracle::LsData::of(p);
    const double fStar = ls.value(ls.minimizer());
    RunOptions<double> options;
    options.fStar = fStar;
    Rng rng(seed);
    std::vector<double> gaps;
    bool boundHolds = true;
    bool firstIsStart = true;
    const Vec x0 = randomVec(p.dim(), gen, 5.0);
    acceleratedAppaRun(p, x0, appaConfig(4.0, 30), oracle::exactProx(p), rng, options,
                       [&](const AcceleratedState<double>& s) {
                         if (gaps.empty()) firstIsStart = (s.v - x0).norm() == 0;
                         gaps.push_back(p.value(s.x) - *s.psiStar);
                         for (int k = 0; k < 20; ++k) {
                           const Vec z = s.v + randomVec(p.dim(), gen, 3.0);
                           if (s.lowerBound(z) > p.value(z) + 1e-9 * (1 + std::abs(p.value(z)))) boundHolds = false;
                         }
                       });
    CHECK(firstIsStart);
    CHECK(boundHolds);
    REQUIRE(gaps.size() == 31);
    for (std::size_t t = 1; t < gaps.size(); ++t) {
      if (gaps[t - 1] < 1e-12) break;
      CHECK(gaps[t] / gaps[t - 1] <= 1 - 1.0 / 6 + 1e-9);
    }
  }
}

TEST_CASE("accelerated APPA rejects small lambda") {
  const auto p = oracle::oneDim();
  Rng rng(0);
  CHECK_THROWS_AS(acceleratedAppaRun(p, Vec(Vec::Zero(1)), appaConfig(10.0, 1), oracle::exactProx(p), rng),
                  ConfigError);
}

TEST_CASE("reduction by a factor c") {
  std::mt19937_64 gen(50);
  const auto p = oracle::randomQuadratic(4, gen);
  const auto ls = oracle::LsData::of(p);
  const double fStar = ls.value(ls.minimizer());
  const Vec x0 = randomVec(4, gen, 4.0);
  Rng rng(0);
  CHECK(theoremOneIterations(1.0, 4.0, 1.0) == 0);
  CHECK(theoremOneReduction(p, x0, 1.0, 4.0, oracle::exactProx(p), rng) == x0);
  const Vec x1 = theoremOneReduction(p, x0, 100.0, 4.0, oracle::exactProx(p), rng);
  CHECK((p.value(x0) - fStar) / (p.value(x1) - fStar) >= 100);
}

TEST_CASE("reduction on a general ERM problem with SVRG") {
  using G = GeneralErmProblem<double>;
  std::vector<G::Component> parts;
  for (int i = 0; i < 3; ++i) {
    const double shift = 2.0 * i - 2.0;
    parts.push_back({[shift](const Vec& x) { return std::log(std::cosh(x[0] + x[1] - shift)) + 0.5 * x.squaredNorm(); },
                     [shift](const Vec& x) {
                       Vec g = x;
                       const double t = std::tanh(x[0] + x[1] - shift);
                       g[0] += t;
                       g[1] += t;
                       return g;
                     }});
  }
  const G f(2, parts, 3.0, 3.0);
  const Vec xs = oracle::newton([&](const Vec& x) { return f.value(x); }, [&](const Vec& x) { return f.gradient(x); },
                                Vec::Zero(2));
  const double fStar = f.value(xs);
  const auto oracle = makePrimalOracle<G>(solver(SolverKind::svrg), OracleMode::theory);
  const Vec x0 = Vec::Constant(2, 5.0);
  double total = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Vec x1 = theoremOneReduction(f, x0, 10.0, 8.0, oracle, rng);
    total += (f.value(x1) - fStar) / (f.value(x0) - fStar);
  }
  CHECK(total / 20 <= 0.1 * 1.2);
}

TEST_CASE("Dual APPA on the 1-D problem with theory sigma") {
  const auto p = oracle::oneDim();
  const auto ls = oracle::LsData::of(p);
  DualAppaConfig<double> cfg;
  cfg.lambda = 5;
  cfg.mode = OracleMode::theory;
  cfg.outerIterations = 8;
  CHECK(dualAppaTheorySigma(p, 5.0) == doctest::Approx(320.0));
  double total = 0;
  int count = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    RunOptions<double> options;
    options.fStar = 0.0;
    const auto run = dualAppaRun<double>(p, Vec(Vec::Constant(1, -3.0)), cfg,
                                 makeDualOracle<double>(solver(SolverKind::sdca), OracleMode::theory), rng, options,
                                 [&](const RegularizedProblem<double>& rp) {
                                   return -ls.proxValue(rp.center(), rp.lambda());
                                 });
    CHECK(run.warnings.empty());
    for (const auto& stage : run.stages) {
      CHECK(stage.warmStartError <= 1e-10);
      CHECK(*stage.primalError <= *stage.primalBound * (1 + 1e-9) + 1e-15);
      CHECK(*stage.dualError <= *stage.primalBound * (1 + 1e-9) + 1e-15);
    }
    const auto& rows = run.trace.rows();
    for (std::size_t t = 1; t < rows.size(); ++t) {
      if (*rows[t - 1].excessLoss < 1e-20) break;
      total += *rows[t].excessLoss / *rows[t - 1].excessLoss;
      ++count;
    }
  }
  CHECK(total / count <= 0.75);
}

TEST_CASE("Dual APPA fixed point") {
  std::mt19937_64 gen(51);
  const auto p = oracle::randomLs(8, 3, gen, 0.5);
  const auto ls = oracle::LsData::of(p);
  const Vec xs = ls.minimizer();
  DualAppaConfig<double> cfg;
  cfg.lambda = 1;
  cfg.sigma = 10;
  cfg.outerIterations = 4;
  Rng rng(0);
  const auto run = dualAppaRun<double>(p, xs, cfg, makeDualOracle<double>(solver(SolverKind::sdca), OracleMode::practical),
                               rng);
  CHECK((run.x - xs).norm() <= 1e-9 * (1 + xs.norm()));
}

TEST_CASE("Dual APPA clamps saturated logistic duals") {
  oracle::Mat A(2, 1);
  A << 1, -1;
  const Erm p(A, {ScalarLoss<double>::logistic(1, 0.5), ScalarLoss<double>::logistic(1, 0.5)}, 0.01, 0.01);
  DualAppaConfig<double> cfg;
  cfg.lambda = 1;
  cfg.sigma = 10;
  cfg.outerIterations = 2;
  Rng rng(0);
  const auto run = dualAppaRun<double>(p, Vec(Vec::Constant(1, 1e3)), cfg, fixedPassDualOracle<double>(SolverKind::sdca, 2),
                               rng);
  REQUIRE_FALSE(run.warnings.empty());
  CHECK(run.warnings.front().find("clamped") != std::string::npos);
  CHECK(std::isfinite(run.trace.back().trainLoss));
}

TEST_CASE("lambda decrease schedule") {
  ConvergenceTrace fast;
  for (int t = 0; t < 5; ++t) fast.append(row(t, std::pow(0.1, t)));
  CHECK(lambdaDecreaseSchedule(fast, 10.0, 1.0) == 10.0);

  ConvergenceTrace stagnant;
  for (int t = 0; t < 5; ++t) stagnant.append(row(t, 1.0 - 1e-4 * t));
  CHECK(lambdaDecreaseSchedule(stagnant, 100.0, 1.0) == doctest::Approx(10.0));
  CHECK(lambdaDecreaseSchedule(stagnant, 10.0, 1.0) == doctest::Approx(2.0));
  CHECK(lambdaDecreaseSchedule(stagnant, 2.0, 1.0) == 2.0);

  ConvergenceTrace shortTrace;
  shortTrace.append(row(0, 1.0));
  shortTrace.append(row(1, 0.5));
  CHECK_THROWS_AS(lambdaDecreaseSchedule(shortTrace, 10.0, 1.0), ConfigError);
}

TEST_CASE("fixed-budget oracles validate their arguments") {
  CHECK_THROWS_AS(fixedPassDualOracle<double>(SolverKind::svrg, 1), ConfigError);
  CHECK_THROWS_AS(fixedPassDualOracle<double>(SolverKind::sdca, 0), ConfigError);
  CHECK_THROWS_AS(fixedEpochPrimalOracle<Erm>(solver(SolverKind::gd), 1), ConfigError);
  CHECK_THROWS_AS(fixedEpochPrimalOracle<Erm>(solver(SolverKind::svrg), 0), ConfigError);
}

TEST_CASE("a diverging oracle is flagged") {
  std::mt19937_64 gen(52);
  const auto p = oracle::randomLs(10, 3, gen, 0.1);
  SolverConfig cfg = solver(SolverKind::svrg);
  cfg.stepSize = 1e6;
  Rng rng(0);
  const auto run = appaRun(p, Vec(Vec::Ones(3)), appaConfig(1e-3, 20), fixedEpochPrimalOracle<Erm>(cfg, 1), rng);
  CHECK(run.diverged);
  CHECK(run.trace.diverged());
}
