#include "unreg/experiment.hpp"
#include "unreg/lemmas.hpp"
#include "unreg/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kFlagged = 3;

struct DataOptions {
  std::string path;
  std::string format = "csv";
  bool rowNormalize = false;
  std::int64_t rff = -1;
  double bandwidth = 1;
  bool affine = false;
  double testFraction = 0;
};

struct RunOptionsCli {
  std::string loss = "squared";
  double lambda = 1;
  double mu = 0;
  std::int64_t stages = 20;
  std::uint64_t seed = 0;
  std::string oracle;
  std::int64_t innerPasses = 1;
  bool theory = false;
  double gapFactor = 0;
  bool excess = false;
  std::string out = "-";
};

void addDataOptions(CLI::App& cmd, DataOptions& d) {
  cmd.add_option("--data", d.path, "Dataset path")->required();
  cmd.add_option("--format", d.format, "libsvm or csv")->check(CLI::IsMember({"libsvm", "csv"}));
  cmd.add_flag("--row-normalize", d.rowNormalize, "Scale rows to unit mean norm");
  cmd.add_option("--rff", d.rff, "Random Fourier features (0 selects n/5)");
  cmd.add_option("--bandwidth", d.bandwidth, "Random Fourier feature bandwidth");
  cmd.add_flag("--affine", d.affine, "Append a constant feature");
  cmd.add_option("--test-fraction", d.testFraction, "Held-out fraction for test error");
}

void addRunOptions(CLI::App& cmd, RunOptionsCli& r) {
  cmd.add_option("--loss", r.loss, "squared or logistic")->check(CLI::IsMember({"squared", "logistic"}));
  cmd.add_option("--mu", r.mu, "Strong convexity of F")->required();
  cmd.add_option("--stages", r.stages, "Outer stages");
  cmd.add_option("--seed", r.seed, "Random seed");
  cmd.add_option("--oracle", r.oracle, "Inner solver: svrg, sdca, apcg, gd, agd");
  cmd.add_option("--inner-passes", r.innerPasses, "Passes per oracle call");
  cmd.add_flag("--theory", r.theory, "Run oracles to their theoretical accuracy");
  cmd.add_option("--gap-factor", r.gapFactor, "Practical oracles stop after this gap reduction");
  cmd.add_flag("--excess", r.excess, "Compute F* and record excess loss");
  cmd.add_option("--out", r.out, "Output CSV path, - for stdout");
}

unreg::Dataset prepare(const DataOptions& d, std::uint64_t seed) {
  auto ds = unreg::loadDataset(d.path, unreg::parseDataFormat(d.format));
  if (d.testFraction > 0) ds = unreg::holdoutSplit(std::move(ds), d.testFraction, seed);
  if (d.rowNormalize) ds = unreg::rowNormalize(std::move(ds));
  if (d.rff >= 0) {
    const auto D = d.rff == 0 ? std::max<unreg::Index>(1, ds.size() / 5) : unreg::Index(d.rff);
    ds = unreg::randomFourierFeatures(ds, D, d.bandwidth, seed);
  }
  if (d.affine) ds = unreg::appendAffineFeature(std::move(ds));
  return ds;
}

unreg::ExperimentConfig toConfig(const RunOptionsCli& r) {
  unreg::ExperimentConfig cfg;
  cfg.loss = unreg::parseLoss(r.loss);
  cfg.lambda = r.lambda;
  cfg.mu = r.mu;
  cfg.stages = r.stages;
  cfg.seed = r.seed;
  if (!r.oracle.empty()) cfg.oracle = unreg::parseSolver(r.oracle);
  cfg.innerPasses = r.innerPasses;
  cfg.theoryOracle = r.theory;
  if (r.gapFactor != 0) cfg.gapFactor = r.gapFactor;
  return cfg;
}

/// Writes through `write` to a file or stdout.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw unreg::ParseError("cannot write '" + path + "'");
  write(out);
}

std::optional<double> optimumFor(const unreg::Dataset& ds, unreg::LossKind loss, double mu) {
  const auto p = unreg::buildProblem(ds.trainSet(), loss, mu);
  const auto opt = unreg::ermOptimum(p);
  std::cerr << "F* = " << unreg::formatReal(opt.value) << " (gradient norm " << opt.gradNorm << ")\n";
  return opt.value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate proximal point solvers for empirical risk minimization"};
  app.require_subcommand(1);

  DataOptions solveData;
  RunOptionsCli solveRun;
  std::string algo = "dual-appa";
  bool timing = false;
  auto* solve = app.add_subcommand("solve", "Run one algorithm and write its convergence trace");
  addDataOptions(*solve, solveData);
  addRunOptions(*solve, solveRun);
  solve->add_option("--algo", algo, "appa, accel-appa, dual-appa, sdca, svrg, sgd, gd, agd");
  solve->add_option("--lambda", solveRun.lambda, "Proximal weight, step size or ridge penalty")->required();
  solve->add_flag("--timing", timing, "Include wall-clock seconds in the trace");

  DataOptions sweepData;
  RunOptionsCli sweepRun;
  std::string gridExp = "-8:8";
  std::vector<std::string> algos{"dual-appa", "sdca", "svrg", "sgd"};
  unsigned threads = 0;
  auto* sweep = app.add_subcommand("sweep", "Final objective over a lambda grid");
  addDataOptions(*sweep, sweepData);
  addRunOptions(*sweep, sweepRun);
  sweep->add_option("--grid-exp", gridExp, "Exponent range lo:hi of lambda = 10^i");
  sweep->add_option("--algos", algos, "Algorithms to sweep")->delimiter(',');
  sweep->add_option("--threads", threads, "Worker threads, 0 for all cores");

  std::string lemmaOut = "-";
  unreg::BatteryOptions battery;
  auto* lemmas = app.add_subcommand("check-lemmas", "Verify the lemma battery on random instances");
  lemmas->add_option("--out", lemmaOut, "Output CSV path, - for stdout");
  lemmas->add_option("--seed", battery.seed, "Battery seed");
  lemmas->add_option("--instances", battery.instances, "Number of instances");

  unreg::SynthSpec synthSpec;
  std::string kind = "ls";
  std::string synthOut = "-";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a given condition number");
  synth->add_option("--kind", kind, "ls or logistic")->check(CLI::IsMember({"ls", "logistic"}));
  synth->add_option("--n", synthSpec.n, "Examples");
  synth->add_option("--d", synthSpec.d, "Features");
  synth->add_option("--kappa", synthSpec.kappa, "Target condition number");
  synth->add_option("--seed", synthSpec.seed, "Random seed");
  synth->add_option("--noise", synthSpec.noise, "Regression noise level");
  synth->add_option("--flip", synthSpec.labelFlip, "Label flip probability");
  synth->add_option("--out", synthOut, "Output CSV path, - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (solve->parsed()) {
      const auto ds = prepare(solveData, solveRun.seed);
      auto cfg = toConfig(solveRun);
      cfg.algorithm = unreg::parseAlgorithm(algo);
      cfg.validate();
      const auto fStar = solveRun.excess ? optimumFor(ds, cfg.loss, cfg.mu) : std::nullopt;
      const auto result = unreg::runExperiment(ds, cfg, fStar);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      emit(solveRun.out, [&](std::ostream& out) { unreg::writeTraceCsv(out, result.trace, timing); });
      if (result.diverged) {
        std::cerr << "run diverged at stage " << result.trace.back().stage << '\n';
        return kFlagged;
      }
      if (!result.converged) {
        std::cerr << "an oracle call did not reach its target\n";
        return kFlagged;
      }
      return kOk;
    }
    if (sweep->parsed()) {
      const auto colon = gridExp.find(':');
      if (colon == std::string::npos) throw unreg::ConfigError("--grid-exp expects lo:hi");
      int lo = 0, hi = 0;
      try {
        lo = std::stoi(gridExp.substr(0, colon));
        hi = std::stoi(gridExp.substr(colon + 1));
      } catch (const std::exception&) {
        throw unreg::ConfigError("--grid-exp expects integer lo:hi");
      }
      const auto ds = prepare(sweepData, sweepRun.seed);
      auto base = toConfig(sweepRun);
      std::vector<unreg::Algorithm> list;
      for (const auto& a : algos) list.push_back(unreg::parseAlgorithm(a));
      const auto cells = unreg::sweepLambda(ds, list, unreg::lambdaGrid(lo, hi), base, threads);
      emit(sweepRun.out, [&](std::ostream& out) { unreg::writeSweepCsv(out, cells); });
      return kOk;
    }
    if (lemmas->parsed()) {
      const auto reports = unreg::runLemmaBattery(battery);
      emit(lemmaOut, [&](std::ostream& out) { unreg::writeLemmaCsv(out, reports); });
      for (const auto& r : reports) {
        if (r.kind == "lemma" && !r.passed()) return kFlagged;
      }
      return kOk;
    }
    if (synth->parsed()) {
      synthSpec.kind = kind == "ls" ? unreg::LossKind::squared : unreg::LossKind::logistic;
      const auto result = unreg::synthesize(synthSpec);
      emit(synthOut, [&](std::ostream& out) { unreg::writeCsv(out, result.data); });
      std::cerr << "mu=" << unreg::formatReal(result.mu) << " kappa=" << result.kappa
                << " fstar=" << unreg::formatReal(result.fStar) << '\n';
      if (synthOut != "-") {
        std::cout << "mu=" << unreg::formatReal(result.mu) << " kappa=" << result.kappa
                  << " fstar=" << unreg::formatReal(result.fStar) << '\n';
      }
      return kOk;
    }
  } catch (const unreg::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const unreg::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const unreg::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
