#include "unreg/lemmas.hpp"
#include "unreg/trace.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace unreg {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Vector<double>;

Vec gaussian(Index size, LemmaRng& rng, double scale = 1) {
  if (scale == 0) return Vec::Zero(size);
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(size);
  for (Index i = 0; i < size; ++i) v[i] = normal(rng);
  return v;
}

double uniform(LemmaRng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

int uniformInt(LemmaRng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Perturbation scales used around reference points.
const double kScales[] = {1e-3, 1.0, 10.0};

RegularizedProblem<double> sub(const LemmaInstance& inst, const Vec& s, double lambda) {
  return RegularizedProblem<double>(inst.p(), s, lambda);
}

struct ProxOptimum {
  Vec x;
  double value;
};

ProxOptimum proxOptimum(const LemmaInstance& inst, const Vec& s, double lambda) {
  const LeastSquaresSolver<double> solver(inst.p());
  Vec x = solver.proxMinimizer(s, lambda);
  const double value = sub(inst, s, lambda).value(x);
  return {std::move(x), value};
}

}  // namespace

// --- tally ---------------------------------------------------------------------

LemmaTally::LemmaTally(std::string id, double tolerance, std::string kind) {
  report_.lemmaId = std::move(id);
  report_.tolerance = tolerance;
  report_.kind = std::move(kind);
}

void LemmaTally::inequality(double lhs, double rhs) {
  const double slack = (rhs - lhs) / (1 + std::abs(lhs) + std::abs(rhs));
  ++report_.checks;
  // NaN counts as a violation
  if (!(slack >= -report_.tolerance)) ++report_.violations;
  if (std::isnan(slack)) {
    report_.worstSlack = -std::numeric_limits<double>::infinity();
  } else {
    report_.worstSlack = std::min(report_.worstSlack, slack);
  }
}

void LemmaTally::identity(double lhs, double rhs) {
  const double slack = -std::abs(rhs - lhs) / (1 + std::abs(lhs) + std::abs(rhs));
  ++report_.checks;
  if (!(slack >= -report_.tolerance)) ++report_.violations;
  report_.worstSlack = std::isnan(slack) ? -std::numeric_limits<double>::infinity()
                                         : std::min(report_.worstSlack, slack);
}

LemmaReport mergeReports(const std::vector<LemmaReport>& parts) {
  if (parts.empty()) throw ConfigError("mergeReports: nothing to merge");
  LemmaReport out = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const auto& r = parts[k];
    if (r.lemmaId != out.lemmaId) throw ConfigError("mergeReports: mixed lemma ids");
    out.instances += r.instances;
    out.checks += r.checks;
    out.violations += r.violations;
    out.worstSlack = std::min(out.worstSlack, r.worstSlack);
    out.tolerance = std::max(out.tolerance, r.tolerance);
  }
  return out;
}

// --- instances -------------------------------------------------------------------

LemmaInstance LemmaInstance::fromData(RowMatrix<double> A, std::vector<ScalarLoss<double>> losses,
                                      std::vector<double> lambdaFactors) {
  // provisional mu; replaced by the exact curvature below
  const ErmProblem<double> probe(A, losses, 1.0);
  const double mu = LeastSquaresSolver<double>(probe).curvatureRange().first;
  if (!(mu > 0)) throw ConfigError("LemmaInstance: F is not strongly convex");
  LemmaInstance inst;
  inst.problem = std::make_shared<const ErmProblem<double>>(std::move(A), std::move(losses), mu);
  const LeastSquaresSolver<double> solver(inst.p());
  inst.xStar = solver.minimizer();
  inst.FStar = inst.p().value(inst.xStar);
  if (lambdaFactors.empty()) {
    inst.lambdas = inst.standardLambdas();
  } else {
    for (double f : lambdaFactors) inst.lambdas.push_back(f * mu);
  }
  return inst;
}

std::vector<double> LemmaInstance::standardLambdas() const {
  const double m = mu();
  const double lr2 = problem->smoothness() * problem->radius() * problem->radius();
  return {m / 2, m, 2 * m, 10 * m, lr2};
}

std::vector<LemmaInstance> lemmaBattery(const BatteryOptions& options) {
  LemmaRng rng(options.seed);
  std::vector<LemmaInstance> out;
  out.reserve(options.instances);
  for (int k = 0; k < options.instances; ++k) {
    const int d = uniformInt(rng, 1, 4);
    const bool perfect = k % 5 == 1;
    const bool nearSingular = k % 5 == 0 && d > 1;
    const int n = perfect ? d : uniformInt(rng, std::max(d, 2), 6);

    double weight = 1;
    switch (uniformInt(rng, 0, 2)) {
      case 0: weight = 1; break;
      case 1: weight = 1.0 / n; break;
      default: weight = 1.0 / (2.0 * n); break;
    }
    std::vector<ScalarLoss<double>> losses;
    for (int i = 0; i < n; ++i) {
      const double w = perfect ? weight : weight * uniform(rng, 0.5, 2.0);
      losses.push_back(ScalarLoss<double>::squared(gaussian(1, rng)[0], w));
    }

    RowMatrix<double> A(n, d);
    if (perfect) {
      Eigen::HouseholderQR<Mat> qr(Mat(gaussian(d * d, rng).reshaped(d, d)));
      A = uniform(rng, 0.5, 3.0) * Mat(qr.householderQ());
    } else {
      A = gaussian(n * d, rng).reshaped(n, d);
      A *= uniform(rng, 0.2, 5.0);
    }

    if (nearSingular) {
      // shrink the flattest direction until mu = 1e-6 L R^2
      for (int pass = 0; pass < 6; ++pass) {
        const ErmProblem<double> probe(A, losses, 1.0);
        const LeastSquaresSolver<double> solver(probe);
        Eigen::SelfAdjointEigenSolver<Mat> eig(solver.hessian());
        const double current = eig.eigenvalues()[0];
        const double target = 1e-6 * probe.smoothness() * probe.radius() * probe.radius();
        const Vec v = eig.eigenvectors().col(0);
        const double shrink = std::sqrt(target / current);
        const Vec Av = A * v;
        A -= (1 - shrink) * Av * v.transpose();
      }
    }
    out.push_back(LemmaInstance::fromData(std::move(A), std::move(losses)));
  }
  return out;
}

// --- appendix A ------------------------------------------------------------------

LemmaReport checkSmoothScBounds(const SmoothCase& f, const std::vector<Vec>& points) {
  LemmaTally tally("smooth-sc-bounds");
  tally.countInstance();
  const double fStar = f.value(f.xStar);
  for (const auto& x : points) {
    const double err = f.value(x) - fStar;
    const double g2 = f.gradient(x).squaredNorm();
    const double d2 = (x - f.xStar).squaredNorm();
    tally.inequality(g2 / (2 * f.smoothness), err);
    tally.inequality(err, f.smoothness / 2 * d2);
    tally.inequality(f.mu / 2 * d2, err);
    tally.inequality(err, g2 / (2 * f.mu));
  }
  return tally.report();
}

LemmaReport checkAddLinear(const LemmaInstance& inst, LemmaRng& rng) {
  LemmaTally tally("addlinear");
  tally.countInstance();
  const auto& p = inst.p();
  const LeastSquaresSolver<double> solver(p);
  const Eigen::LDLT<Mat> ldlt(solver.hessian());
  for (double aScale : {0.0, 1.0, 100.0}) {
    const Vec a = gaussian(p.dim(), rng, aScale);
    // grad (F + a^T x) = H x - r + a, so the shift moves the optimum by -H^{-1} a
    const Vec xa = inst.xStar - ldlt.solve(a);
    const double faStar = p.value(xa) + a.dot(xa);
    for (double scale : kScales) {
      const Vec x = inst.xStar + gaussian(p.dim(), rng, scale);
      const double lhs = p.value(x) + a.dot(x) - faStar;
      const double rhs = 2 * (p.value(x) - inst.FStar) + a.squaredNorm() / inst.mu();
      tally.inequality(lhs, rhs);
    }
  }
  return tally.report();
}

LemmaReport checkMergeQuadratic(Index dim, LemmaRng& rng, int tuples) {
  LemmaTally tally("mergequadratic", 1e-12);
  tally.countInstance();
  for (int k = 0; k < tuples; ++k) {
    const double psi1 = gaussian(1, rng)[0];
    const double psi2 = gaussian(1, rng)[0];
    const Vec v1 = gaussian(dim, rng);
    const Vec v2 = gaussian(dim, rng);
    const double mu = uniform(rng, 0.01, 10.0);
    const double alpha = k == 0 ? 0.0 : (k == 1 ? 1.0 : uniform(rng, 0.0, 1.0));
    const Vec va = alpha * v1 + (1 - alpha) * v2;
    const double psia = alpha * psi1 + (1 - alpha) * psi2 + mu / 2 * alpha * (1 - alpha) * (v1 - v2).squaredNorm();
    for (int j = 0; j < 20; ++j) {
      const Vec x = gaussian(dim, rng, 2.0);
      const double lhs = alpha * (psi1 + mu / 2 * (x - v1).squaredNorm()) +
                         (1 - alpha) * (psi2 + mu / 2 * (x - v2).squaredNorm());
      tally.identity(lhs, psia + mu / 2 * (x - va).squaredNorm());
    }
  }
  return tally.report();
}

// --- outer-loop lemmas ---------------------------------------------------------------

LemmaReport checkProximalProgress(const LemmaInstance& inst, LemmaRng& rng) {
  LemmaTally tally("relationship-between-minima");
  tally.countInstance();
  const auto& p = inst.p();
  for (double lambda : inst.lambdas) {
    for (double scale : kScales) {
      const Vec s = inst.xStar + gaussian(p.dim(), rng, scale);
      const auto opt = proxOptimum(inst, s, lambda);
      tally.inequality(opt.value - inst.FStar, lambda / (inst.mu() + lambda) * (p.value(s) - inst.FStar));
    }
  }
  return tally.report();
}

LemmaReport checkOuterLowerBound(const LemmaInstance& inst, LemmaRng& rng) {
  LemmaTally tally("outerlowerbound");
  tally.countInstance();
  const auto& p = inst.p();
  const double muP = inst.mu() / 2;
  for (double lambda : inst.lambdas) {
    for (double offset : {0.0, 1e-3, 1.0}) {
      const Vec x0 = inst.xStar + gaussian(p.dim(), rng, 1.0);
      const auto opt = proxOptimum(inst, x0, lambda);
      const Vec xPlus = opt.x + gaussian(p.dim(), rng, offset);
      const double eps = sub(inst, x0, lambda).value(xPlus) - opt.value;
      const Vec g = lambda * (x0 - xPlus);
      const Vec center = x0 - (1 / muP + 1 / lambda) * g;
      for (double scale : kScales) {
        const Vec x = inst.xStar + gaussian(p.dim(), rng, scale);
        const double bound = p.value(xPlus) - g.squaredNorm() / (2 * muP) + muP / 2 * (x - center).squaredNorm() -
                             (lambda + 2 * muP) / muP * eps;
        tally.inequality(bound, p.value(x));
      }
    }
  }
  return tally.report();
}

LemmaReport checkContraction(const LemmaInstance& inst, LemmaRng& rng, double cPrime) {
  LemmaTally tally("appa-contraction");
  tally.countInstance();
  const auto& p = inst.p();
  const double mu = inst.mu();
  for (double lambda : inst.lambdas) {
    const double c = (lambda + mu) / (cPrime * mu);
    for (double scale : kScales) {
      const Vec s = inst.xStar + gaussian(p.dim(), rng, scale);
      const auto opt = proxOptimum(inst, s, lambda);
      // on a quadratic sub-problem this point has error exactly (f(s) - f*) / c
      const Vec out = opt.x + (s - opt.x) / std::sqrt(c);
      tally.inequality(p.value(out) - inst.FStar, (lambda + cPrime * mu) / (lambda + mu) * (p.value(s) - inst.FStar));
    }
  }
  return tally.report();
}

// --- duality lemmas ------------------------------------------------------------------

LemmaReport checkDualBoundsPrimalLemma(const LemmaInstance& inst, LemmaRng& rng) {
  LemmaTally tally("dual-bounds-primal");
  tally.countInstance();
  const auto& p = inst.p();
  for (double lambda : inst.lambdas) {
    const Vec s = inst.xStar + gaussian(p.dim(), rng, 1.0);
    const auto rp = sub(inst, s, lambda);
    const auto opt = proxOptimum(inst, s, lambda);
    const DualState<double> yStar = primalToDual(p, opt.x);
    for (double scale : {0.0, 1e-6, 1e-3, 1.0, 100.0}) {
      const DualState<double> ds(p.data(), yStar.y + gaussian(p.size(), rng, scale * (1 + yStar.y.norm())));
      const auto check = checkDualBoundsPrimal(rp, ds, opt.value, -opt.value);
      tally.inequality(check.lhs, check.rhs);
    }
  }
  return tally.report();
}

LemmaReport checkGapIdentity(const LemmaInstance& inst, LemmaRng& rng, GapForm form) {
  LemmaTally tally(form == GapForm::corrected ? "gap-primal-dual-pairs" : "gap-primal-dual-pairs-as-stated", 1e-9,
                   form == GapForm::corrected ? "lemma" : "informational");
  tally.countInstance();
  const auto& p = inst.p();
  for (double lambda : inst.lambdas) {
    for (double scale : kScales) {
      const Vec s = inst.xStar + gaussian(p.dim(), rng, scale);
      const Vec x = inst.xStar + gaussian(p.dim(), rng, scale);
      const auto rp = sub(inst, s, lambda);
      const double gap = dualityGap(rp, x, primalToDual(p, x));
      const Vec grad = p.gradient(x);
      const double rhs = form == GapForm::corrected
                             ? (grad + lambda * (x - s)).squaredNorm() / (2 * lambda)
                             : grad.squaredNorm() / (2 * lambda) + lambda / 2 * (x - s).squaredNorm();
      tally.identity(gap, rhs);
    }
  }
  return tally.report();
}

LemmaReport checkInitialDualErrorLemma(const LemmaInstance& inst, LemmaRng& rng, InitialDualConstant constant) {
  const bool proved = constant == InitialDualConstant::proved;
  LemmaTally tally(proved ? "initial-dual-error" : "initial-dual-error-as-stated", 1e-9,
                   proved ? "lemma" : "informational");
  tally.countInstance();
  const auto& p = inst.p();
  for (double lambda : inst.lambdas) {
    for (double scale : kScales) {
      const Vec x = inst.xStar + gaussian(p.dim(), rng, scale);
      const auto opt = proxOptimum(inst, x, lambda);
      const auto check = checkInitialDualError(p, x, lambda, opt.value, -opt.value, constant);
      tally.inequality(check.lhs, check.rhs);
    }
  }
  return tally.report();
}

LemmaReport checkRecentering(const LemmaInstance& inst, LemmaRng& rng) {
  LemmaTally tally("dual-recentering");
  tally.countInstance();
  const auto& p = inst.p();
  for (double lambda : inst.lambdas) {
    for (double scale : {0.0, 1e-3, 1.0}) {
      const Vec xOld = inst.xStar + gaussian(p.dim(), rng, 1.0);
      const auto oldOpt = proxOptimum(inst, xOld, lambda);
      const DualState<double> yStar = primalToDual(p, oldOpt.x);
      const DualState<double> ds(p.data(), yStar.y + gaussian(p.size(), rng, scale * (1 + yStar.y.norm())));
      const Vec xNew = dualToPrimal(sub(inst, xOld, lambda), ds);
      const auto newOpt = proxOptimum(inst, xNew, lambda);
      const RecenterOptima<double> optima{-oldOpt.value, -newOpt.value, inst.FStar};
      const auto check = checkRecenterErrorBound(p, ds, xOld, lambda, optima);
      tally.inequality(check.lhs, check.rhs);
    }
  }
  return tally.report();
}

// --- logistic twin ----------------------------------------------------------------

SmoothCase logisticCase(const LemmaInstance& inst, LemmaRng& rng) {
  const auto& base = inst.p();
  std::vector<ScalarLoss<double>> losses;
  for (Index i = 0; i < base.size(); ++i) {
    const double label = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
    losses.push_back(ScalarLoss<double>::logistic(label, base.loss(i).weight));
  }
  const double lossSmooth = base.loss(0).weight / 4;
  const double gamma = 0.05 * lossSmooth * base.radius() * base.radius() + 1e-3;
  auto p = std::make_shared<const ErmProblem<double>>(base.data(), losses, gamma, gamma);

  // Newton's method; F is smooth and gamma-strongly convex
  Vec x = Vec::Zero(base.dim());
  for (int iter = 0; iter < 100; ++iter) {
    const Vec g = p->gradient(x);
    if (g.norm() < 1e-15) break;
    const Vec margins = p->data() * x;
    Vec curv(p->size());
    for (Index i = 0; i < p->size(); ++i) curv[i] = lossSecondDerivative(p->loss(i), margins[i]);
    Mat H = p->data().transpose() * curv.asDiagonal() * p->data();
    H.diagonal().array() += gamma;
    x -= H.ldlt().solve(g);
  }

  Mat AtA = base.data().transpose() * base.data();
  double maxWeight = 0;
  for (const auto& l : losses) maxWeight = std::max(maxWeight, l.weight);
  Eigen::SelfAdjointEigenSolver<Mat> eig(AtA, Eigen::EigenvaluesOnly);

  SmoothCase out;
  out.value = [p](const Vec& z) { return p->value(z); };
  out.gradient = [p](const Vec& z) { return p->gradient(z); };
  out.xStar = x;
  out.smoothness = maxWeight / 4 * eig.eigenvalues().maxCoeff() + gamma;
  out.mu = gamma;
  return out;
}

// --- battery ----------------------------------------------------------------------

std::vector<LemmaReport> runLemmaBattery(const BatteryOptions& options) {
  const auto instances = lemmaBattery(options);
  LemmaRng rng(options.seed ^ 0x9E3779B97F4A7C15ULL);

  std::vector<std::vector<LemmaReport>> parts(12);
  for (const auto& inst : instances) {
    const auto& p = inst.p();
    std::vector<Vec> points;
    for (double scale : kScales) points.push_back(inst.xStar + gaussian(p.dim(), rng, scale));
    SmoothCase quad;
    quad.value = [&inst](const Vec& z) { return inst.p().value(z); };
    quad.gradient = [&inst](const Vec& z) { return inst.p().gradient(z); };
    quad.xStar = inst.xStar;
    const auto range = LeastSquaresSolver<double>(p).curvatureRange();
    quad.smoothness = range.second;
    quad.mu = range.first;
    auto smooth = checkSmoothScBounds(quad, points);
    const SmoothCase logistic = logisticCase(inst, rng);
    std::vector<Vec> logisticPoints;
    for (double scale : kScales) logisticPoints.push_back(logistic.xStar + gaussian(p.dim(), rng, scale));
    auto logisticReport = checkSmoothScBounds(logistic, logisticPoints);
    logisticReport.instances = 0;
    parts[0].push_back(mergeReports({smooth, logisticReport}));

    parts[1].push_back(checkAddLinear(inst, rng));
    parts[2].push_back(checkMergeQuadratic(p.dim(), rng, 3));
    parts[3].push_back(checkProximalProgress(inst, rng));
    parts[4].push_back(checkOuterLowerBound(inst, rng));
    parts[5].push_back(checkContraction(inst, rng));
    parts[6].push_back(checkDualBoundsPrimalLemma(inst, rng));
    parts[7].push_back(checkGapIdentity(inst, rng, GapForm::corrected));
    parts[8].push_back(checkInitialDualErrorLemma(inst, rng, InitialDualConstant::proved));
    parts[9].push_back(checkRecentering(inst, rng));
    parts[10].push_back(checkGapIdentity(inst, rng, GapForm::asStated));
    parts[11].push_back(checkInitialDualErrorLemma(inst, rng, InitialDualConstant::asStated));
  }
  std::vector<LemmaReport> reports;
  for (const auto& group : parts) reports.push_back(mergeReports(group));
  return reports;
}

void writeLemmaCsv(std::ostream& out, const std::vector<LemmaReport>& reports) {
  out << "lemma,kind,instances,checks,violations,worst_slack,tolerance\n";
  for (const auto& r : reports) {
    out << r.lemmaId << ',' << r.kind << ',' << r.instances << ',' << r.checks << ',' << r.violations << ','
        << formatReal(r.worstSlack) << ',' << formatReal(r.tolerance) << '\n';
  }
}

}  // namespace unreg
