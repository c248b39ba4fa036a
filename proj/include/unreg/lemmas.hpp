#pragma once

#include "unreg/duality.hpp"
#include "unreg/least_squares.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace unreg {

/// Outcome of one lemma over a set of instances. Slack is (rhs - lhs) / (1 + |lhs| + |rhs|),
/// so violations == 0 exactly when worstSlack >= -tolerance.
struct LemmaReport {
  std::string lemmaId;
  std::string kind = "lemma";  ///< "lemma" or "informational"
  std::int64_t instances = 0;
  std::int64_t checks = 0;
  std::int64_t violations = 0;
  double worstSlack = std::numeric_limits<double>::infinity();
  double tolerance = 1e-9;

  bool passed() const { return violations == 0; }
};

/// Accumulates inequality and identity checks into a report.
class LemmaTally {
 public:
  explicit LemmaTally(std::string id, double tolerance = 1e-9, std::string kind = "lemma");

  /// lhs <= rhs.
  void inequality(double lhs, double rhs);
  /// lhs == rhs, checked in both directions.
  void identity(double lhs, double rhs);
  void countInstance() { ++report_.instances; }

  const LemmaReport& report() const { return report_; }

 private:
  LemmaReport report_;
};

LemmaReport mergeReports(const std::vector<LemmaReport>& parts);

/// A squared-loss ERM instance with its closed-form optimum.
struct LemmaInstance {
  std::shared_ptr<const ErmProblem<double>> problem;
  Vector<double> xStar;
  double FStar = 0;
  std::vector<double> lambdas;

  /// mu is taken as the exact smallest curvature of F.
  static LemmaInstance fromData(RowMatrix<double> A, std::vector<ScalarLoss<double>> losses,
                                std::vector<double> lambdaFactors = {});
  const ErmProblem<double>& p() const { return *problem; }
  double mu() const { return problem->mu(); }
  /// {mu/2, mu, 2 mu, 10 mu, L R^2}
  std::vector<double> standardLambdas() const;
};

/// A smooth, strongly convex function with known minimizer.
struct SmoothCase {
  std::function<double(const Vector<double>&)> value;
  std::function<Vector<double>(const Vector<double>&)> gradient;
  Vector<double> xStar;
  double smoothness = 1;
  double mu = 1;
};

using LemmaRng = std::mt19937_64;

LemmaReport checkSmoothScBounds(const SmoothCase& f, const std::vector<Vector<double>>& points);
LemmaReport checkAddLinear(const LemmaInstance& inst, LemmaRng& rng);
LemmaReport checkMergeQuadratic(Index dim, LemmaRng& rng, int tuples = 1);
LemmaReport checkProximalProgress(const LemmaInstance& inst, LemmaRng& rng);
LemmaReport checkOuterLowerBound(const LemmaInstance& inst, LemmaRng& rng);
LemmaReport checkContraction(const LemmaInstance& inst, LemmaRng& rng, double cPrime = 0.5);
LemmaReport checkDualBoundsPrimalLemma(const LemmaInstance& inst, LemmaRng& rng);

enum class GapForm {
  /// (1/2 lambda)||grad F(x) + lambda (x - s)||^2
  corrected,
  /// (1/2 lambda)||grad F(x)||^2 + (lambda/2)||x - s||^2
  asStated,
};
LemmaReport checkGapIdentity(const LemmaInstance& inst, LemmaRng& rng, GapForm form = GapForm::corrected);
LemmaReport checkInitialDualErrorLemma(const LemmaInstance& inst, LemmaRng& rng,
                                       InitialDualConstant constant = InitialDualConstant::proved);
LemmaReport checkRecentering(const LemmaInstance& inst, LemmaRng& rng);

/// Logistic-loss twin of a battery instance with an explicit l2 term, used by
/// the smooth/strongly-convex bounds.
SmoothCase logisticCase(const LemmaInstance& inst, LemmaRng& rng);

struct BatteryOptions {
  std::uint64_t seed = 0xC0FFEE;
  int instances = 50;
};

/// Seeded random instances with n <= 6, d <= 4; every fifth is near-singular
/// (mu = 1e-6 L R^2) and every fifth (offset one) perfectly conditioned.
std::vector<LemmaInstance> lemmaBattery(const BatteryOptions& options = {});

/// The ten lemma checks followed by informational rows.
std::vector<LemmaReport> runLemmaBattery(const BatteryOptions& options = {});

void writeLemmaCsv(std::ostream& out, const std::vector<LemmaReport>& reports);

}  // namespace unreg
