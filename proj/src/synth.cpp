#include "unreg/synth.hpp"
#include "unreg/experiment.hpp"
#include "unreg/least_squares.hpp"

#include <Eigen/QR>

#include <cmath>
#include <random>

namespace unreg {

void SynthSpec::validate() const {
  if (n < 1 || d < 1) throw ConfigError("synth: n and d must be >= 1");
  if (n < d) throw ConfigError("synth: need n >= d for a strongly convex instance");
  if (!(kappa >= 2)) throw ConfigError("synth: kappa must be >= 2");
  if (!(noise >= 0)) throw ConfigError("synth: noise must be >= 0");
  if (!(labelFlip >= 0 && labelFlip < 0.5)) throw ConfigError("synth: labelFlip must lie in [0, 0.5)");
}

namespace {

Eigen::MatrixXd gaussianMatrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) M(i, j) = normal(rng);
  }
  return M;
}

Eigen::MatrixXd orthonormalColumns(Index rows, Index cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussianMatrix(rows, cols, rng));
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

/// max_i sum_j U_ij^2 s_j^2 with s_j = ratio^{j/(d-1)}, s_0 = 1.
double worstRowRatio(const Eigen::MatrixXd& U2, double ratio) {
  const Index d = U2.cols();
  Eigen::VectorXd s2(d);
  for (Index j = 0; j < d; ++j) s2[j] = d == 1 ? 1.0 : std::pow(ratio, 2.0 * double(j) / double(d - 1));
  return (U2 * s2).maxCoeff();
}

}  // namespace

SynthResult synthesize(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Index n = spec.n;
  const Index d = spec.d;
  const Eigen::MatrixXd U = orthonormalColumns(n, d, rng);
  const Eigen::MatrixXd V = orthonormalColumns(d, d, rng);
  const Eigen::MatrixXd U2 = U.array().square().matrix();

  // kappa = ceil(max row ratio); aim half a unit below the target
  const double goal = spec.kappa - 0.5;
  double lo = 1, hi = 2;
  if (worstRowRatio(U2, lo) > goal) throw ConfigError("synth: kappa too small for this shape");
  if (d == 1) throw ConfigError("synth: d = 1 has no spectrum to shape");
  while (worstRowRatio(U2, hi) < goal) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    (worstRowRatio(U2, mid) < goal ? lo : hi) = mid;
  }
  const double ratio = std::sqrt(lo * hi);
  Eigen::VectorXd s(d);
  for (Index j = 0; j < d; ++j) s[j] = std::pow(ratio, double(j) / double(d - 1));

  RowMatrix<double> A = U * s.asDiagonal() * V.transpose();
  const double meanNorm = A.rowwise().norm().mean();
  A *= std::sqrt(double(d)) / meanNorm;

  std::normal_distribution<double> normal(0.0, 1.0);
  Vector<double> truth(d);
  for (Index j = 0; j < d; ++j) truth[j] = normal(rng) / std::sqrt(double(d));
  const Vector<double> signal = A * truth;
  Vector<double> labels(n);
  if (spec.kind == LossKind::squared) {
    const double scale = spec.noise * std::sqrt(signal.squaredNorm() / double(n));
    for (Index i = 0; i < n; ++i) labels[i] = signal[i] + scale * normal(rng);
  } else {
    std::bernoulli_distribution flip(spec.labelFlip);
    for (Index i = 0; i < n; ++i) {
      const double b = signal[i] > 0 ? 1.0 : -1.0;
      labels[i] = flip(rng) ? -b : b;
    }
  }

  SynthResult out;
  out.data = Dataset::allTrain(std::move(A), std::move(labels));
  if (spec.kind == LossKind::squared) {
    // any positive mu builds the problem; the exact one comes from the spectrum
    const auto probe = buildProblem(out.data, LossKind::squared, 1.0);
    out.mu = LeastSquaresSolver<double>(probe).curvatureRange().first;
    const auto p = buildProblem(out.data, LossKind::squared, out.mu);
    out.kappa = p.kappa();
    out.fStar = leastSquaresOptimum(p).value;
  } else {
    const auto probe = buildProblem(out.data, LossKind::logistic, 1.0);
    const auto opt = logisticOptimum(probe);
    out.mu = curvatureAt(probe, opt.x);
    out.kappa = buildProblem(out.data, LossKind::logistic, out.mu).kappa();
    out.fStar = opt.value;
  }
  return out;
}

}  // namespace unreg
