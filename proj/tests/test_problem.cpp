#include <doctest.h>

#include "oracle.hpp"
#include "unreg/problem.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace unreg;
using oracle::Vec;

namespace {

std::vector<ScalarLoss<double>> sampleLosses() {
  return {ScalarLoss<double>::squared(1, 1),   ScalarLoss<double>::squared(-2, 0.5),
          ScalarLoss<double>::squared(0.3, 0.1), ScalarLoss<double>::logistic(1, 1),
          ScalarLoss<double>::logistic(-1, 0.25), ScalarLoss<double>::logistic(2, 0.5)};
}

}  // namespace

TEST_CASE("loss values") {
  CHECK(lossValue(ScalarLoss<double>::squared(1, 1), 1.0) == 0);
  CHECK(lossValue(ScalarLoss<double>::squared(2, 0.5), 0.0) == doctest::Approx(1.0));
  CHECK(lossValue(ScalarLoss<double>::logistic(1, 1), 0.0) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(lossValue(ScalarLoss<double>::squared(1), std::nan("")), DomainError);
  CHECK_THROWS_AS(lossValue(ScalarLoss<double>::logistic(1), std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("logistic value does not overflow") {
  const auto loss = ScalarLoss<double>::logistic(1, 1);
  CHECK(lossValue(loss, -1000.0) == doctest::Approx(1000.0));
  CHECK(lossValue(loss, 1000.0) >= 0);
  CHECK(std::isfinite(lossDerivative(loss, -1000.0)));
}

TEST_CASE("loss derivatives") {
  CHECK(lossDerivative(ScalarLoss<double>::squared(1, 1), 1.0) == 0);
  CHECK(lossDerivative(ScalarLoss<double>::squared(2, 0.5), 0.0) == doctest::Approx(-1.0));
  CHECK(lossDerivative(ScalarLoss<double>::logistic(1, 1), 0.0) == doctest::Approx(-0.5));

  for (const auto& loss : sampleLosses()) {
    for (double z = -10; z <= 10; z += 0.5) {
      const double h = 1e-5;
      const double fd = (lossValue(loss, z + h) - lossValue(loss, z - h)) / (2 * h);
      CHECK(lossDerivative(loss, z) == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
    }
  }
}

TEST_CASE("loss conjugates") {
  CHECK(lossConjugate(ScalarLoss<double>::squared(0, 1), 0.0) == 0);
  CHECK(lossConjugate(ScalarLoss<double>::squared(2, 0.5), 1.0) == doctest::Approx(3.0));
  CHECK(lossConjugate(ScalarLoss<double>::logistic(1, 1), -0.5) == doctest::Approx(-std::log(2.0)));
  // boundary by continuity
  CHECK(lossConjugate(ScalarLoss<double>::logistic(1, 1), 0.0) == 0);
  CHECK(lossConjugate(ScalarLoss<double>::logistic(1, 1), -1.0) == 0);
  CHECK_THROWS_AS(lossConjugate(ScalarLoss<double>::logistic(1, 1), 0.1), DomainError);
  CHECK_THROWS_AS(lossConjugate(ScalarLoss<double>::logistic(1, 1), -1.1), DomainError);
}

TEST_CASE("Fenchel-Young on sampled pairs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> zdist(-8, 8), tdist(0, 1);
  for (const auto& loss : sampleLosses()) {
    for (int k = 0; k < 200; ++k) {
      const double z = zdist(rng);
      double u;
      if (loss.kind == LossKind::squared) {
        u = zdist(rng);
      } else {
        u = -loss.weight * loss.label * tdist(rng);
      }
      CHECK(lossValue(loss, z) + lossConjugate(loss, u) - z * u >= -1e-10);
      const double g = lossDerivative(loss, z);
      CHECK(std::abs(lossValue(loss, z) + lossConjugate(loss, g) - z * g) <= 1e-10);
    }
  }
}

TEST_CASE("loss smoothness certificate") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> zdist(-6, 6);
  CHECK(ScalarLoss<double>::squared(0, 0.5).smoothness() == 0.5);
  CHECK(ScalarLoss<double>::logistic(1, 0.25).smoothness() == doctest::Approx(1.0 / 16));
  for (const auto& loss : sampleLosses()) {
    for (int k = 0; k < 100; ++k) {
      const double x = zdist(rng), y = zdist(rng);
      const double upper = lossValue(loss, x) + lossDerivative(loss, x) * (y - x) +
                           loss.smoothness() / 2 * (y - x) * (y - x);
      CHECK(lossValue(loss, y) <= upper + 1e-12);
    }
  }
}

TEST_CASE("invalid losses are rejected") {
  CHECK_THROWS_AS(ScalarLoss<double>::squared(1, 0), ConfigError);
  CHECK_THROWS_AS(ScalarLoss<double>::squared(1, -1), ConfigError);
  CHECK_THROWS_AS(ScalarLoss<double>::logistic(0, 1), ConfigError);
}

TEST_CASE("1-D proximal step") {
  CHECK(lossProx1d(ScalarLoss<double>::squared(1, 1), 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(std::abs(lossProx1d(ScalarLoss<double>::squared(1, 1), 3.0, 1e12) - 3) <= 1e-9);
  CHECK_THROWS_AS(lossProx1d(ScalarLoss<double>::squared(1, 1), 0.0, 0.0), ConfigError);

  const auto logistic = ScalarLoss<double>::logistic(1, 1);
  const double z = lossProx1d(logistic, 0.0, 1.0);
  auto obj = [&](double t) { return lossValue(logistic, t) + 0.5 * t * t; };
  CHECK(obj(z) <= obj(z + 1e-6));
  CHECK(obj(z) <= obj(z - 1e-6));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> wdist(-20, 20), gdist(-3, 3);
  for (const auto& loss : sampleLosses()) {
    for (int k = 0; k < 50; ++k) {
      const double w = wdist(rng), gamma = std::pow(10.0, gdist(rng));
      const double zs = lossProx1d(loss, w, gamma);
      CHECK(std::abs(lossDerivative(loss, zs) + gamma * (zs - w)) <= 1e-8 * (1 + gamma));
    }
  }
}

TEST_CASE("ERM value and gradient on the 1-D problem") {
  const auto p = oracle::oneDim();
  CHECK(ermValue(p, Vec(Vec::Constant(1, 1.0))) == doctest::Approx(0.0));
  CHECK(ermValue(p, Vec(Vec::Constant(1, 0.0))) == doctest::Approx(2.5));
  CHECK(ermGradient(p, Vec(Vec::Constant(1, 1.0)))[0] == doctest::Approx(0.0));
  CHECK(ermGradient(p, Vec(Vec::Constant(1, 0.0)))[0] == doctest::Approx(-5.0));
  CHECK_THROWS_AS(ermValue(p, Vec(Vec::Zero(2))), std::invalid_argument);
  CHECK_THROWS_AS(ermGradient(p, Vec(Vec::Zero(3))), std::invalid_argument);
}

TEST_CASE("ERM gradient matches finite differences") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + trial % 8, d = 1 + (trial * 3) % 8;
    oracle::Mat A(n, d);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) A(i, j) = normal(rng);
    std::vector<ScalarLoss<double>> losses;
    for (Index i = 0; i < n; ++i) {
      losses.push_back(i % 2 ? ScalarLoss<double>::logistic(i % 4 == 1 ? 1 : -1, 0.5)
                             : ScalarLoss<double>::squared(normal(rng), 1));
    }
    const ErmProblem<double> p(A, losses, 0.1, trial % 3 == 0 ? 0.3 : 0.0);
    Vec x(d);
    for (Index j = 0; j < d; ++j) x[j] = normal(rng);
    const Vec fd = oracle::numericGradient([&](const Vec& v) { return p.value(v); }, x);
    const Vec g = p.gradient(x);
    CHECK((g - fd).norm() <= 1e-5 * (1 + g.norm()));
  }
}

TEST_CASE("regularity constants") {
  oracle::Mat A(1, 2);
  A << 3, 4;
  const ErmProblem<double> single(A, {ScalarLoss<double>::squared(0, 1)}, 1.0);
  const auto reg = estimateRegularity(single);
  CHECK(reg.R == doctest::Approx(5.0));
  CHECK(reg.L == doctest::Approx(1.0));

  const auto p = oracle::oneDim();
  CHECK(p.kappa() == 1);
  CHECK(estimateRegularity(p).kappa == 1);

  oracle::Mat B = oracle::Mat::Ones(4, 1);
  std::vector<ScalarLoss<double>> logistic(4, ScalarLoss<double>::logistic(1, 0.25));
  CHECK(estimateRegularity(B, logistic, 1.0).L == doctest::Approx(1.0 / 16));
  CHECK(conditionNumber(1.0, 2.0, 3.0) == 2);
}

TEST_CASE("ERM construction errors") {
  CHECK_THROWS_AS(ErmProblem<double>(oracle::Mat(0, 2), {}, 1.0), ConfigError);
  oracle::Mat A = oracle::Mat::Ones(2, 1);
  CHECK_THROWS_AS(ErmProblem<double>(A, {ScalarLoss<double>::squared(0)}, 1.0), ConfigError);
  CHECK_THROWS_AS(ErmProblem<double>(A, {ScalarLoss<double>::squared(0), ScalarLoss<double>::squared(1)}, 0.0),
                  ConfigError);
  CHECK_THROWS_AS(ErmProblem<double>(oracle::Mat::Zero(2, 1),
                                     {ScalarLoss<double>::squared(0), ScalarLoss<double>::squared(1)}, 1.0),
                  ConfigError);
  CHECK_THROWS_AS(estimateRegularity(oracle::Mat(0, 1), std::vector<ScalarLoss<double>>{}, 1.0), ConfigError);
}

TEST_CASE("strong convexity certificate on sampled pairs") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  const auto p = oracle::randomLs(6, 3, rng);
  for (int k = 0; k < 50; ++k) {
    Vec x(3), y(3);
    for (int j = 0; j < 3; ++j) {
      x[j] = normal(rng);
      y[j] = normal(rng);
    }
    const double lower = p.value(y) + p.gradient(y).dot(x - y) + p.mu() / 2 * (x - y).squaredNorm();
    CHECK(p.value(x) >= lower - 1e-9 * (1 + std::abs(lower)));
  }
}

TEST_CASE("general ERM gradients") {
  using G = GeneralErmProblem<double>;
  std::vector<G::Component> parts;
  for (int i = 0; i < 3; ++i) {
    const double shift = i - 1.0;
    parts.push_back({[shift](const Vec& x) { return std::log(std::cosh(x[0] - shift)) + 0.5 * x.squaredNorm(); },
                     [shift](const Vec& x) {
                       Vec g = x;
                       g[0] += std::tanh(x[0] - shift);
                       return g;
                     }});
  }
  const G f(2, parts, 3.0, 2.0);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 10; ++k) {
    Vec x(2);
    x << normal(rng), normal(rng);
    for (Index i = 0; i < f.size(); ++i) {
      const auto& c = f.component(i);
      const Vec fd = oracle::numericGradient(c.value, x);
      CHECK((c.gradient(x) - fd).norm() <= 1e-5 * (1 + fd.norm()));
    }
  }
  CHECK_THROWS_AS(G(2, {}, 1.0, 1.0), ConfigError);
}
