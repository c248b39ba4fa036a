#pragma once

#include "unreg/loss.hpp"
#include "unreg/types.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace unreg {

/// A mu-strongly convex objective with value and gradient.
template <typename P>
concept SmoothObjective = requires(const P& p, const Vector<typename P::Scalar>& x) {
  typename P::Scalar;
  { p.dim() } -> std::convertible_to<Index>;
  { p.mu() } -> std::convertible_to<typename P::Scalar>;
  { p.value(x) } -> std::convertible_to<typename P::Scalar>;
  { p.gradient(x) } -> std::convertible_to<Vector<typename P::Scalar>>;
};

/// Sum of n components psi_i plus an explicit (gamma/2)||x||^2 term.
template <typename P>
concept FiniteSumObjective =
    SmoothObjective<P> &&
    requires(const P& p, Index i, const Vector<typename P::Scalar>& x, typename P::Scalar s,
             Vector<typename P::Scalar>& out) {
      { p.size() } -> std::convertible_to<Index>;
      { p.componentSmoothness() } -> std::convertible_to<typename P::Scalar>;
      { p.explicitStrongConvexity() } -> std::convertible_to<typename P::Scalar>;
      p.addComponentGradient(i, x, s, out);
    };

/// Finite sums whose components are phi_i(a_i^T x); enables scalar caching.
template <typename P>
concept LinearModelObjective = FiniteSumObjective<P> && requires(const P& p, Index i) {
  { p.data() };
  { p.loss(i) } -> std::convertible_to<ScalarLoss<typename P::Scalar>>;
};

template <typename Scalar>
struct Regularity {
  Scalar L;
  Scalar R;
  std::int64_t kappa;
};

/// ceil(L R^2 / m), at least 1.
template <typename Scalar>
std::int64_t conditionNumber(Scalar L, Scalar R, Scalar m) {
  const Scalar k = std::ceil(L * R * R / m);
  return k < 1 ? 1 : static_cast<std::int64_t>(k);
}

/// F(x) = sum_i phi_i(a_i^T x) + (gamma/2)||x||^2, with user-supplied strong
/// convexity mu of F. Immutable after construction.
template <typename Scalar_>
class ErmProblem {
 public:
  using Scalar = Scalar_;
  using VectorType = Vector<Scalar>;
  using MatrixType = RowMatrix<Scalar>;

  ErmProblem(MatrixType data, std::vector<ScalarLoss<Scalar>> losses, Scalar mu,
             Scalar explicitStrongConvexity = 0)
      : data_(std::move(data)), losses_(std::move(losses)), mu_(mu),
        gamma_(explicitStrongConvexity) {
    if (data_.rows() == 0 || data_.cols() == 0) throw ConfigError("ErmProblem: empty dataset");
    if (static_cast<Index>(losses_.size()) != data_.rows()) {
      throw ConfigError("ErmProblem: need one loss per data row");
    }
    if (!(mu_ > 0) || !std::isfinite(mu_)) throw ConfigError("ErmProblem: mu must be positive");
    if (gamma_ < 0) throw ConfigError("ErmProblem: explicit strong convexity must be >= 0");
    if (!data_.allFinite()) throw ConfigError("ErmProblem: data contains non-finite entries");
    for (auto& loss : losses_) loss = ScalarLoss<Scalar>::validated(loss);

    rowSquaredNorms_ = data_.rowwise().squaredNorm();
    R_ = std::sqrt(rowSquaredNorms_.maxCoeff());
    L_ = 0;
    componentSmoothness_ = 0;
    for (Index i = 0; i < size(); ++i) {
      L_ = std::max(L_, losses_[i].smoothness());
      componentSmoothness_ =
          std::max(componentSmoothness_, losses_[i].smoothness() * rowSquaredNorms_[i]);
    }
    if (!(R_ > 0)) throw ConfigError("ErmProblem: all data rows are zero");
    kappa_ = conditionNumber(L_, R_, mu_);
  }

  Index size() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }
  const MatrixType& data() const { return data_; }
  const ScalarLoss<Scalar>& loss(Index i) const { return losses_[i]; }
  const std::vector<ScalarLoss<Scalar>>& losses() const { return losses_; }
  const VectorType& rowSquaredNorms() const { return rowSquaredNorms_; }

  Scalar mu() const { return mu_; }
  Scalar explicitStrongConvexity() const { return gamma_; }
  Scalar smoothness() const { return L_; }
  Scalar radius() const { return R_; }
  std::int64_t kappa() const { return kappa_; }
  /// max_i L_i ||a_i||^2: smoothness of the worst component phi_i(a_i^T x).
  Scalar componentSmoothness() const { return componentSmoothness_; }

  Scalar value(const VectorType& x) const {
    requireSameDim(dim(), x.size(), "ErmProblem::value");
    const VectorType margins = data_ * x;
    Scalar total = 0;
    for (Index i = 0; i < size(); ++i) total += lossValue(losses_[i], margins[i]);
    return total + gamma_ / 2 * x.squaredNorm();
  }

  /// Per-example derivatives phi_i'(a_i^T x).
  VectorType marginDerivatives(const VectorType& x) const {
    const VectorType margins = data_ * x;
    VectorType out(size());
    for (Index i = 0; i < size(); ++i) out[i] = lossDerivative(losses_[i], margins[i]);
    return out;
  }

  VectorType gradient(const VectorType& x) const {
    requireSameDim(dim(), x.size(), "ErmProblem::gradient");
    VectorType g = data_.transpose() * marginDerivatives(x);
    g += gamma_ * x;
    return g;
  }

  /// out += scale * grad psi_i(x), psi_i = phi_i(a_i^T x).
  void addComponentGradient(Index i, const VectorType& x, Scalar scale, VectorType& out) const {
    const Scalar z = data_.row(i).dot(x);
    out += (scale * lossDerivative(losses_[i], z)) * data_.row(i).transpose();
  }

 private:
  MatrixType data_;
  std::vector<ScalarLoss<Scalar>> losses_;
  Scalar mu_;
  Scalar gamma_;
  VectorType rowSquaredNorms_;
  Scalar L_ = 0;
  Scalar R_ = 0;
  Scalar componentSmoothness_ = 0;
  std::int64_t kappa_ = 1;
};

template <typename Scalar>
Scalar ermValue(const ErmProblem<Scalar>& p, const Vector<Scalar>& x) {
  return p.value(x);
}

template <typename Scalar>
Vector<Scalar> ermGradient(const ErmProblem<Scalar>& p, const Vector<Scalar>& x) {
  return p.gradient(x);
}

/// L, R and kappa recomputed from the data; mu is never estimated here.
template <typename Scalar>
Regularity<Scalar> estimateRegularity(const RowMatrix<Scalar>& data,
                                      const std::vector<ScalarLoss<Scalar>>& losses, Scalar mu) {
  if (data.rows() == 0) throw ConfigError("estimateRegularity: empty dataset");
  Scalar L = 0;
  for (const auto& loss : losses) L = std::max(L, loss.smoothness());
  const Scalar R = std::sqrt(data.rowwise().squaredNorm().maxCoeff());
  return {L, R, conditionNumber(L, R, mu)};
}

template <typename Scalar>
Regularity<Scalar> estimateRegularity(const ErmProblem<Scalar>& p) {
  return estimateRegularity(p.data(), p.losses(), p.mu());
}

/// min_x sum_i psi_i(x) for black-box smooth convex psi_i.
template <typename Scalar_>
class GeneralErmProblem {
 public:
  using Scalar = Scalar_;
  using VectorType = Vector<Scalar>;

  struct Component {
    std::function<Scalar(const VectorType&)> value;
    std::function<VectorType(const VectorType&)> gradient;
  };

  /// componentSmoothness bounds the smoothness of every psi_i.
  GeneralErmProblem(Index dim, std::vector<Component> components, Scalar mu,
                    Scalar componentSmoothness)
      : dim_(dim), components_(std::move(components)), mu_(mu),
        componentSmoothness_(componentSmoothness) {
    if (components_.empty()) throw ConfigError("GeneralErmProblem: no components");
    if (!(mu_ > 0)) throw ConfigError("GeneralErmProblem: mu must be positive");
    if (!(componentSmoothness_ > 0)) throw ConfigError("GeneralErmProblem: smoothness must be positive");
  }

  Index size() const { return static_cast<Index>(components_.size()); }
  Index dim() const { return dim_; }
  Scalar mu() const { return mu_; }
  Scalar explicitStrongConvexity() const { return 0; }
  Scalar componentSmoothness() const { return componentSmoothness_; }
  const Component& component(Index i) const { return components_[i]; }

  Scalar value(const VectorType& x) const {
    requireSameDim(dim_, x.size(), "GeneralErmProblem::value");
    Scalar total = 0;
    for (const auto& c : components_) total += c.value(x);
    return total;
  }

  VectorType gradient(const VectorType& x) const {
    requireSameDim(dim_, x.size(), "GeneralErmProblem::gradient");
    VectorType g = VectorType::Zero(dim_);
    for (const auto& c : components_) g += c.gradient(x);
    return g;
  }

  void addComponentGradient(Index i, const VectorType& x, Scalar scale, VectorType& out) const {
    out += scale * components_[i].gradient(x);
  }

 private:
  Index dim_;
  std::vector<Component> components_;
  Scalar mu_;
  Scalar componentSmoothness_;
};

}  // namespace unreg
