#pragma once

#include <gradflow/types.hpp>

#include <concepts>
#include <type_traits>

namespace gradflow {

/// Anything the samplers, solvers and evaluators can drive: a scalar energy
/// with exact first- and second-order input derivatives.
template <class E>
concept EnergyModel = requires(const E& e, const Vec& x, const Vec& v) {
  { e.dim() } -> std::convertible_to<int>;
  { e.energy(x) } -> std::convertible_to<double>;
  { e.grad(x) } -> std::convertible_to<Vec>;
  { e.hessianTrace(x) } -> std::convertible_to<double>;
  { e.hessianVec(x, v) } -> std::convertible_to<Vec>;
};

namespace detail {

inline void checkDim(Index got, int want, const char* what) {
  if (got != want)
    throw UsageError(std::string(what) + ": expected dimension " +
                     std::to_string(want) + ", got " + std::to_string(got));
}

// Energies may expose a Scratch type for buffer reuse across evaluations;
// loops instantiate one and thread it through when the energy accepts it.
template <class E, class = void>
struct ScratchOf {
  struct type {};
};
template <class E>
struct ScratchOf<E, std::void_t<typename E::Scratch>> {
  using type = typename E::Scratch;
};
template <class E>
using ScratchOfT = typename ScratchOf<E>::type;

template <class E, class S>
Mat gradBatchWith(const E& e, const Mat& X, S& scratch) {
  if constexpr (requires { e.gradBatch(X, &scratch); })
    return e.gradBatch(X, &scratch);
  else
    return e.gradBatch(X);
}

}  // namespace detail

/// E(x) = scale * ||x||^2 / 2. Closed-form derivatives make this the
/// reference energy for solver and normalizer tests.
class QuadraticEnergy {
 public:
  explicit QuadraticEnergy(double scale, int dim = 2)
      : scale_(scale), dim_(dim) {}

  int dim() const { return dim_; }
  double scale() const { return scale_; }

  double energy(const Vec& x) const {
    detail::checkDim(x.size(), dim_, "QuadraticEnergy::energy");
    return 0.5 * scale_ * x.squaredNorm();
  }
  Vec grad(const Vec& x) const {
    detail::checkDim(x.size(), dim_, "QuadraticEnergy::grad");
    return scale_ * x;
  }
  double hessianTrace(const Vec& x) const {
    detail::checkDim(x.size(), dim_, "QuadraticEnergy::hessianTrace");
    return scale_ * static_cast<double>(dim_);
  }
  Vec hessianVec(const Vec& x, const Vec& v) const {
    detail::checkDim(x.size(), dim_, "QuadraticEnergy::hessianVec");
    detail::checkDim(v.size(), dim_, "QuadraticEnergy::hessianVec(v)");
    return scale_ * v;
  }

  Mat gradBatch(const Mat& X) const { return scale_ * X; }
  Vec energyBatch(const Mat& X) const {
    return 0.5 * scale_ * X.colwise().squaredNorm().transpose();
  }

 private:
  double scale_;
  int dim_;
};

/// E(x) = w . x + b; zero curvature everywhere.
class LinearEnergy {
 public:
  explicit LinearEnergy(Vec w, double b = 0.0) : w_(std::move(w)), b_(b) {}

  int dim() const { return static_cast<int>(w_.size()); }
  const Vec& w() const { return w_; }

  double energy(const Vec& x) const {
    detail::checkDim(x.size(), dim(), "LinearEnergy::energy");
    return w_.dot(x) + b_;
  }
  Vec grad(const Vec& x) const {
    detail::checkDim(x.size(), dim(), "LinearEnergy::grad");
    return w_;
  }
  double hessianTrace(const Vec& x) const {
    detail::checkDim(x.size(), dim(), "LinearEnergy::hessianTrace");
    return 0.0;
  }
  Vec hessianVec(const Vec& x, const Vec& /*v*/) const {
    detail::checkDim(x.size(), dim(), "LinearEnergy::hessianVec");
    return Vec::Zero(dim());
  }

  Mat gradBatch(const Mat& X) const {
    return w_.replicate(1, X.cols());
  }
  Vec energyBatch(const Mat& X) const {
    return (w_.transpose() * X).transpose().array() + b_;
  }

 private:
  Vec w_;
  double b_;
};

}  // namespace gradflow
