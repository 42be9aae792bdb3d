#pragma once

#include <gradflow/energy.hpp>
#include <gradflow/parallel.hpp>
#include <gradflow/types.hpp>

#include <cmath>
#include <functional>

namespace gradflow {

/// Adaptive solver settings. Defaults: tolerance 1e-5, conventional
/// step controller (order-5 exponent, safety 0.9, growth clamp [0.2, 5]).
struct SolverConfig {
  double rel_tol = 1e-5;
  double abs_tol = 1e-5;
  double initial_step = 1e-2;
  long max_steps = 100000;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 5.0;
};

/// Position plus accumulated integral of tr[Hessian of E] along the path.
struct AugmentedState {
  Vec x;
  double delta_logp = 0.0;
  double t = 0.0;
};

namespace detail {

// Dormand-Prince 5(4) tableau (FSAL: stage 7 is the next step's stage 1).
inline constexpr double kA21 = 1.0 / 5;
inline constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
inline constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
inline constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187,
                        kA53 = 64448.0 / 6561, kA54 = -212.0 / 729;
inline constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33,
                        kA63 = 46732.0 / 5247, kA64 = 49.0 / 176,
                        kA65 = -5103.0 / 18656;
inline constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113,
                        kB4 = 125.0 / 192, kB5 = -2187.0 / 6784,
                        kB6 = 11.0 / 84;
// b5 - b4 (embedded 4th-order weights), for the local error estimate.
inline constexpr double kE1 = kB1 - 5179.0 / 57600;
inline constexpr double kE3 = kB3 - 7571.0 / 16695;
inline constexpr double kE4 = kB4 - 393.0 / 640;
inline constexpr double kE5 = kB5 + 92097.0 / 339200;
inline constexpr double kE6 = kB6 - 187.0 / 2100;
inline constexpr double kE7 = -1.0 / 40;

inline void validate(const SolverConfig& cfg) {
  if (cfg.rel_tol <= 0 || cfg.abs_tol <= 0)
    throw UsageError("solver tolerances must be positive");
  if (cfg.initial_step <= 0 || cfg.max_steps < 1)
    throw UsageError("solver step settings must be positive");
}

/// Generic adaptive integrator over [0, T]. `field` fills dy/dt in place;
/// `onAccept`, when given, can inspect the accepted state and throw.
template <class Field>
Vec dopri5(Field&& field, Vec y, double T, const SolverConfig& cfg,
           const std::function<void(const Vec&)>& onAccept = nullptr) {
  validate(cfg);
  if (T < 0) throw UsageError("integration time must be non-negative");
  if (T == 0) return y;

  const Index n = y.size();
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n),
      err(n);
  field(y, k1);

  double t = 0.0;
  double h = std::min(cfg.initial_step, T);
  long steps = 0;
  const double h_floor = 1e-14 * std::max(1.0, T);

  while (t < T) {
    if (++steps > cfg.max_steps) throw StiffnessError();
    h = std::min(h, T - t);
    if (h <= h_floor) throw StiffnessError();

    ytmp = y + h * (kA21 * k1);
    field(ytmp, k2);
    ytmp = y + h * (kA31 * k1 + kA32 * k2);
    field(ytmp, k3);
    ytmp = y + h * (kA41 * k1 + kA42 * k2 + kA43 * k3);
    field(ytmp, k4);
    ytmp = y + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4);
    field(ytmp, k5);
    ytmp = y + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5);
    field(ytmp, k6);
    ynew = y + h * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
    field(ynew, k7);

    err = h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 +
               kE7 * k7);

    if (!ynew.allFinite() || !err.allFinite()) {
      h *= cfg.min_factor;
      if (h <= h_floor)
        throw DivergenceError("integration state became non-finite");
      continue;
    }

    // Componentwise acceptance: |err_i| <= abs_tol + rel_tol * |state_i|.
    double ratio = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double scale =
          cfg.abs_tol +
          cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      ratio = std::max(ratio, std::abs(err[i]) / scale);
    }

    double factor = cfg.max_factor;
    if (ratio > 0.0)
      factor = std::clamp(cfg.safety * std::pow(ratio, -0.2), cfg.min_factor,
                          cfg.max_factor);

    if (ratio <= 1.0) {
      t += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      if (onAccept) onAccept(y);
    }
    h *= factor;
  }
  return y;
}

// Fills the augmented field (position derivative, trace of the Hessian).
// sign = -1 integrates the gradient flow forward, +1 reverses it.
template <EnergyModel E, class S>
void augmentedField(const E& e, const Vec& y, double sign, Vec& dy,
                    S& scratch) {
  const Index d = y.size() - 1;
  if constexpr (requires(const Mat& M) { e.gradAndTrace(M, &scratch); }) {
    const auto gt = e.gradAndTrace(Mat(y.head(d)), &scratch);
    dy.head(d) = sign * gt.grad.col(0);
    dy[d] = gt.trace[0];
  } else if constexpr (requires(const Mat& M) { e.gradAndTrace(M); }) {
    const auto gt = e.gradAndTrace(Mat(y.head(d)));
    dy.head(d) = sign * gt.grad.col(0);
    dy[d] = gt.trace[0];
  } else {
    dy.head(d) = sign * e.grad(y.head(d));
    dy[d] = e.hessianTrace(y.head(d));
  }
}

}  // namespace detail

/// Right-hand side of the gradient-flow generator: x'(t) = -grad E(x).
template <EnergyModel E>
Vec vectorField(const E& e, const Vec& x) {
  return -e.grad(x);
}

/// x(T) of the gradient flow started at x0.
template <EnergyModel E>
Vec solveForward(const E& e, const Vec& x0, double T,
                 const SolverConfig& cfg = {}) {
  detail::checkDim(x0.size(), e.dim(), "solveForward");
  auto field = [&e](const Vec& y, Vec& dy) { dy = -e.grad(y); };
  return detail::dopri5(field, x0, T, cfg);
}

/// Gradient flow with the log-density change integrated alongside, one
/// error controller over all d+1 components.
template <EnergyModel E>
AugmentedState solveForwardWithLogDensity(const E& e, const Vec& x0, double T,
                                          const SolverConfig& cfg = {}) {
  detail::checkDim(x0.size(), e.dim(), "solveForwardWithLogDensity");
  const Index d = x0.size();
  Vec y0(d + 1);
  y0.head(d) = x0;
  y0[d] = 0.0;
  detail::ScratchOfT<E> scratch;
  auto field = [&](const Vec& y, Vec& dy) {
    detail::augmentedField(e, y, -1.0, dy, scratch);
  };
  const Vec yT = detail::dopri5(field, y0, T, cfg);
  return AugmentedState{yT.head(d), yT[d], T};
}

/// Integrates the time-reversed field x' = +grad E from x for time T,
/// accumulating the same trace integral, so that
/// log p(x) = log p0(result.x) + result.delta_logp.
template <EnergyModel E>
AugmentedState solveReverse(const E& e, const Vec& x, double T,
                            const SolverConfig& cfg = {}) {
  detail::checkDim(x.size(), e.dim(), "solveReverse");
  const Index d = x.size();
  Vec y0(d + 1);
  y0.head(d) = x;
  y0[d] = 0.0;
  detail::ScratchOfT<E> scratch;
  auto field = [&](const Vec& y, Vec& dy) {
    detail::augmentedField(e, y, +1.0, dy, scratch);
  };
  auto escapeCheck = [d](const Vec& y) {
    if (y.head(d).norm() > 1e6)
      throw DivergenceError("reverse trajectory escaped ||x|| > 1e6");
  };
  const Vec yT = detail::dopri5(field, y0, T, cfg, escapeCheck);
  return AugmentedState{yT.head(d), yT[d], T};
}

inline double logStdNormal(const Vec& x) {
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI) -
         0.5 * x.squaredNorm();
}

/// Log-likelihood of x under the flow with standard Gaussian prior.
template <EnergyModel E>
double logLikelihood(const E& e, const Vec& x, double T,
                     const SolverConfig& cfg = {}) {
  const AugmentedState rev = solveReverse(e, x, T, cfg);
  return logStdNormal(rev.x) + rev.delta_logp;
}

/// Concept for energies exposing batched gradients (columns are samples).
template <class E>
concept BatchedEnergy = requires(const E& e, const Mat& X) {
  { e.gradBatch(X) } -> std::convertible_to<Mat>;
  { e.energyBatch(X) } -> std::convertible_to<Vec>;
};

/// Integrates a whole batch of initial points under one adaptive controller
/// (the batch is the ODE state). Used by training and sampling, where only
/// the endpoints matter; field evaluation is parallelized over the fixed
/// column blocks, so results are identical at any thread count.
template <BatchedEnergy E>
Mat solveForwardBatch(const E& e, const Mat& X0, double T,
                      const SolverConfig& cfg = {}, int threads = 1) {
  const Index d = X0.rows();
  const Index B = X0.cols();
  if (B == 0) return X0;
  Vec y0(d * B);
  Eigen::Map<Mat>(y0.data(), d, B) = X0;
  std::vector<detail::ScratchOfT<E>> scratches(
      static_cast<size_t>(numBlocks(B)));
  auto field = [&](const Vec& y, Vec& dy) {
    Eigen::Map<const Mat> X(y.data(), d, B);
    Eigen::Map<Mat> D(dy.data(), d, B);
    parallelForBlocks(B, threads, [&](Index blk, Index lo, Index hi) {
      D.middleCols(lo, hi - lo) = -detail::gradBatchWith(
          e, Mat(X.middleCols(lo, hi - lo)), scratches[size_t(blk)]);
    });
  };
  const Vec yT = detail::dopri5(field, y0, T, cfg);
  return Eigen::Map<const Mat>(yT.data(), d, B);
}

}  // namespace gradflow
