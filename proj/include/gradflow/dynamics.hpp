#pragma once

#include <gradflow/energy.hpp>
#include <gradflow/rng.hpp>
#include <gradflow/types.hpp>

#include <cmath>

namespace gradflow {

/// Discrete sampling chain settings. noise_scale multiplies the sqrt(eta)
/// diffusion term: 1 is exact Langevin, 0 is the noise-free Euler chain.
struct ChainConfig {
  double step_size = 0.1;  // eta
  int num_steps = 40;      // K
  double noise_scale = 0.0;
};

/// One update x - (eta/2) grad E(x) + noise_scale * sqrt(eta) * omega.
/// omega is caller-supplied standard normal noise.
template <EnergyModel E>
Vec langevinStep(const E& e, const Vec& x, const ChainConfig& cfg,
                 const Vec& omega, int step_index = 0) {
  Vec next = x - 0.5 * cfg.step_size * e.grad(x);
  if (cfg.noise_scale != 0.0)
    next += cfg.noise_scale * std::sqrt(cfg.step_size) * omega;
  if (!next.allFinite()) throw DivergedChainError(step_index);
  return next;
}

/// K sequential steps. Noise is drawn from the provided stream only when
/// noise_scale > 0, so the noise-free chain is literally the composition of
/// zero-noise steps.
template <EnergyModel E>
Vec runChain(const E& e, Vec x, const ChainConfig& cfg, RngStream& rng) {
  const Vec zero = Vec::Zero(x.size());
  for (int k = 0; k < cfg.num_steps; ++k) {
    if (cfg.noise_scale > 0.0)
      x = langevinStep(e, x, cfg, rng.normalVec(x.size()), k);
    else
      x = langevinStep(e, x, cfg, zero, k);
  }
  return x;
}

/// Inverts the noise-free chain by Banach fixed-point iteration per step,
/// walking the K steps in reverse. Requires the step map to be a
/// contraction, i.e. lip((eta/2) grad E) < 1 along the trajectory.
template <EnergyModel E>
Vec invertEulerChain(const E& e, const Vec& y, const ChainConfig& cfg,
                     double tol = 1e-8, int max_fixed_point_iters = 100) {
  if (cfg.noise_scale != 0.0)
    throw UsageError("invertEulerChain requires noise_scale = 0");
  const double c = 0.5 * cfg.step_size;
  Vec cur = y;
  for (int k = cfg.num_steps - 1; k >= 0; --k) {
    Vec x = cur;
    bool converged = false;
    for (int it = 0; it < max_fixed_point_iters; ++it) {
      Vec next = cur + c * e.grad(x);
      const double delta = (next - x).norm();
      x = std::move(next);
      if (!x.allFinite()) throw InvertibilityError(k);
      if (delta <= tol) {
        converged = true;
        break;
      }
    }
    if (!converged) throw InvertibilityError(k);
    cur = std::move(x);
  }
  return cur;
}

/// Max over the batch of the spectral norm of the Jacobian of
/// (eta/2) grad E, each estimated by power iteration on exact
/// Hessian-vector products.
template <EnergyModel E>
double lipschitzEstimate(const E& e, const Mat& points, double eta,
                         int power_iters = 50) {
  if (points.cols() == 0) throw UsageError("lipschitzEstimate: empty batch");
  const double c = 0.5 * eta;
  double worst = 0.0;
  for (Index j = 0; j < points.cols(); ++j) {
    const Vec x = points.col(j);
    RngStream rng(0x11957C0DEULL, static_cast<std::uint64_t>(j));
    Vec v = rng.normalVec(x.size());
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < power_iters; ++it) {
      Vec hv = e.hessianVec(x, v);
      const double n = hv.norm();
      if (n < 1e-300) {
        sigma = 0.0;
        break;
      }
      sigma = c * n;
      v = hv / n;
    }
    worst = std::max(worst, sigma);
  }
  return worst;
}

}  // namespace gradflow
