#pragma once

#include <gradflow/checkpoint.hpp>
#include <gradflow/data.hpp>
#include <gradflow/dynamics.hpp>
#include <gradflow/mlp.hpp>
#include <gradflow/ode.hpp>
#include <gradflow/parallel.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace gradflow {

/// Energies whose parameters can be trained: batched evaluation plus
/// parameter gradients and the mixed input/parameter second derivative.
template <class E>
concept TrainableEnergy =
    requires(const E& e, const Mat& X, const Mat& V, const Vec& c) {
      typename E::ParamGrad;
      { e.dim() } -> std::convertible_to<int>;
      { e.energyBatch(X) } -> std::convertible_to<Vec>;
      { e.gradBatch(X) } -> std::convertible_to<Mat>;
      { e.paramGrad(X, c) } -> std::convertible_to<typename E::ParamGrad>;
      { e.zeroGrad() } -> std::convertible_to<typename E::ParamGrad>;
      { e.mixedSecondGrad(X, V, c).hvp } -> std::convertible_to<Mat>;
      {
        e.mixedSecondGrad(X, V, c).mixed
      } -> std::convertible_to<typename E::ParamGrad>;
    };

namespace detail {

/// Parameter gradient of (coeff_each * sum_b E(x_b)), accumulated over the
/// fixed column blocks in block order; identical at any thread count.
template <TrainableEnergy E>
typename E::ParamGrad paramGradBlocked(const E& e, const Mat& X,
                                       double coeff_each, int threads) {
  const Index nb = numBlocks(X.cols());
  std::vector<typename E::ParamGrad> parts(static_cast<size_t>(nb));
  parallelForBlocks(X.cols(), threads, [&](Index b, Index lo, Index hi) {
    parts[static_cast<size_t>(b)] = e.paramGrad(
        X.middleCols(lo, hi - lo), Vec::Constant(hi - lo, coeff_each));
  });
  typename E::ParamGrad total = e.zeroGrad();
  for (auto& p : parts) total.add(p);
  return total;
}

}  // namespace detail

/// Contrastive gradient: mean over data of dE/dtheta minus mean over
/// negatives of dE/dtheta.
template <TrainableEnergy E>
typename E::ParamGrad ebmGrad(const E& e, const Mat& data,
                              const Mat& negatives, int threads = 1) {
  if (data.cols() == 0 || negatives.cols() == 0)
    throw UsageError("ebmGrad: empty batch");
  auto g = detail::paramGradBlocked(e, data,
                                    1.0 / static_cast<double>(data.cols()),
                                    threads);
  g.add(detail::paramGradBlocked(
      e, negatives, -1.0 / static_cast<double>(negatives.cols()), threads));
  return g;
}

template <TrainableEnergy E>
struct GeneratorGradResult {
  typename E::ParamGrad grad;
  Mat endpoints;        // generated samples G(x0), columns
  long chains_run = 0;  // trajectories evaluated (one per latent)
};

namespace detail {

template <class E, class S>
auto mixedSecondGradWith(const E& e, const Mat& X, const Mat& V,
                         const Vec& coeff, S& scratch) {
  if constexpr (requires { e.mixedSecondGrad(X, V, coeff, &scratch); })
    return e.mixedSecondGrad(X, V, coeff, &scratch);
  else
    return e.mixedSecondGrad(X, V, coeff);
}

// Backward recursion through one block of recorded trajectories. The outer
// energy acts as a frozen critic: its direct parameter dependence carries no
// gradient, only the path through the (eta/2) grad E steps does.
template <TrainableEnergy E, class S>
typename E::ParamGrad unrollBackward(const E& e, const std::vector<Mat>& traj,
                                     double step_coeff, double inv_batch,
                                     S& scratch) {
  const Mat& endpoints = traj.back();
  const Index bw = endpoints.cols();
  typename E::ParamGrad total = e.zeroGrad();
  if (traj.size() < 2) return total;
  // stop-gradient critic
  Mat lambda = inv_batch * gradBatchWith(e, endpoints, scratch);
  const Vec coeff = Vec::Constant(bw, -step_coeff);
  for (auto k = static_cast<long>(traj.size()) - 2; k >= 0; --k) {
    auto r = mixedSecondGradWith(e, traj[static_cast<size_t>(k)], lambda,
                                 coeff, scratch);
    total.add(r.mixed);
    lambda -= step_coeff * r.hvp;
  }
  return total;
}

template <TrainableEnergy E>
GeneratorGradResult<E> generatorGradBlock(const E& e, const Mat& X0,
                                          const ChainConfig& cfg,
                                          double inv_batch) {
  const double c = 0.5 * cfg.step_size;
  ScratchOfT<E> scratch;
  std::vector<Mat> traj;
  traj.reserve(static_cast<size_t>(cfg.num_steps) + 1);
  traj.push_back(X0);
  for (int k = 0; k < cfg.num_steps; ++k) {
    Mat next = traj.back() - c * gradBatchWith(e, traj.back(), scratch);
    if (!next.allFinite()) throw DivergedChainError(k);
    traj.push_back(std::move(next));
  }
  return GeneratorGradResult<E>{
      unrollBackward(e, traj, c, inv_batch, scratch), traj.back(), X0.cols()};
}

}  // namespace detail

/// Gradient of mean_b E_sg(G(x0_b)) w.r.t. the parameters inside the
/// noise-free Euler unroll G, by a vector-Jacobian recursion over the
/// recorded trajectory.
template <TrainableEnergy E>
GeneratorGradResult<E> generatorGrad(const E& e, const Mat& X0,
                                     const ChainConfig& cfg,
                                     int threads = 1) {
  if (cfg.noise_scale != 0.0)
    throw UsageError("generatorGrad requires noise_scale = 0");
  const Index B = X0.cols();
  const double inv_batch = B > 0 ? 1.0 / static_cast<double>(B) : 0.0;
  const Index nb = numBlocks(B);
  std::vector<GeneratorGradResult<E>> parts(static_cast<size_t>(nb));
  parallelForBlocks(B, threads, [&](Index b, Index lo, Index hi) {
    parts[static_cast<size_t>(b)] = detail::generatorGradBlock(
        e, Mat(X0.middleCols(lo, hi - lo)), cfg, inv_batch);
  });
  GeneratorGradResult<E> out{e.zeroGrad(), Mat(X0.rows(), B), 0};
  Index col = 0;
  for (auto& p : parts) {
    out.grad.add(p.grad);
    out.endpoints.middleCols(col, p.endpoints.cols()) = p.endpoints;
    col += p.endpoints.cols();
    out.chains_run += p.chains_run;
  }
  return out;
}

template <TrainableEnergy E>
struct CombinedGradResult {
  typename E::ParamGrad grad;
  Mat negatives;
  long chains_run = 0;
};

/// Single-batch combined objective: one Euler chain per latent, whose
/// endpoints serve both as contrastive negatives (held constant) and as the
/// generator-loss samples (differentiated through the unroll).
template <TrainableEnergy E>
CombinedGradResult<E> combinedGrad(const E& e, const Mat& data, const Mat& X0,
                                   const ChainConfig& cfg, int threads = 1) {
  if (data.cols() == 0 || X0.cols() == 0)
    throw UsageError("combinedGrad: empty batch");
  auto gen = generatorGrad(e, X0, cfg, threads);
  auto g = ebmGrad(e, data, gen.endpoints, threads);
  g.add(gen.grad);
  return CombinedGradResult<E>{std::move(g), std::move(gen.endpoints),
                               gen.chains_run};
}

struct FlowMleResult {
  MlpGrad grad;
  double mean_nll = 0.0;
};

/// Gradient of the mean negative log-likelihood under the flow (prior +
/// trace integral), by backprop through a fixed-step RK4 discretization of
/// the reverse-time augmented system.
FlowMleResult flowMleGrad(const Mlp& net, const Mat& data, double T,
                          int rk4_steps, int threads = 1);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  MlpGrad m;
  MlpGrad v;
  long step = 0;

  static AdamState zeroLike(const Mlp& net) {
    return AdamState{MlpGrad::zeroLike(net), MlpGrad::zeroLike(net), 0};
  }
};

/// Standard bias-corrected Adam update.
void adamStep(Mlp& net, const MlpGrad& grad, AdamState& state,
              const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Training loop

enum class LossVariant { ebm_contrastive, self_adversarial, flow_mle };
enum class DynamicsVariant { langevin, euler, ode };

std::string lossName(LossVariant v);
LossVariant lossFromName(const std::string& name);
std::string dynamicsName(DynamicsVariant v);
DynamicsVariant dynamicsFromName(const std::string& name);

struct TrainConfig {
  LossVariant loss = LossVariant::ebm_contrastive;
  DynamicsVariant dynamics = DynamicsVariant::euler;
  double learning_rate = 1e-3;
  Index batch_size = 800;
  long num_iterations = 3000;
  ChainConfig chain;         // euler/langevin dynamics and the unroll
  double noise_scale = 0.1;  // applied when dynamics == langevin
  SolverConfig solver;
  double time_horizon = 0.2;  // T for the ode dynamics and likelihood
  int rk4_steps = 8;          // flow_mle discretization
  DataSpec data;
  std::uint64_t seed = 0;
  MlpConfig arch;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct TraceRow {
  long iteration = 0;
  double loss = 0.0;       // mean E(data) - mean E(negatives)
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Mlp model;
  CheckpointMeta meta;
  std::vector<TraceRow> trace;
};

using ProgressFn = std::function<void(const TraceRow&)>;

/// Runs the configured objective. Per iteration: draw a data batch and
/// Gaussian latents, generate negatives with the configured dynamics,
/// compute the gradient, Adam step. Throws TrainDivergenceError with the
/// iteration index if the parameters or the loss stop being finite.
TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {});

/// Lockstep batched chain over the fixed column blocks. Noise, when
/// present, is drawn stream-per-chain (stream id = column index), so the
/// result matches chain-by-chain execution and any thread count.
template <BatchedEnergy E>
Mat runChainBatch(const E& e, Mat X, const ChainConfig& cfg,
                  std::uint64_t noise_seed, int threads = 1) {
  const Index d = X.rows();
  const Index B = X.cols();
  std::vector<Mat> noise;
  if (cfg.noise_scale > 0.0) {
    noise.assign(static_cast<size_t>(cfg.num_steps), Mat(d, B));
    for (Index col = 0; col < B; ++col) {
      RngStream rng(noise_seed, static_cast<std::uint64_t>(col));
      for (int k = 0; k < cfg.num_steps; ++k)
        for (Index i = 0; i < d; ++i)
          noise[static_cast<size_t>(k)](i, col) = rng.normal();
    }
  }
  const double c = 0.5 * cfg.step_size;
  const double ns = cfg.noise_scale * std::sqrt(cfg.step_size);
  std::vector<detail::ScratchOfT<E>> scratches(
      static_cast<size_t>(numBlocks(B)));
  for (int k = 0; k < cfg.num_steps; ++k) {
    parallelForBlocks(B, threads, [&](Index blk, Index lo, Index hi) {
      auto cols = X.middleCols(lo, hi - lo);
      cols -= c * detail::gradBatchWith(e, Mat(cols), scratches[size_t(blk)]);
      if (cfg.noise_scale > 0.0)
        cols += ns * noise[static_cast<size_t>(k)].middleCols(lo, hi - lo);
    });
    if (!X.allFinite()) throw DivergedChainError(k);
  }
  return X;
}

/// Pushes latents through the chosen dynamics; the generator behind both
/// training negatives and the sample command.
template <BatchedEnergy E>
Mat sampleDynamics(const E& e, DynamicsVariant dynamics, const Mat& latents,
                   const ChainConfig& chain, double time_horizon,
                   const SolverConfig& solver, std::uint64_t noise_seed,
                   int threads = 1) {
  switch (dynamics) {
    case DynamicsVariant::euler: {
      ChainConfig cfg = chain;
      cfg.noise_scale = 0.0;
      return runChainBatch(e, latents, cfg, noise_seed, threads);
    }
    case DynamicsVariant::langevin:
      return runChainBatch(e, latents, chain, noise_seed, threads);
    case DynamicsVariant::ode:
      return solveForwardBatch(e, latents, time_horizon, solver, threads);
  }
  throw UsageError("unknown dynamics variant");
}

/// CSV trace: iteration,loss,grad_norm,wall_ms. The wall_ms column is
/// written as 0 so that reruns are byte-identical; measured timings go to
/// the run manifest instead.
void writeLossCsv(const std::vector<TraceRow>& trace,
                  const std::filesystem::path& path);

}  // namespace gradflow
