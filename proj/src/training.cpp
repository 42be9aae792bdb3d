#include <gradflow/training.hpp>

#include <gradflow/rng.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace gradflow {

namespace {

constexpr std::uint64_t kTagData = 0xDA7A;
constexpr std::uint64_t kTagLatent = 0x1A7E;
constexpr std::uint64_t kTagChain = 0xC4A1;

}  // namespace

// ---------------------------------------------------------------------------
// Flow maximum-likelihood gradient

namespace {

struct FlowBlockResult {
  MlpGrad grad;
  double nll_sum = 0.0;
};

// Reverse-time RK4 over one column block, recording the stage inputs, then
// the adjoint sweep. The position field needs H*v and the mixed parameter
// gradient per stage (adjoint-dependent, computed in the sweep); the
// log-density component's adjoints are the fixed RK4 weights, so every
// trace derivative is computed in one stacked pass over all stage points.
FlowBlockResult flowMleBlock(const Mlp& net, const Mat& X, double T, int steps,
                             double inv_batch) {
  const Index d = X.rows();
  const Index bw = X.cols();
  const double h = T / steps;
  const double w_outer = h / 6.0;
  const double w_inner = h / 3.0;
  const double stage_w[4] = {w_outer, w_inner, w_inner, w_outer};

  // Forward sweep: positions only; stage points are stacked column-wise
  // (step-major, 4 stages each) for the later trace pass.
  MlpScratch scratch;
  Mat all_stages(d, static_cast<Index>(steps) * 4 * bw);
  auto stageCols = [&](int s, int j) {
    return all_stages.middleCols((static_cast<Index>(s) * 4 + j) * bw, bw);
  };
  Mat Y = X;
  for (int s = 0; s < steps; ++s) {
    stageCols(s, 0) = Y;
    const Mat k1 = net.gradBatch(stageCols(s, 0), &scratch);
    stageCols(s, 1) = Y + (0.5 * h) * k1;
    const Mat k2 = net.gradBatch(stageCols(s, 1), &scratch);
    stageCols(s, 2) = Y + (0.5 * h) * k2;
    const Mat k3 = net.gradBatch(stageCols(s, 2), &scratch);
    stageCols(s, 3) = Y + h * k3;
    const Mat k4 = net.gradBatch(stageCols(s, 3), &scratch);
    Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!Y.allFinite())
      throw DivergenceError("flow likelihood: reverse RK4 diverged");
  }

  // One trace pass over every stage point. Column coefficients are the
  // log-density adjoint (-1/batch) times that stage's quadrature weight,
  // so trace_grad_x comes back ready to add into the position adjoints.
  Vec tau(all_stages.cols());
  for (int s = 0; s < steps; ++s)
    for (int j = 0; j < 4; ++j)
      tau.segment((static_cast<Index>(s) * 4 + j) * bw, bw)
          .setConstant(-stage_w[j] * inv_batch);
  MlpScratch stacked_scratch;
  const TraceGradResult traces =
      net.hessianTraceGrads(all_stages, tau, &stacked_scratch);

  FlowBlockResult out;
  out.grad = net.zeroGrad();
  out.grad.add(traces.trace_grad_params);

  Vec ell = Vec::Zero(bw);
  for (int s = 0; s < steps; ++s)
    for (int j = 0; j < 4; ++j)
      ell += stage_w[j] *
             traces.trace.segment((static_cast<Index>(s) * 4 + j) * bw, bw);
  for (Index b = 0; b < bw; ++b)
    out.nll_sum += -logStdNormal(Y.col(b)) - ell[b];

  // d(NLL)/d(y_final) = y_final / batch; walk the steps backwards.
  Mat ybar = inv_batch * Y;
  const Vec ones = Vec::Ones(bw);
  Mat mu1(d, bw), mu2(d, bw), mu3(d, bw), mu4(d, bw), kbar(d, bw);
  auto stageVjp = [&](int s, int j, const Mat& kb, Mat& mu) {
    const auto r = net.mixedSecondGrad(stageCols(s, j), kb, ones, &scratch);
    out.grad.add(r.mixed);
    mu = r.hvp +
         traces.trace_grad_x.middleCols((static_cast<Index>(s) * 4 + j) * bw,
                                        bw);
  };
  for (int s = steps - 1; s >= 0; --s) {
    kbar = w_outer * ybar;
    stageVjp(s, 3, kbar, mu4);
    kbar = w_inner * ybar + h * mu4;
    stageVjp(s, 2, kbar, mu3);
    kbar = w_inner * ybar + (0.5 * h) * mu3;
    stageVjp(s, 1, kbar, mu2);
    kbar = w_outer * ybar + (0.5 * h) * mu2;
    stageVjp(s, 0, kbar, mu1);
    ybar += mu1 + mu2 + mu3 + mu4;
  }
  return out;
}

}  // namespace

FlowMleResult flowMleGrad(const Mlp& net, const Mat& data, double T,
                          int rk4_steps, int threads) {
  if (data.cols() == 0) throw UsageError("flowMleGrad: empty batch");
  if (rk4_steps < 1) throw UsageError("flowMleGrad: rk4_steps must be >= 1");
  const Index B = data.cols();
  const double inv_batch = 1.0 / static_cast<double>(B);
  const Index nb = numBlocks(B);
  std::vector<FlowBlockResult> parts(static_cast<size_t>(nb));
  parallelForBlocks(B, threads, [&](Index b, Index lo, Index hi) {
    parts[static_cast<size_t>(b)] = flowMleBlock(
        net, Mat(data.middleCols(lo, hi - lo)), T, rk4_steps, inv_batch);
  });
  FlowMleResult out{net.zeroGrad(), 0.0};
  for (auto& p : parts) {
    out.grad.add(p.grad);
    out.mean_nll += p.nll_sum;
  }
  out.mean_nll *= inv_batch;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void adamStep(Mlp& net, const MlpGrad& grad, AdamState& state,
              const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int l = 0; l < net.numLayers(); ++l) {
    auto update = [&](auto& m, auto& v, const auto& g, auto& p) {
      m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * g.array();
      v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
      p.array() -= cfg.lr * (m.array() / bc1) /
                   ((v.array() / bc2).sqrt() + cfg.eps);
    };
    update(state.m.weights[l], state.v.weights[l], grad.weights[l],
           net.weight(l));
    update(state.m.biases[l], state.v.biases[l], grad.biases[l], net.bias(l));
  }
}

// ---------------------------------------------------------------------------
// Names and validation

std::string lossName(LossVariant v) {
  switch (v) {
    case LossVariant::ebm_contrastive: return "ebm_contrastive";
    case LossVariant::self_adversarial: return "self_adversarial";
    case LossVariant::flow_mle: return "flow_mle";
  }
  return "?";
}

LossVariant lossFromName(const std::string& name) {
  if (name == "ebm_contrastive") return LossVariant::ebm_contrastive;
  if (name == "self_adversarial") return LossVariant::self_adversarial;
  if (name == "flow_mle") return LossVariant::flow_mle;
  throw UsageError("unknown loss '" + name + "'");
}

std::string dynamicsName(DynamicsVariant v) {
  switch (v) {
    case DynamicsVariant::langevin: return "langevin";
    case DynamicsVariant::euler: return "euler";
    case DynamicsVariant::ode: return "ode";
  }
  return "?";
}

DynamicsVariant dynamicsFromName(const std::string& name) {
  if (name == "langevin") return DynamicsVariant::langevin;
  if (name == "euler") return DynamicsVariant::euler;
  if (name == "ode") return DynamicsVariant::ode;
  throw UsageError("unknown dynamics '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch_size must be positive");
  if (num_iterations < 0) throw UsageError("num_iterations must be >= 0");
  if (learning_rate <= 0) throw UsageError("learning_rate must be positive");
  if (chain.step_size <= 0 || chain.num_steps < 0)
    throw UsageError("chain config must have positive step size");
  if (time_horizon < 0) throw UsageError("time_horizon must be >= 0");
  if (rk4_steps < 1) throw UsageError("rk4_steps must be >= 1");
  if (loss == LossVariant::self_adversarial &&
      dynamics != DynamicsVariant::euler)
    throw UsageError("self_adversarial requires euler dynamics");
  if (dynamics == DynamicsVariant::langevin && noise_scale <= 0)
    throw UsageError("langevin dynamics needs noise_scale > 0");
}

// ---------------------------------------------------------------------------
// The loop

TrainResult train(const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const int threads = resolveThreads(cfg.threads);

  Mlp net = Mlp::randomInit(cfg.arch, cfg.seed);
  AdamState adam = AdamState::zeroLike(net);
  const AdamConfig adam_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8};

  ChainConfig chain = cfg.chain;
  chain.noise_scale =
      (cfg.dynamics == DynamicsVariant::langevin) ? cfg.noise_scale : 0.0;

  std::vector<TraceRow> trace;
  trace.reserve(static_cast<size_t>(cfg.num_iterations));

  for (long iter = 0; iter < cfg.num_iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    const Mat data =
        sampleData(cfg.data, cfg.batch_size, deriveSeed(cfg.seed, kTagData,
                                                        iter)).points;
    const Mat latents =
        samplePrior(cfg.batch_size, cfg.arch.input_dim,
                    deriveSeed(cfg.seed, kTagLatent, iter)).points;
    const std::uint64_t chain_seed = deriveSeed(cfg.seed, kTagChain, iter);

    Mat negatives;
    MlpGrad grad;
    double loss = 0.0;
    double gnorm = 0.0;
    try {
      switch (cfg.loss) {
        case LossVariant::ebm_contrastive: {
          negatives = sampleDynamics(net, cfg.dynamics, latents, chain,
                                     cfg.time_horizon, cfg.solver, chain_seed,
                                     threads);
          grad = ebmGrad(net, data, negatives, threads);
          break;
        }
        case LossVariant::self_adversarial: {
          auto r = combinedGrad(net, data, latents, chain, threads);
          negatives = std::move(r.negatives);
          grad = std::move(r.grad);
          break;
        }
        case LossVariant::flow_mle: {
          auto r = flowMleGrad(net, data, cfg.time_horizon, cfg.rk4_steps,
                               threads);
          grad = std::move(r.grad);
          negatives = sampleDynamics(net, cfg.dynamics, latents, chain,
                                     cfg.time_horizon, cfg.solver, chain_seed,
                                     threads);
          break;
        }
      }
      loss = net.energyBatch(data).mean() - net.energyBatch(negatives).mean();
    } catch (const TrainDivergenceError&) {
      throw;
    } catch (const NumericalError& e) {
      throw TrainDivergenceError(iter, e.what());
    }

    gnorm = grad.norm();
    adamStep(net, grad, adam, adam_cfg);
    if (!std::isfinite(loss) || !std::isfinite(gnorm) || !net.allFinite())
      throw TrainDivergenceError(iter);

    const double wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0).count();
    trace.push_back(TraceRow{iter, loss, gnorm, wall_ms});
    if (progress) progress(trace.back());
  }

  CheckpointMeta meta;
  meta.arch = cfg.arch;
  meta.seed = cfg.seed;
  meta.iterations = cfg.num_iterations;
  meta.noise_scale = chain.noise_scale;
  if (cfg.dynamics == DynamicsVariant::ode) {
    // Matched horizons: store a chain whose K*eta/2 equals T.
    meta.time_horizon = cfg.time_horizon;
    meta.chain_steps = cfg.chain.num_steps;
    meta.eta = meta.chain_steps > 0
                   ? 2.0 * cfg.time_horizon / meta.chain_steps
                   : cfg.chain.step_size;
  } else {
    meta.eta = cfg.chain.step_size;
    meta.chain_steps = cfg.chain.num_steps;
    meta.time_horizon = 0.5 * cfg.chain.step_size * cfg.chain.num_steps;
  }
  return TrainResult{std::move(net), meta, std::move(trace)};
}

void writeLossCsv(const std::vector<TraceRow>& trace,
                  const std::filesystem::path& path) {
  std::string body = "iteration,loss,grad_norm,wall_ms\n";
  char buf[96];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,0\n", row.iteration,
                  row.loss, row.grad_norm);
    body += buf;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gradflow
