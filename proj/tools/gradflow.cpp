// Command-line front end: train, sample, density, loglik, diagnose.
//
// Configuration comes from a JSON file of flat dotted keys (--config),
// overridable by flags; flags win. Every run writes its outputs plus a
// manifest.json (config echo, seed, build id, file hashes) into a per-run
// directory under $GRADFLOW_OUT (default ./runs).
//
// Exit codes: 0 ok, 1 invalid configuration, 2 numerical divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <gradflow/checkpoint.hpp>
#include <gradflow/data.hpp>
#include <gradflow/dynamics.hpp>
#include <gradflow/eval.hpp>
#include <gradflow/image.hpp>
#include <gradflow/manifest.hpp>
#include <gradflow/ode.hpp>
#include <gradflow/training.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace gf = gradflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagSampleNoise = 0x5A3F;
constexpr std::uint64_t kTagTestSplit = 0x7E57;

struct ConfigBind {
  std::string key;
  std::string flag;
  std::function<void(const json&)> apply;
};

/// Applies config-file values to options the user did not pass as flags.
class ConfigMerger {
 public:
  template <class T>
  void add(const std::string& key, const std::string& flag, T* target) {
    binds_.push_back(ConfigBind{
        key, flag, [target](const json& v) { *target = v.get<T>(); }});
  }

  void applyFile(CLI::App* cmd, const fs::path& path) const {
    std::ifstream in(path);
    if (!in) throw gf::UsageError("cannot open config file " + path.string());
    json cfg;
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      throw gf::UsageError("config file is not valid JSON: " +
                           std::string(e.what()));
    }
    if (!cfg.is_object())
      throw gf::UsageError("config file must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      const auto it =
          std::find_if(binds_.begin(), binds_.end(),
                       [&](const ConfigBind& b) { return b.key == key; });
      if (it == binds_.end())
        throw gf::UsageError("unknown config key '" + key + "'");
      if (cmd->get_option(it->flag)->count() == 0) {
        try {
          it->apply(value);
        } catch (const json::exception&) {
          throw gf::UsageError("config key '" + key + "' has the wrong type");
        }
      }
    }
  }

 private:
  std::vector<ConfigBind> binds_;
};

fs::path outputRoot() {
  if (const char* env = std::getenv("GRADFLOW_OUT")) return fs::path(env);
  return fs::path("runs");
}

fs::path resolveRunDir(const std::string& out_flag,
                       const std::string& default_name) {
  fs::path dir =
      out_flag.empty() ? outputRoot() / default_name : fs::path(out_flag);
  fs::create_directories(dir);
  return dir;
}

void writeTextFile(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw gf::IoError("cannot open " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

gf::GridBounds parseBounds(const std::string& s) {
  gf::GridBounds b;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &b.xmin, &b.xmax, &b.ymin,
                  &b.ymax) != 4)
    throw gf::UsageError("--bounds expects xmin,xmax,ymin,ymax");
  return b;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string config_file, out_dir;
  std::string dataset = "grid";
  std::string loss = "ebm_contrastive";
  std::string dynamics = "euler";
  std::uint64_t seed = 0;
  double lr = 1e-3;
  long batch = 800;
  long iterations = 3000;
  double noise_scale = 0.1;
  double chain_eta = 0.1;
  int chain_steps = 40;
  double ode_T = 0.2;
  double ode_rtol = 1e-5;
  double ode_atol = 1e-5;
  int rk4_steps = 8;
  int arch_hidden = 256;
  int arch_layers = 5;
  double mix_spacing = 4.0;
  double mix_std = 0.17;
  double swiss_jitter = 0.05;
  int threads = 0;
};

json trainEcho(const TrainOpts& o) {
  return json{{"dataset", o.dataset},
              {"loss", o.loss},
              {"dynamics", o.dynamics},
              {"seed", o.seed},
              {"lr", o.lr},
              {"batch", o.batch},
              {"iterations", o.iterations},
              {"noise_scale", o.noise_scale},
              {"chain.eta", o.chain_eta},
              {"chain.steps", o.chain_steps},
              {"ode.T", o.ode_T},
              {"ode.rtol", o.ode_rtol},
              {"ode.atol", o.ode_atol},
              {"ode.rk4_steps", o.rk4_steps},
              {"arch.hidden", o.arch_hidden},
              {"arch.layers", o.arch_layers},
              {"mix.spacing", o.mix_spacing},
              {"mix.std", o.mix_std},
              {"swiss.jitter", o.swiss_jitter},
              {"threads", o.threads}};
}

int runTrain(const TrainOpts& o) {
  gf::TrainConfig cfg;
  cfg.loss = gf::lossFromName(o.loss);
  cfg.dynamics = gf::dynamicsFromName(o.dynamics);
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.num_iterations = o.iterations;
  cfg.chain.step_size = o.chain_eta;
  cfg.chain.num_steps = o.chain_steps;
  cfg.noise_scale = o.noise_scale;
  cfg.solver.rel_tol = o.ode_rtol;
  cfg.solver.abs_tol = o.ode_atol;
  cfg.time_horizon = o.ode_T;
  cfg.rk4_steps = o.rk4_steps;
  cfg.data.id = gf::datasetFromName(o.dataset);
  cfg.data.mixture.spacing = o.mix_spacing;
  cfg.data.mixture.std_dev = o.mix_std;
  cfg.data.swiss_jitter = o.swiss_jitter;
  cfg.seed = o.seed;
  cfg.arch.hidden_dim = o.arch_hidden;
  cfg.arch.num_layers = o.arch_layers;
  cfg.threads = o.threads;
  cfg.validate();

  const fs::path dir = resolveRunDir(
      o.out_dir, "train-" + o.dataset + "-" + o.loss + "-seed" +
                     std::to_string(o.seed));
  const json echo = trainEcho(o);
  gf::RunManifest manifest("train", echo.dump(), o.seed);
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<gf::TraceRow> rows;
  rows.reserve(static_cast<size_t>(cfg.num_iterations));
  auto progress = [&](const gf::TraceRow& row) {
    rows.push_back(row);
    if (row.iteration % 100 == 0 || row.iteration + 1 == cfg.num_iterations)
      std::fprintf(stderr, "iter %6ld  loss % .5f  |grad| %.5f\n",
                   row.iteration, row.loss, row.grad_norm);
  };

  auto finishOutputs = [&](const std::string& status,
                           const std::string& detail) {
    gf::writeLossCsv(rows, dir / "loss.csv");
    writeTextFile(dir / "config.json", echo.dump(2) + "\n");
    manifest.addOutput(dir / "loss.csv");
    manifest.addOutput(dir / "config.json");
    manifest.setStatus(status, detail);
    manifest.setTiming(std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0).count());
  };

  try {
    gf::TrainResult result = train(cfg, progress);
    saveCheckpoint(dir / "checkpoint.bin", result.model, result.meta);
    finishOutputs("ok", "");
    manifest.addOutput(dir / "checkpoint.bin");
    manifest.writeAtomic(dir);
  } catch (const gf::TrainDivergenceError& e) {
    finishOutputs("diverged", "iteration " + std::to_string(e.iteration));
    manifest.writeAtomic(dir);
    throw;
  }
  std::printf("trained %s -> %s\n", o.loss.c_str(), dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// sample

struct SampleOpts {
  std::string config_file, out_dir, checkpoint;
  std::string dynamics = "euler";
  long n = 2000;
  std::uint64_t seed = 0;
  int threads = 0;
};

int runSample(const SampleOpts& o) {
  const gf::Checkpoint ck = gf::loadCheckpoint(o.checkpoint);
  const json echo{{"checkpoint", o.checkpoint}, {"dynamics", o.dynamics},
                  {"n", o.n},                   {"seed", o.seed},
                  {"threads", o.threads}};
  const fs::path dir =
      resolveRunDir(o.out_dir, "sample-seed" + std::to_string(o.seed));
  gf::RunManifest manifest("sample", echo.dump(), o.seed);
  const auto t0 = std::chrono::steady_clock::now();

  const auto dyn = gf::dynamicsFromName(o.dynamics);
  gf::ChainConfig chain;
  chain.step_size = ck.meta.eta;
  chain.num_steps = ck.meta.chain_steps;
  chain.noise_scale = 0.0;
  if (dyn == gf::DynamicsVariant::langevin)
    chain.noise_scale =
        ck.meta.noise_scale > 0.0 ? ck.meta.noise_scale : 0.1;

  gf::PointBatch latents =
      gf::samplePrior(o.n, ck.meta.arch.input_dim, o.seed);
  const int threads = gf::resolveThreads(o.threads);
  gf::Mat samples = withEnergy(ck, [&](const auto& e) {
    return gf::sampleDynamics(e, dyn, latents.points, chain,
                              ck.meta.time_horizon, gf::SolverConfig{},
                              gf::deriveSeed(o.seed, kTagSampleNoise),
                              threads);
  });

  gf::PointBatch out{std::move(samples), ck.meta.kind == gf::EnergyKind::mlp
                                             ? "model"
                                             : "analytic",
                     o.seed};
  gf::writePointsCsv(out, dir / "samples.csv");
  gf::writePointsBinary(out, dir / "samples.bin");
  gf::renderScatter(out.points, dir / "samples.png");
  manifest.addOutput(dir / "samples.csv");
  manifest.addOutput(dir / "samples.bin");
  manifest.addOutput(dir / "samples.png");
  manifest.setTiming(std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0).count());
  manifest.writeAtomic(dir);
  std::printf("wrote %ld samples -> %s\n", o.n, dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// density

struct DensityOpts {
  std::string config_file, out_dir, checkpoint;
  std::string mode = "all";
  std::string bounds = "-6,6,-6,6";
  long resolution = 600;
  long flow_resolution = 200;
  int threads = 0;
};

int runDensity(const DensityOpts& o) {
  const gf::Checkpoint ck = gf::loadCheckpoint(o.checkpoint);
  const json echo{{"checkpoint", o.checkpoint},
                  {"mode", o.mode},
                  {"bounds", o.bounds},
                  {"resolution", o.resolution},
                  {"flow_resolution", o.flow_resolution},
                  {"threads", o.threads}};
  const fs::path dir = resolveRunDir(o.out_dir, "density");
  gf::RunManifest manifest("density", echo.dump(), 0);
  const auto t0 = std::chrono::steady_clock::now();

  const gf::GridBounds bounds = parseBounds(o.bounds);
  std::vector<gf::GridMode> modes;
  if (o.mode == "all")
    modes = {gf::GridMode::neg_energy, gf::GridMode::ebm_normalized,
             gf::GridMode::flow};
  else
    modes = {gf::gridModeFromName(o.mode)};

  const int threads = gf::resolveThreads(o.threads);
  for (const gf::GridMode mode : modes) {
    const long res =
        mode == gf::GridMode::flow ? o.flow_resolution : o.resolution;
    const gf::DensityGrid grid = withEnergy(ck, [&](const auto& e) {
      return gf::densityGrid(e, mode, bounds, res, res, ck.meta.time_horizon,
                             gf::SolverConfig{}, threads);
    });
    const std::string stem = "density_" + gf::gridModeName(mode);
    gf::writeGridCsv(grid, dir / (stem + ".csv"));
    gf::writeGridMetaJson(grid, dir / (stem + ".json"));
    gf::renderHeatmap(grid, dir / (stem + ".png"), false);
    gf::renderHeatmap(grid, dir / (stem + "_linear.png"), true);
    manifest.addOutput(dir / (stem + ".csv"));
    manifest.addOutput(dir / (stem + ".json"));
    manifest.addOutput(dir / (stem + ".png"));
    manifest.addOutput(dir / (stem + "_linear.png"));
    if (grid.quality_warning)
      std::fprintf(stderr, "warning: >10%% of %s cells failed and were floored\n",
                   gf::gridModeName(mode).c_str());
  }
  manifest.setTiming(std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0).count());
  manifest.writeAtomic(dir);
  std::printf("density grids -> %s\n", dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// loglik

struct LoglikOpts {
  std::string config_file, out_dir, checkpoint;
  std::string dataset = "grid";
  long n_test = 10000;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double mix_spacing = 4.0;
  double mix_std = 0.17;
  int threads = 0;
};

int runLoglik(const LoglikOpts& o) {
  const gf::Checkpoint ck = gf::loadCheckpoint(o.checkpoint);
  // Disjoint test split by default: a fresh stream derived from the
  // checkpoint's training seed.
  const std::uint64_t seed =
      o.seed_given ? o.seed : gf::deriveSeed(ck.meta.seed, kTagTestSplit);
  const json echo{{"checkpoint", o.checkpoint}, {"dataset", o.dataset},
                  {"n_test", o.n_test},         {"seed", seed},
                  {"mix.spacing", o.mix_spacing}, {"mix.std", o.mix_std},
                  {"threads", o.threads}};
  const fs::path dir =
      resolveRunDir(o.out_dir, "loglik-seed" + std::to_string(seed));
  gf::RunManifest manifest("loglik", echo.dump(), seed);
  const auto t0 = std::chrono::steady_clock::now();

  gf::DataSpec spec;
  spec.id = gf::datasetFromName(o.dataset);
  spec.mixture.spacing = o.mix_spacing;
  spec.mixture.std_dev = o.mix_std;
  const gf::PointBatch test = gf::sampleData(spec, o.n_test, seed);

  const int threads = gf::resolveThreads(o.threads);
  const gf::TestLogLik res = withEnergy(ck, [&](const auto& e) {
    return gf::testLogLikelihood(e, test.points, ck.meta.time_horizon,
                                 gf::SolverConfig{}, threads);
  });

  const json report{{"mean_loglik", res.mean_loglik},
                    {"n_ok", res.n_ok},
                    {"n_failed", res.n_failed},
                    {"failure_fraction",
                     static_cast<double>(res.n_failed) /
                         static_cast<double>(o.n_test)},
                    {"dataset", o.dataset},
                    {"n_test", o.n_test},
                    {"seed", seed},
                    {"time_horizon", ck.meta.time_horizon}};
  writeTextFile(dir / "loglik.json", report.dump(2) + "\n");
  manifest.addOutput(dir / "loglik.json");
  manifest.setTiming(std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0).count());
  manifest.writeAtomic(dir);
  std::printf("%.6f\n", res.mean_loglik);
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseOpts {
  std::string config_file, out_dir, checkpoint;
  long n_points = 64;
  long resolution = 100;
  std::string bounds = "-6,6,-6,6";
  std::uint64_t seed = 0;
  int threads = 0;
};

int runDiagnose(const DiagnoseOpts& o) {
  const gf::Checkpoint ck = gf::loadCheckpoint(o.checkpoint);
  const json echo{{"checkpoint", o.checkpoint},
                  {"n_points", o.n_points},
                  {"resolution", o.resolution},
                  {"bounds", o.bounds},
                  {"seed", o.seed},
                  {"threads", o.threads}};
  const fs::path dir = resolveRunDir(o.out_dir, "diagnose");
  gf::RunManifest manifest("diagnose", echo.dump(), o.seed);
  const auto t0 = std::chrono::steady_clock::now();

  const gf::Mat points =
      gf::samplePrior(o.n_points, ck.meta.arch.input_dim, o.seed).points;
  const int threads = gf::resolveThreads(o.threads);
  const gf::GridBounds bounds = parseBounds(o.bounds);

  const json report = withEnergy(ck, [&](const auto& e) {
    const double lip = gf::lipschitzEstimate(e, points, ck.meta.eta);

    double roundtrip = 0.0;
    const Eigen::Index n_rt = std::min<Eigen::Index>(points.cols(), 16);
    for (Eigen::Index i = 0; i < n_rt; ++i) {
      const gf::Vec xT =
          gf::solveForward(e, points.col(i), ck.meta.time_horizon);
      const gf::AugmentedState back =
          gf::solveReverse(e, xT, ck.meta.time_horizon);
      roundtrip =
          std::max(roundtrip, (back.x - gf::Vec(points.col(i))).norm());
    }

    const gf::DensityGrid flow = gf::densityGrid(
        e, gf::GridMode::flow, bounds, o.resolution, o.resolution,
        ck.meta.time_horizon, gf::SolverConfig{}, threads);

    return json{{"lipschitz_estimate", lip},
                {"eta", ck.meta.eta},
                {"roundtrip_max_error", roundtrip},
                {"roundtrip_points", n_rt},
                {"flow_mass", flow.totalMass()},
                {"floored_cells", static_cast<long>(flow.floored.count())},
                {"resolution", o.resolution},
                {"time_horizon", ck.meta.time_horizon}};
  });

  writeTextFile(dir / "diagnostics.json", report.dump(2) + "\n");
  manifest.addOutput(dir / "diagnostics.json");
  manifest.setTiming(std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0).count());
  manifest.writeAtomic(dir);
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-flow energy model toolkit"};
  app.require_subcommand(1);

  TrainOpts t;
  ConfigMerger tm;
  auto* train_cmd = app.add_subcommand("train", "train an energy model");
  train_cmd->add_option("--config", t.config_file, "JSON config file");
  train_cmd->add_option("--out", t.out_dir, "run directory");
  train_cmd->add_option("--dataset", t.dataset, "grid|swiss");
  train_cmd->add_option("--loss", t.loss,
                        "ebm_contrastive|self_adversarial|flow_mle");
  train_cmd->add_option("--dynamics", t.dynamics, "langevin|euler|ode");
  train_cmd->add_option("--seed", t.seed, "run seed");
  train_cmd->add_option("--lr", t.lr, "learning rate");
  train_cmd->add_option("--batch", t.batch, "batch size");
  train_cmd->add_option("--iterations", t.iterations, "training iterations");
  train_cmd->add_option("--noise-scale", t.noise_scale,
                        "langevin noise scale");
  train_cmd->add_option("--chain-eta", t.chain_eta, "chain step size");
  train_cmd->add_option("--chain-steps", t.chain_steps, "chain steps K");
  train_cmd->add_option("--ode-T", t.ode_T, "integration time T");
  train_cmd->add_option("--ode-rtol", t.ode_rtol, "solver rel tolerance");
  train_cmd->add_option("--ode-atol", t.ode_atol, "solver abs tolerance");
  train_cmd->add_option("--ode-rk4-steps", t.rk4_steps,
                        "flow_mle RK4 step count");
  train_cmd->add_option("--arch-hidden", t.arch_hidden, "hidden width");
  train_cmd->add_option("--arch-layers", t.arch_layers, "affine layer count");
  train_cmd->add_option("--mix-spacing", t.mix_spacing, "grid mode spacing");
  train_cmd->add_option("--mix-std", t.mix_std, "grid mode std");
  train_cmd->add_option("--swiss-jitter", t.swiss_jitter, "swiss roll jitter");
  train_cmd->add_option("--threads", t.threads, "worker cap (0 = auto)");
  tm.add("dataset", "--dataset", &t.dataset);
  tm.add("loss", "--loss", &t.loss);
  tm.add("dynamics", "--dynamics", &t.dynamics);
  tm.add("seed", "--seed", &t.seed);
  tm.add("lr", "--lr", &t.lr);
  tm.add("batch", "--batch", &t.batch);
  tm.add("iterations", "--iterations", &t.iterations);
  tm.add("noise_scale", "--noise-scale", &t.noise_scale);
  tm.add("chain.eta", "--chain-eta", &t.chain_eta);
  tm.add("chain.steps", "--chain-steps", &t.chain_steps);
  tm.add("ode.T", "--ode-T", &t.ode_T);
  tm.add("ode.rtol", "--ode-rtol", &t.ode_rtol);
  tm.add("ode.atol", "--ode-atol", &t.ode_atol);
  tm.add("ode.rk4_steps", "--ode-rk4-steps", &t.rk4_steps);
  tm.add("arch.hidden", "--arch-hidden", &t.arch_hidden);
  tm.add("arch.layers", "--arch-layers", &t.arch_layers);
  tm.add("mix.spacing", "--mix-spacing", &t.mix_spacing);
  tm.add("mix.std", "--mix-std", &t.mix_std);
  tm.add("swiss.jitter", "--swiss-jitter", &t.swiss_jitter);
  tm.add("threads", "--threads", &t.threads);

  SampleOpts s;
  auto* sample_cmd = app.add_subcommand("sample", "draw samples");
  sample_cmd->add_option("--checkpoint", s.checkpoint, "model checkpoint")
      ->required();
  sample_cmd->add_option("--out", s.out_dir, "run directory");
  sample_cmd->add_option("--dynamics", s.dynamics, "langevin|euler|ode");
  sample_cmd->add_option("--n", s.n, "number of samples");
  sample_cmd->add_option("--seed", s.seed, "latent seed");
  sample_cmd->add_option("--threads", s.threads, "worker cap (0 = auto)");

  DensityOpts d;
  auto* density_cmd =
      app.add_subcommand("density", "evaluate density grids");
  density_cmd->add_option("--checkpoint", d.checkpoint, "model checkpoint")
      ->required();
  density_cmd->add_option("--out", d.out_dir, "run directory");
  density_cmd->add_option("--mode", d.mode,
                          "neg_energy|ebm_normalized|flow|all");
  density_cmd->add_option("--bounds", d.bounds, "xmin,xmax,ymin,ymax");
  density_cmd->add_option("--resolution", d.resolution,
                          "cells per axis for energy grids");
  density_cmd->add_option("--flow-resolution", d.flow_resolution,
                          "cells per axis for the flow grid");
  density_cmd->add_option("--threads", d.threads, "worker cap (0 = auto)");

  LoglikOpts l;
  auto* loglik_cmd =
      app.add_subcommand("loglik", "test log-likelihood under the flow");
  loglik_cmd->add_option("--checkpoint", l.checkpoint, "model checkpoint")
      ->required();
  loglik_cmd->add_option("--out", l.out_dir, "run directory");
  loglik_cmd->add_option("--dataset", l.dataset, "grid|swiss");
  loglik_cmd->add_option("--n-test", l.n_test, "test sample count");
  auto* loglik_seed = loglik_cmd->add_option(
      "--seed", l.seed, "test split seed (default derived from checkpoint)");
  loglik_cmd->add_option("--mix-spacing", l.mix_spacing, "grid mode spacing");
  loglik_cmd->add_option("--mix-std", l.mix_std, "grid mode std");
  loglik_cmd->add_option("--threads", l.threads, "worker cap (0 = auto)");

  DiagnoseOpts g;
  auto* diagnose_cmd =
      app.add_subcommand("diagnose", "invertibility and mass diagnostics");
  diagnose_cmd->add_option("--checkpoint", g.checkpoint, "model checkpoint")
      ->required();
  diagnose_cmd->add_option("--out", g.out_dir, "run directory");
  diagnose_cmd->add_option("--n-points", g.n_points, "probe points");
  diagnose_cmd->add_option("--resolution", g.resolution,
                           "flow mass grid resolution");
  diagnose_cmd->add_option("--bounds", g.bounds, "xmin,xmax,ymin,ymax");
  diagnose_cmd->add_option("--seed", g.seed, "probe point seed");
  diagnose_cmd->add_option("--threads", g.threads, "worker cap (0 = auto)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) {
      if (!t.config_file.empty()) tm.applyFile(train_cmd, t.config_file);
      return runTrain(t);
    }
    if (sample_cmd->parsed()) return runSample(s);
    if (density_cmd->parsed()) return runDensity(d);
    if (loglik_cmd->parsed()) {
      l.seed_given = loglik_seed->count() > 0;
      return runLoglik(l);
    }
    if (diagnose_cmd->parsed()) return runDiagnose(g);
  } catch (const gf::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const gf::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const gf::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  }
  return 1;
}
