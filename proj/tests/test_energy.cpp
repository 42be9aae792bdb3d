#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gradflow/checkpoint.hpp>
#include <gradflow/energy.hpp>
#include <gradflow/mlp.hpp>
#include <gradflow/rng.hpp>

#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace gradflow;
namespace fs = std::filesystem;

TEST_CASE("quadratic energy closed forms") {
  QuadraticEnergy e(1.0);
  Vec x(2);
  x << 3.0, 4.0;
  CHECK(e.energy(x) == doctest::Approx(12.5));
  CHECK(e.grad(x)(0) == doctest::Approx(3.0));
  CHECK(e.grad(x)(1) == doctest::Approx(4.0));
  CHECK(e.hessianTrace(x) == 2.0);

  // trace is scale * d exactly, everywhere
  RngStream rng(3);
  for (int i = 0; i < 20; ++i) {
    QuadraticEnergy q(0.25 * (i + 1));
    CHECK(q.hessianTrace(rng.normalVec(2)) == 0.25 * (i + 1) * 2.0);
  }
}

TEST_CASE("linear energy closed forms") {
  Vec w(2);
  w << 1.0, 2.0;
  LinearEnergy e(w, 0.0);
  Vec x(2);
  x << 1.0, 1.0;
  CHECK(e.energy(x) == doctest::Approx(3.0));
  CHECK((e.grad(x) - w).norm() == 0.0);
  CHECK(e.hessianTrace(x) == 0.0);
  CHECK(e.hessianVec(x, w).norm() == 0.0);
}

TEST_CASE("dimension mismatch is a usage error") {
  QuadraticEnergy e(1.0);
  CHECK_THROWS_AS(e.energy(Vec::Zero(3)), UsageError);
  Mlp net = oracles::smallNet(1);
  CHECK_THROWS_AS(net.energy(Vec::Zero(5)), UsageError);
}

TEST_CASE("zero network evaluates to zero") {
  Mlp net{MlpConfig{2, 16, 3}};
  RngStream rng(9);
  for (int i = 0; i < 5; ++i) CHECK(net.energy(rng.normalVec(2)) == 0.0);
}

TEST_CASE("layer shapes chain input to scalar output") {
  Mlp net = oracles::smallNet(4, 8, 4);
  CHECK(net.weight(0).cols() == 2);
  CHECK(net.weight(0).rows() == 8);
  CHECK(net.weight(3).rows() == 1);
  for (int l = 1; l < 3; ++l) {
    CHECK(net.weight(l).rows() == 8);
    CHECK(net.weight(l).cols() == 8);
  }
  CHECK(net.allFinite());
}

TEST_CASE("grad matches finite differences on 100 random pairs") {
  RngStream rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Mlp net = oracles::smallNet(1000 + trial);
    const Vec x = 2.0 * rng.normalVec(2);
    const Vec fd = oracles::fdGradX(
        [&](const Vec& p) { return net.energy(p); }, x, 1e-5);
    CHECK(oracles::vecRelErr(net.grad(x), fd) < 1e-5);
  }
}

TEST_CASE("hessian trace matches finite differences of grad") {
  RngStream rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Mlp net = oracles::smallNet(2000 + trial);
    const Vec x = 2.0 * rng.normalVec(2);
    const double h = 1e-4;
    double fd_trace = 0.0;
    for (int i = 0; i < 2; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd_trace += (net.grad(xp)[i] - net.grad(xm)[i]) / (2.0 * h);
    }
    CHECK(oracles::relErr(net.hessianTrace(x), fd_trace) < 1e-4);
  }
}

TEST_CASE("hessian-vector product matches finite differences of grad") {
  RngStream rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const Mlp net = oracles::smallNet(3000 + trial);
    const Vec x = rng.normalVec(2);
    const Vec v = rng.normalVec(2);
    const double h = 1e-5;
    const Vec fd = (net.grad(x + h * v) - net.grad(x - h * v)) / (2.0 * h);
    CHECK(oracles::vecRelErr(net.hessianVec(x, v), fd) < 1e-4);
  }
}

TEST_CASE("param grad matches finite differences") {
  RngStream rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Mlp net = oracles::smallNet(4000 + trial);
    const Vec x = rng.normalVec(2);
    const MlpGrad g = net.paramGrad(x, Vec::Ones(1));
    const Vec fd = oracles::fdParamGrad(
        [&](const Mlp& n) { return n.energy(x); }, net, 1e-5);
    CHECK(oracles::vecRelErr(oracles::flatten(g), fd) < 1e-5);
  }
}

TEST_CASE("param grad of a single linear layer") {
  // E(x) = w.x + b: dE/dw = x, dE/db = 1
  Mlp net{MlpConfig{2, 1, 1}};
  net.weight(0) << 0.5, -0.25;
  net.bias(0) << 0.75;
  Vec x(2);
  x << 2.0, -3.0;
  const MlpGrad g = net.paramGrad(x, Vec::Ones(1));
  CHECK(g.weights[0](0, 0) == 2.0);
  CHECK(g.weights[0](0, 1) == -3.0);
  CHECK(g.biases[0](0) == 1.0);
}

TEST_CASE("zero input zeroes the first-layer weight gradient") {
  const Mlp net = oracles::smallNet(77);
  const MlpGrad g = net.paramGrad(Vec::Zero(2), Vec::Ones(1));
  CHECK(g.weights[0].norm() == 0.0);
  CHECK(g.biases[0].norm() > 0.0);
}

TEST_CASE("mixed second grad matches finite differences") {
  RngStream rng(37);
  for (int trial = 0; trial < 30; ++trial) {
    const Mlp net = oracles::smallNet(5000 + trial);
    const Vec x = rng.normalVec(2);
    const Vec v = rng.normalVec(2);
    const auto r = net.mixedSecondGrad(x, v, Vec::Ones(1));
    const Vec fd = oracles::fdParamGrad(
        [&](const Mlp& n) { return n.grad(x).dot(v); }, net, 1e-5);
    CHECK(oracles::vecRelErr(oracles::flatten(r.mixed), fd) < 1e-4);
  }
}

TEST_CASE("mixed second grad with v = 0 vanishes") {
  const Mlp net = oracles::smallNet(41);
  const auto r = net.mixedSecondGrad(Vec::Ones(2), Vec::Zero(2), Vec::Ones(1));
  CHECK(r.mixed.norm() == 0.0);
}

TEST_CASE("hessian trace gradients match finite differences") {
  RngStream rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp net = oracles::smallNet(6000 + trial);
    const Vec x = rng.normalVec(2);
    const auto r = net.hessianTraceGrads(x, Vec::Ones(1));
    CHECK(oracles::relErr(r.trace(0), net.hessianTrace(x)) < 1e-12);

    const Vec fd_x = oracles::fdGradX(
        [&](const Vec& p) { return net.hessianTrace(p); }, x, 1e-4);
    CHECK(oracles::vecRelErr(r.trace_grad_x.col(0), fd_x) < 1e-4);

    const Vec fd_p = oracles::fdParamGrad(
        [&](const Mlp& n) { return n.hessianTrace(x); }, net, 1e-4);
    CHECK(oracles::vecRelErr(oracles::flatten(r.trace_grad_params), fd_p) <
          1e-4);
  }
}

TEST_CASE("batched engine agrees with single-point calls") {
  const Mlp net = oracles::smallNet(51, 16, 4);
  RngStream rng(53);
  const Mat X = rng.normalMat(2, 7);
  const Vec energies = net.energyBatch(X);
  const Mat grads = net.gradBatch(X);
  const Vec traces = net.hessianTraceBatch(X);
  for (Index j = 0; j < X.cols(); ++j) {
    CHECK(energies[j] == doctest::Approx(net.energy(X.col(j))).epsilon(1e-12));
    CHECK(oracles::vecRelErr(grads.col(j), net.grad(X.col(j))) < 1e-12);
    CHECK(oracles::relErr(traces[j], net.hessianTrace(X.col(j))) < 1e-12);
  }
}

TEST_CASE("derivatives are deterministic bit for bit") {
  const Mlp net = oracles::smallNet(61);
  RngStream rng(67);
  const Vec x = rng.normalVec(2);
  const Vec v = rng.normalVec(2);
  CHECK(net.energy(x) == net.energy(x));
  CHECK((net.grad(x) - net.grad(x)).norm() == 0.0);
  CHECK(net.hessianTrace(x) == net.hessianTrace(x));
  CHECK((net.hessianVec(x, v) - net.hessianVec(x, v)).norm() == 0.0);
}

TEST_CASE("derivatives stay finite for large inputs") {
  const Mlp net = oracles::smallNet(71, 32, 5);
  Vec x(2);
  x << 1e3, -1e3;
  CHECK(std::isfinite(net.energy(x)));
  CHECK(net.grad(x).allFinite());
  CHECK(std::isfinite(net.hessianTrace(x)));
  CHECK(net.hessianVec(x, Vec::Ones(2)).allFinite());
  const auto tg = net.hessianTraceGrads(x, Vec::Ones(1));
  CHECK(tg.trace_grad_x.allFinite());
}

TEST_CASE("initialization is within the fan-in bound and biases are zero") {
  const Mlp net = oracles::smallNet(81, 16, 3);
  for (int l = 0; l < net.numLayers(); ++l) {
    const double bound = 1.0 / std::sqrt(double(net.weight(l).cols()));
    CHECK(net.weight(l).array().abs().maxCoeff() <= bound);
    CHECK(net.bias(l).norm() == 0.0);
  }
  // seeded init is reproducible
  const Mlp again = oracles::smallNet(81, 16, 3);
  for (int l = 0; l < net.numLayers(); ++l)
    CHECK((net.weight(l) - again.weight(l)).norm() == 0.0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  const auto dir = fs::temp_directory_path() / "gradflow_test_ckpt";
  fs::create_directories(dir);
  const Mlp net = oracles::smallNet(91, 8, 3);
  CheckpointMeta meta;
  meta.arch = net.config();
  meta.seed = 91;
  meta.iterations = 123;
  meta.time_horizon = 0.2;
  meta.eta = 0.05;
  meta.chain_steps = 17;
  saveCheckpoint(dir / "m.bin", net, meta);
  const Checkpoint ck = loadCheckpoint(dir / "m.bin");
  REQUIRE(ck.meta.kind == EnergyKind::mlp);
  REQUIRE(ck.mlp.has_value());
  for (Index i = 0; i < net.paramCount(); ++i)
    CHECK(ck.mlp->param(i) == net.param(i));
  CHECK(ck.meta.seed == 91);
  CHECK(ck.meta.iterations == 123);
  CHECK(ck.meta.eta == 0.05);
  CHECK(ck.meta.chain_steps == 17);

  // saving the loaded model again produces identical bytes
  saveCheckpoint(dir / "m2.bin", *ck.mlp, ck.meta);
  std::ifstream a(dir / "m.bin", std::ios::binary);
  std::ifstream b(dir / "m2.bin", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)),
                       std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)),
                       std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("analytic checkpoints round-trip") {
  const auto dir = fs::temp_directory_path() / "gradflow_test_ckpt";
  fs::create_directories(dir);
  CheckpointMeta meta;
  meta.eta = 0.1;
  saveQuadraticCheckpoint(dir / "q.bin", 2.5, meta);
  const Checkpoint ck = loadCheckpoint(dir / "q.bin");
  CHECK(ck.meta.kind == EnergyKind::quadratic);
  CHECK(ck.meta.quad_scale == 2.5);
  CHECK(!ck.mlp.has_value());
  const double e = withEnergy(ck, [](const auto& en) {
    Vec x(2);
    x << 1.0, 1.0;
    return en.energy(x);
  });
  CHECK(e == doctest::Approx(2.5));
}
