#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gradflow/dynamics.hpp>
#include <gradflow/energy.hpp>

#include "oracles.hpp"

#include <Eigen/SVD>
#include <cmath>

using namespace gradflow;

TEST_CASE("langevin step components") {
  Vec w(2);
  w << 1.0, 2.0;
  LinearEnergy lin(w);
  ChainConfig cfg{0.1, 1, 0.0};

  // pure gradient step
  Vec x = Vec::Zero(2);
  Vec next = langevinStep(lin, x, cfg, Vec::Zero(2));
  CHECK(next(0) == doctest::Approx(-0.05));
  CHECK(next(1) == doctest::Approx(-0.1));

  // pure noise step at a stationary point of the quadratic
  QuadraticEnergy quad(1.0);
  cfg.noise_scale = 1.0;
  Vec omega(2);
  omega << 1.0, 0.0;
  next = langevinStep(quad, Vec::Zero(2), cfg, omega);
  CHECK(next(0) == doctest::Approx(std::sqrt(0.1)));
  CHECK(next(1) == 0.0);

  // contraction by (1 - eta/2)
  cfg.noise_scale = 0.0;
  Vec x10(2);
  x10 << 1.0, 0.0;
  next = langevinStep(quad, x10, cfg, Vec::Zero(2));
  CHECK(next(0) == doctest::Approx(0.95));
  CHECK(next(1) == 0.0);
}

TEST_CASE("noise-free chain has the closed form (1 - eta/2)^K") {
  QuadraticEnergy quad(1.0);
  ChainConfig cfg{0.1, 40, 0.0};
  RngStream rng(1);
  const Vec x0 = Vec::Ones(2);
  const Vec out = runChain(quad, x0, cfg, rng);
  const double expect = std::pow(0.95, 40);
  CHECK(out(0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(out(1) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero steps return the start point unchanged") {
  QuadraticEnergy quad(1.0);
  ChainConfig cfg{0.1, 0, 0.0};
  RngStream rng(2);
  Vec x0(2);
  x0 << 0.25, -0.75;
  const Vec out = runChain(quad, x0, cfg, rng);
  CHECK(out(0) == x0(0));
  CHECK(out(1) == x0(1));
}

TEST_CASE("noise-free chain equals composed zero-noise steps bit-exactly") {
  const Mlp net = oracles::smallNet(11);
  ChainConfig cfg{0.05, 12, 0.0};
  RngStream rng(3);
  const Vec x0 = rng.normalVec(2);
  RngStream unused(4);
  const Vec chained = runChain(net, x0, cfg, unused);
  Vec manual = x0;
  for (int k = 0; k < cfg.num_steps; ++k)
    manual = langevinStep(net, manual, cfg, Vec::Zero(2), k);
  CHECK((chained - manual).norm() == 0.0);
}

TEST_CASE("noisy chain is reproducible from its seed") {
  const Mlp net = oracles::smallNet(13);
  ChainConfig cfg{0.1, 20, 0.5};
  RngStream rng_x(5);
  const Vec x0 = rng_x.normalVec(2);
  RngStream a(6), b(6);
  const Vec ra = runChain(net, x0, cfg, a);
  const Vec rb = runChain(net, x0, cfg, b);
  CHECK((ra - rb).norm() == 0.0);
}

TEST_CASE("diverged chain reports the failing step index") {
  Vec w(2);
  w << 1e308, 0.0;
  LinearEnergy huge(w);
  ChainConfig cfg{4.0, 10, 0.0};
  RngStream rng(7);
  CHECK_THROWS_AS(runChain(huge, Vec::Zero(2), cfg, rng),
                  DivergedChainError);
  try {
    runChain(huge, Vec::Zero(2), cfg, rng);
  } catch (const DivergedChainError& e) {
    CHECK(e.step == 0);
  }
}

TEST_CASE("single euler step inverts to y / (1 - eta/2)") {
  QuadraticEnergy quad(1.0);
  ChainConfig cfg{0.1, 1, 0.0};
  Vec y(2);
  y << 0.95, 0.0;
  const Vec x0 = invertEulerChain(quad, y, cfg);
  CHECK(x0(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(x0(1) == doctest::Approx(0.0));
}

TEST_CASE("inversion with zero steps is the identity") {
  QuadraticEnergy quad(1.0);
  ChainConfig cfg{0.1, 0, 0.0};
  Vec y(2);
  y << 3.0, -2.0;
  const Vec x0 = invertEulerChain(quad, y, cfg);
  CHECK((x0 - y).norm() == 0.0);
}

TEST_CASE("inversion requires the noise-free chain") {
  QuadraticEnergy quad(1.0);
  ChainConfig cfg{0.1, 5, 0.5};
  CHECK_THROWS_AS(invertEulerChain(quad, Vec::Zero(2), cfg), UsageError);
}

TEST_CASE("chain inversion round-trips random networks") {
  RngStream rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Mlp net = oracles::smallNet(7000 + trial);
    ChainConfig cfg{0.05, 15, 0.0};
    const Vec x0 = rng.normalVec(2);
    RngStream unused(0);
    const Vec y = runChain(net, x0, cfg, unused);
    const Vec back = invertEulerChain(net, y, cfg);
    CHECK((back - x0).norm() <= 1e-6);
  }
}

TEST_CASE("non-contractive step maps raise an invertibility error") {
  QuadraticEnergy quad(1.0);
  ChainConfig cfg{3.0, 1, 0.0};  // eta/2 * lip(grad) = 1.5 > 1
  Vec y(2);
  y << 1.0, 0.0;
  CHECK_THROWS_AS(invertEulerChain(quad, y, cfg), InvertibilityError);
}

TEST_CASE("lipschitz estimate on analytic energies") {
  RngStream rng(19);
  const Mat points = rng.normalMat(2, 8);
  QuadraticEnergy quad(1.0);
  CHECK(lipschitzEstimate(quad, points, 0.1) == doctest::Approx(0.05));

  Vec w(2);
  w << 2.0, -1.0;
  LinearEnergy lin(w);
  CHECK(lipschitzEstimate(lin, points, 0.1) == 0.0);

  CHECK_THROWS_AS(lipschitzEstimate(quad, Mat(2, 0), 0.1), UsageError);
}

TEST_CASE("lipschitz estimate matches the dense-Jacobian norm") {
  RngStream rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Mlp net = oracles::smallNet(8000 + trial, 16, 3);
    const Mat points = rng.normalMat(2, 5);
    const double eta = 0.1;
    const double est = lipschitzEstimate(net, points, eta);

    double dense = 0.0;
    for (Index j = 0; j < points.cols(); ++j) {
      Mat H(2, 2);
      H.col(0) = net.hessianVec(points.col(j), Vec::Unit(2, 0));
      H.col(1) = net.hessianVec(points.col(j), Vec::Unit(2, 1));
      const Eigen::JacobiSVD<Mat> svd(0.5 * eta * H);
      dense = std::max(dense, svd.singularValues()(0));
    }
    CHECK(std::abs(est - dense) < 1e-3);
  }
}

TEST_CASE("noise-free chains do not increase the energy in the contractive regime") {
  QuadraticEnergy quad(1.0);
  RngStream rng(29);
  ChainConfig cfg{0.1, 30, 0.0};
  for (int trial = 0; trial < 5; ++trial) {
    Vec x = 3.0 * rng.normalVec(2);
    double prev = quad.energy(x);
    for (int k = 0; k < cfg.num_steps; ++k) {
      x = langevinStep(quad, x, cfg, Vec::Zero(2), k);
      const double cur = quad.energy(x);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }

  for (int trial = 0; trial < 5; ++trial) {
    const Mlp net = oracles::smallNet(9000 + trial);
    ChainConfig small{0.1, 25, 0.0};
    Mat visited(2, small.num_steps + 1);
    visited.col(0) = rng.normalVec(2);
    for (int k = 0; k < small.num_steps; ++k)
      visited.col(k + 1) =
          langevinStep(net, visited.col(k), small, Vec::Zero(2), k);
    // descent holds whenever the step map is comfortably contractive
    // along the whole trajectory
    if (lipschitzEstimate(net, visited, small.step_size) >= 0.9) continue;
    for (int k = 0; k < small.num_steps; ++k)
      CHECK(net.energy(visited.col(k + 1)) <=
            net.energy(visited.col(k)) + 1e-12);
  }
}
