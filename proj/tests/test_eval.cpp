#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gradflow/eval.hpp>
#include <gradflow/image.hpp>
#include <gradflow/manifest.hpp>

#include "oracles.hpp"

#include <cmath>
#include <filesystem>

using namespace gradflow;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "gradflow_test_eval";

DensityGrid gaussianGrid(double variance, const GridBounds& b, Index res) {
  DensityGrid g;
  g.bounds = b;
  g.nx = g.ny = res;
  g.mode = GridMode::ebm_normalized;
  g.values.resize(res, res);
  g.floored.setConstant(res, res, false);
  for (Index iy = 0; iy < res; ++iy)
    for (Index ix = 0; ix < res; ++ix) {
      const Vec c = g.cellCenter(ix, iy);
      g.values(ix, iy) =
          -std::log(2.0 * M_PI * variance) - 0.5 * c.squaredNorm() / variance;
    }
  return g;
}

}  // namespace

TEST_CASE("normalizer reproduces gaussian integrals") {
  const GridBounds b{-6, 6, -6, 6};
  const double z1 = ebmNormalizer(QuadraticEnergy(1.0), b, 600, 600, 2);
  CHECK(std::abs(z1 - 2.0 * M_PI) / (2.0 * M_PI) <= 1e-3);
  const double z2 = ebmNormalizer(QuadraticEnergy(2.0), b, 600, 600, 2);
  CHECK(std::abs(z2 - M_PI) / M_PI <= 1e-3);
}

TEST_CASE("normalizer estimate converges with resolution") {
  const GridBounds b{-6, 6, -6, 6};
  QuadraticEnergy quad(1.0);
  const double z200 = ebmNormalizer(quad, b, 200, 200);
  const double z400 = ebmNormalizer(quad, b, 400, 400);
  const double z800 = ebmNormalizer(quad, b, 800, 800);
  CHECK(std::abs(z800 - z400) <= std::abs(z400 - z200));
}

TEST_CASE("normalizer rejects coarse grids") {
  CHECK_THROWS_AS(ebmNormalizer(QuadraticEnergy(1.0), GridBounds{}, 50, 600),
                  UsageError);
}

TEST_CASE("neg-energy grid of the zero network is constant zero") {
  Mlp net{MlpConfig{2, 8, 3}};
  const DensityGrid g =
      densityGrid(net, GridMode::neg_energy, GridBounds{}, 50, 50);
  CHECK(g.values.norm() == 0.0);
  CHECK(g.floored.count() == 0);
}

TEST_CASE("normalized ebm grid matches the standard gaussian") {
  const GridBounds b{-4, 4, -4, 4};
  const DensityGrid g = densityGrid(QuadraticEnergy(1.0),
                                    GridMode::ebm_normalized, b, 400, 400,
                                    0.2, SolverConfig{}, 2);
  for (Index iy = 0; iy < g.ny; iy += 37)
    for (Index ix = 0; ix < g.nx; ix += 37) {
      const Vec c = g.cellCenter(ix, iy);
      const double expect = -std::log(2.0 * M_PI) - 0.5 * c.squaredNorm();
      CHECK(std::abs(g.values(ix, iy) - expect) <= 2e-3);
    }
  CHECK(std::abs(g.totalMass() - 1.0) <= 0.02);
}

TEST_CASE("normalized grid differs from raw energy by exactly log Z") {
  const Mlp net = oracles::smallNet(3, 8, 3);
  const GridBounds b{-6, 6, -6, 6};
  const DensityGrid raw =
      densityGrid(net, GridMode::neg_energy, b, 120, 120);
  const DensityGrid norm =
      densityGrid(net, GridMode::ebm_normalized, b, 120, 120);
  for (Index iy = 0; iy < raw.ny; iy += 17)
    for (Index ix = 0; ix < raw.nx; ix += 17)
      CHECK(raw.values(ix, iy) - norm.values(ix, iy) ==
            doctest::Approx(norm.log_normalizer).epsilon(1e-12));
}

TEST_CASE("flow grid of the quadratic energy matches the closed form") {
  const GridBounds b{-3, 3, -3, 3};
  const double T = 0.2;
  const DensityGrid g = densityGrid(QuadraticEnergy(1.0), GridMode::flow, b,
                                    40, 40, T, SolverConfig{}, 2);
  const double var = std::exp(-2.0 * T);
  for (Index iy = 0; iy < g.ny; iy += 7)
    for (Index ix = 0; ix < g.nx; ix += 7) {
      const Vec c = g.cellCenter(ix, iy);
      const double expect =
          -std::log(2.0 * M_PI * var) - 0.5 * c.squaredNorm() / var;
      CHECK(std::abs(g.values(ix, iy) - expect) <= 1e-5);
    }
  CHECK(std::abs(g.totalMass() - 1.0) <= 0.02);
  CHECK(g.floored.count() == 0);
}

TEST_CASE("failed reverse solves are floored and flagged") {
  // steep quadratic: reverse trajectories escape except very near the origin
  const DensityGrid g = densityGrid(QuadraticEnergy(70.0), GridMode::flow,
                                    GridBounds{}, 20, 20, 0.2,
                                    SolverConfig{}, 2);
  const Index floored = g.floored.count();
  CHECK(floored > 0);
  CHECK(floored < g.nx * g.ny);
  CHECK(g.quality_warning);

  double lowest_valid = std::numeric_limits<double>::infinity();
  for (Index iy = 0; iy < g.ny; ++iy)
    for (Index ix = 0; ix < g.nx; ++ix)
      if (!g.floored(ix, iy))
        lowest_valid = std::min(lowest_valid, g.values(ix, iy));
  for (Index iy = 0; iy < g.ny; ++iy)
    for (Index ix = 0; ix < g.nx; ++ix)
      if (g.floored(ix, iy))
        CHECK(g.values(ix, iy) == doctest::Approx(lowest_valid - 10.0));
}

TEST_CASE("test log-likelihood against the gaussian cross-entropy") {
  const double T = 0.2;
  const double var = std::exp(-2.0 * T);
  // draw from the flow's own pushforward N(0, var I)
  RngStream rng(5);
  const Index n = 10000;
  Mat pts = std::sqrt(var) * rng.normalMat(2, n);
  const TestLogLik r =
      testLogLikelihood(QuadraticEnergy(1.0), pts, T, SolverConfig{}, 2);
  const double expect = -(1.0 + std::log(2.0 * M_PI) - 2.0 * T);
  CHECK(std::abs(r.mean_loglik - expect) <= 0.04);
  CHECK(r.n_failed == 0);
  CHECK(r.n_ok == n);
}

TEST_CASE("zero-time test log-likelihood is the prior mean") {
  RngStream rng(7);
  const Mat pts = rng.normalMat(2, 100);
  const TestLogLik r =
      testLogLikelihood(QuadraticEnergy(1.0), pts, 0.0, SolverConfig{});
  double expect = 0.0;
  for (Index j = 0; j < pts.cols(); ++j) expect += logStdNormal(pts.col(j));
  CHECK(r.mean_loglik == doctest::Approx(expect / 100.0).epsilon(1e-12));
}

TEST_CASE("excess likelihood failures raise an error") {
  RngStream rng(9);
  const Mat pts = 3.0 * rng.normalMat(2, 50);
  CHECK_THROWS_AS(
      testLogLikelihood(QuadraticEnergy(70.0), pts, 0.2, SolverConfig{}, 2),
      NumericalError);
}

TEST_CASE("grid KL of identical grids is zero") {
  const DensityGrid g = gaussianGrid(1.0, GridBounds{-8, 8, -8, 8}, 100);
  CHECK(gridKl(g, g) == 0.0);
}

TEST_CASE("grid KL between gaussians matches the closed form") {
  // KL(N(0,I) || N(0,4I)) in 2d: 0.5 (2/4 - 2 + 2 log 4)
  const GridBounds b{-12, 12, -12, 12};
  const DensityGrid p = gaussianGrid(1.0, b, 300);
  const DensityGrid q = gaussianGrid(4.0, b, 300);
  const double expect = 0.5 * (2.0 / 4.0 - 2.0 + 2.0 * std::log(4.0));
  CHECK(expect == doctest::Approx(0.636294).epsilon(1e-4));
  CHECK(std::abs(gridKl(p, q) - expect) <= 1e-2);
}

TEST_CASE("grid KL is non-negative on random normalized grids") {
  RngStream rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    DensityGrid p = gaussianGrid(1.0, GridBounds{}, 40);
    DensityGrid q = gaussianGrid(1.0, GridBounds{}, 40);
    for (Index iy = 0; iy < 40; ++iy)
      for (Index ix = 0; ix < 40; ++ix) {
        p.values(ix, iy) = rng.normal();
        q.values(ix, iy) = rng.normal();
      }
    CHECK(gridKl(p, q) >= -1e-12);
  }
}

TEST_CASE("grid KL rejects mismatched grids") {
  const DensityGrid p = gaussianGrid(1.0, GridBounds{}, 50);
  const DensityGrid q = gaussianGrid(1.0, GridBounds{}, 60);
  CHECK_THROWS_AS(gridKl(p, q), UsageError);

  DensityGrid raw = gaussianGrid(1.0, GridBounds{}, 50);
  raw.mode = GridMode::neg_energy;
  CHECK_THROWS_AS(gridKl(p, raw), UsageError);

  DensityGrid shifted = gaussianGrid(1.0, GridBounds{-5, 7, -6, 6}, 50);
  CHECK_THROWS_AS(gridKl(p, shifted), UsageError);
}

TEST_CASE("the exact mixture grid is normalized") {
  const DensityGrid g =
      mixtureGrid(MixtureSpec{}, GridBounds{-8, 8, -8, 8}, 400, 400);
  CHECK(std::abs(g.totalMass() - 1.0) <= 0.01);
  CHECK(g.mode == GridMode::ebm_normalized);
}

TEST_CASE("grid csv and metadata serialize") {
  fs::create_directories(kTmp);
  const DensityGrid g = gaussianGrid(1.0, GridBounds{}, 20);
  writeGridCsv(g, kTmp / "g.csv");
  writeGridMetaJson(g, kTmp / "g.json");
  CHECK(fs::file_size(kTmp / "g.csv") > 0);
  CHECK(fs::file_size(kTmp / "g.json") > 0);
  // header plus one row per cell
  std::ifstream in(kTmp / "g.csv");
  std::string line;
  Index rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + 20 * 20);
}

TEST_CASE("renders are deterministic byte for byte") {
  fs::create_directories(kTmp);
  const DensityGrid g = gaussianGrid(1.0, GridBounds{}, 30);
  renderHeatmap(g, kTmp / "a.png");
  renderHeatmap(g, kTmp / "b.png");
  CHECK(fileHash(kTmp / "a.png") == fileHash(kTmp / "b.png"));
  renderHeatmap(g, kTmp / "lin.png", true);
  CHECK(fs::file_size(kTmp / "lin.png") > 0);

  RngStream rng(13);
  const Mat pts = rng.normalMat(2, 200);
  renderScatter(pts, kTmp / "s1.png");
  renderScatter(pts, kTmp / "s2.png");
  CHECK(fileHash(kTmp / "s1.png") == fileHash(kTmp / "s2.png"));

  // empty batch still renders a blank canvas
  renderScatter(Mat(2, 0), kTmp / "blank.png");
  CHECK(fs::file_size(kTmp / "blank.png") > 0);
}

TEST_CASE("constant grids render as a single color") {
  fs::create_directories(kTmp);
  DensityGrid g = gaussianGrid(1.0, GridBounds{}, 10);
  g.values.setConstant(1.5);
  renderHeatmap(g, kTmp / "const.png");
  CHECK(fs::file_size(kTmp / "const.png") > 0);
}

TEST_CASE("density evaluation is thread-count independent") {
  const Mlp net = oracles::smallNet(17, 8, 3);
  const GridBounds b{-2, 2, -2, 2};
  const DensityGrid g1 =
      densityGrid(net, GridMode::flow, b, 12, 12, 0.2, SolverConfig{}, 1);
  const DensityGrid g4 =
      densityGrid(net, GridMode::flow, b, 12, 12, 0.2, SolverConfig{}, 4);
  CHECK((g1.values - g4.values).norm() == 0.0);
}
