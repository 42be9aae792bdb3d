#pragma once

#include <gradflow/data.hpp>
#include <gradflow/energy.hpp>
#include <gradflow/ode.hpp>
#include <gradflow/parallel.hpp>

#include <algorithm>
#include <filesystem>
#include <limits>

namespace gradflow {

struct GridBounds {
  double xmin = -6.0, xmax = 6.0;
  double ymin = -6.0, ymax = 6.0;
};

enum class GridMode { neg_energy, ebm_normalized, flow };

std::string gridModeName(GridMode mode);
GridMode gridModeFromName(const std::string& name);

/// Rectangular log-density evaluation grid. Cells whose evaluation failed
/// hold a floor value and are flagged in `floored`.
struct DensityGrid {
  GridBounds bounds;
  Index nx = 0, ny = 0;
  Mat values;  // nx x ny, log densities at cell centers
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> floored;
  GridMode mode = GridMode::neg_energy;
  bool quality_warning = false;  // more than 10% of cells floored
  double log_normalizer = 0.0;   // log Z for ebm_normalized grids

  double cellWidth() const {
    return (bounds.xmax - bounds.xmin) / static_cast<double>(nx);
  }
  double cellHeight() const {
    return (bounds.ymax - bounds.ymin) / static_cast<double>(ny);
  }
  double cellArea() const { return cellWidth() * cellHeight(); }
  Vec cellCenter(Index ix, Index iy) const {
    Vec c(2);
    c << bounds.xmin + (ix + 0.5) * cellWidth(),
        bounds.ymin + (iy + 0.5) * cellHeight();
    return c;
  }
  /// Riemann sum of exp(values) over the grid.
  double totalMass() const;
};

namespace detail {

inline void checkGridArgs(const GridBounds& b, Index nx, Index ny) {
  if (!(b.xmax > b.xmin) || !(b.ymax > b.ymin))
    throw UsageError("grid bounds must be non-degenerate");
  if (nx < 1 || ny < 1) throw UsageError("grid resolution must be positive");
}

}  // namespace detail

namespace detail {

// Energies over the cell centers of one row-block, batched when available.
template <EnergyModel E>
void energiesOverCells(const E& e, const GridBounds& bounds, Index nx,
                       Index ny, Index lo, Index hi, Mat& into) {
  const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(nx);
  const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(ny);
  if constexpr (requires(const Mat& M) { e.energyBatch(M); }) {
    Mat centers(2, nx * (hi - lo));
    Index col = 0;
    for (Index iy = lo; iy < hi; ++iy)
      for (Index ix = 0; ix < nx; ++ix, ++col)
        centers.col(col) << bounds.xmin + (ix + 0.5) * dx,
            bounds.ymin + (iy + 0.5) * dy;
    const Vec vals = e.energyBatch(centers);
    col = 0;
    for (Index iy = lo; iy < hi; ++iy)
      for (Index ix = 0; ix < nx; ++ix, ++col) into(ix, iy) = vals[col];
  } else {
    Vec x(2);
    for (Index iy = lo; iy < hi; ++iy)
      for (Index ix = 0; ix < nx; ++ix) {
        x << bounds.xmin + (ix + 0.5) * dx, bounds.ymin + (iy + 0.5) * dy;
        into(ix, iy) = e.energy(x);
      }
  }
}

}  // namespace detail

/// log of the partition estimate: log sum exp(-E(center)) + log(cell area),
/// midpoint rule with a max shift.
template <EnergyModel E>
double ebmLogNormalizer(const E& e, const GridBounds& bounds, Index nx,
                        Index ny, int threads = 1) {
  detail::checkGridArgs(bounds, nx, ny);
  if (nx < 100 || ny < 100)
    throw UsageError("normalizer needs resolution >= 100 per axis");
  const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(nx);
  const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(ny);

  Mat energy(nx, ny);
  parallelForBlocks(ny, threads, [&](Index, Index lo, Index hi) {
    detail::energiesOverCells(e, bounds, nx, ny, lo, hi, energy);
  });
  if (!energy.allFinite())
    throw NumericalError("non-finite energy while normalizing");
  const double shift = (-energy).maxCoeff();
  const double acc = ((-energy).array() - shift).exp().sum();
  return shift + std::log(acc) + std::log(dx * dy);
}

/// Z itself; errors if it is not representable.
template <EnergyModel E>
double ebmNormalizer(const E& e, const GridBounds& bounds, Index nx, Index ny,
                     int threads = 1) {
  const double z = std::exp(ebmLogNormalizer(e, bounds, nx, ny, threads));
  if (!std::isfinite(z))
    throw NumericalError("partition estimate overflows double");
  return z;
}

/// Evaluates one of the three density notions over the grid. Flow cells run
/// a reverse ODE solve each; failed cells are floored at min(valid) - 10.
template <EnergyModel E>
DensityGrid densityGrid(const E& e, GridMode mode, const GridBounds& bounds,
                        Index nx, Index ny, double T = 0.2,
                        const SolverConfig& solver = {}, int threads = 1) {
  detail::checkGridArgs(bounds, nx, ny);
  DensityGrid grid;
  grid.bounds = bounds;
  grid.nx = nx;
  grid.ny = ny;
  grid.mode = mode;
  grid.values = Mat::Zero(nx, ny);
  grid.floored.setConstant(nx, ny, false);

  double log_z = 0.0;
  if (mode == GridMode::ebm_normalized)
    log_z = ebmLogNormalizer(e, bounds, std::max<Index>(nx, 100),
                             std::max<Index>(ny, 100), threads);
  grid.log_normalizer = log_z;

  if (mode == GridMode::flow) {
    parallelForBlocks(nx * ny, threads, [&](Index, Index lo, Index hi) {
      for (Index cell = lo; cell < hi; ++cell) {
        const Index ix = cell % nx;
        const Index iy = cell / nx;
        try {
          grid.values(ix, iy) =
              logLikelihood(e, grid.cellCenter(ix, iy), T, solver);
        } catch (const NumericalError&) {
          grid.floored(ix, iy) = true;
        }
      }
    });
  } else {
    parallelForBlocks(ny, threads, [&](Index, Index lo, Index hi) {
      detail::energiesOverCells(e, bounds, nx, ny, lo, hi, grid.values);
    });
    grid.values = (-grid.values).eval();
    if (mode == GridMode::ebm_normalized) grid.values.array() -= log_z;
  }

  const Index n_floored = grid.floored.count();
  if (n_floored > 0) {
    if (n_floored == nx * ny)
      throw NumericalError("every grid cell failed to evaluate");
    double lowest = std::numeric_limits<double>::infinity();
    for (Index iy = 0; iy < ny; ++iy)
      for (Index ix = 0; ix < nx; ++ix)
        if (!grid.floored(ix, iy))
          lowest = std::min(lowest, grid.values(ix, iy));
    const double floor_value = lowest - 10.0;
    for (Index iy = 0; iy < ny; ++iy)
      for (Index ix = 0; ix < nx; ++ix)
        if (grid.floored(ix, iy)) grid.values(ix, iy) = floor_value;
    grid.quality_warning =
        10 * n_floored > nx * ny;  // more than 10% of cells failed
  }
  return grid;
}

/// Exact normalized log density of the grid mixture, for comparisons.
DensityGrid mixtureGrid(const MixtureSpec& spec, const GridBounds& bounds,
                        Index nx, Index ny);

struct TestLogLik {
  double mean_loglik = 0.0;
  Index n_ok = 0;
  Index n_failed = 0;
};

/// Mean flow log-likelihood over a test batch; failed points are excluded
/// and reported. More than 1% failures is an error.
template <EnergyModel E>
TestLogLik testLogLikelihood(const E& e, const Mat& points, double T,
                             const SolverConfig& solver = {},
                             int threads = 1) {
  if (points.cols() == 0) throw UsageError("testLogLikelihood: empty batch");
  const Index n = points.cols();
  Vec vals = Vec::Zero(n);
  Eigen::Array<bool, Eigen::Dynamic, 1> ok(n);
  parallelForBlocks(n, threads, [&](Index, Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      try {
        vals[i] = logLikelihood(e, points.col(i), T, solver);
        ok[i] = true;
      } catch (const NumericalError&) {
        ok[i] = false;
      }
    }
  });
  TestLogLik out;
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (ok[i]) {
      acc += vals[i];
      ++out.n_ok;
    } else {
      ++out.n_failed;
    }
  }
  if (100 * out.n_failed > n)
    throw NumericalError("more than 1% of test points failed to evaluate");
  out.mean_loglik = acc / static_cast<double>(out.n_ok);
  return out;
}

/// Riemann-sum KL(p || q) between two normalized grids on identical
/// bounds/resolution; both are renormalized to sum exactly to one.
double gridKl(const DensityGrid& p, const DensityGrid& q);

void writeGridCsv(const DensityGrid& grid, const std::filesystem::path& path);
void writeGridMetaJson(const DensityGrid& grid,
                       const std::filesystem::path& path);

}  // namespace gradflow
