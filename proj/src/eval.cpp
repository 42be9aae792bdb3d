#include <gradflow/eval.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace gradflow {

std::string gridModeName(GridMode mode) {
  switch (mode) {
    case GridMode::neg_energy: return "neg_energy";
    case GridMode::ebm_normalized: return "ebm_normalized";
    case GridMode::flow: return "flow";
  }
  return "?";
}

GridMode gridModeFromName(const std::string& name) {
  if (name == "neg_energy") return GridMode::neg_energy;
  if (name == "ebm_normalized") return GridMode::ebm_normalized;
  if (name == "flow") return GridMode::flow;
  throw UsageError("unknown grid mode '" + name + "'");
}

double DensityGrid::totalMass() const {
  return values.array().exp().sum() * cellArea();
}

DensityGrid mixtureGrid(const MixtureSpec& spec, const GridBounds& bounds,
                        Index nx, Index ny) {
  detail::checkGridArgs(bounds, nx, ny);
  DensityGrid grid;
  grid.bounds = bounds;
  grid.nx = nx;
  grid.ny = ny;
  grid.mode = GridMode::ebm_normalized;
  grid.values.resize(nx, ny);
  grid.floored.setConstant(nx, ny, false);
  for (Index iy = 0; iy < ny; ++iy)
    for (Index ix = 0; ix < nx; ++ix)
      grid.values(ix, iy) = trueLogDensity(spec, grid.cellCenter(ix, iy));
  return grid;
}

double gridKl(const DensityGrid& p, const DensityGrid& q) {
  if (p.mode == GridMode::neg_energy || q.mode == GridMode::neg_energy)
    throw UsageError("gridKl needs normalized grids");
  if (p.nx != q.nx || p.ny != q.ny)
    throw UsageError("gridKl: resolution mismatch");
  const auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
  };
  if (!close(p.bounds.xmin, q.bounds.xmin) ||
      !close(p.bounds.xmax, q.bounds.xmax) ||
      !close(p.bounds.ymin, q.bounds.ymin) ||
      !close(p.bounds.ymax, q.bounds.ymax))
    throw UsageError("gridKl: bounds mismatch");

  // Renormalize both to discrete distributions over the cells.
  const auto cellProbs = [](const DensityGrid& g) {
    Eigen::ArrayXXd w = (g.values.array() - g.values.maxCoeff()).exp();
    return (w / w.sum()).eval();
  };
  const Eigen::ArrayXXd pw = cellProbs(p);
  const Eigen::ArrayXXd qw = cellProbs(q);
  double kl = 0.0;
  for (Index iy = 0; iy < p.ny; ++iy)
    for (Index ix = 0; ix < p.nx; ++ix) {
      const double pi = pw(ix, iy);
      if (pi <= 0.0) continue;
      kl += pi * (std::log(pi) - std::log(qw(ix, iy)));
    }
  return kl;
}

void writeGridCsv(const DensityGrid& grid, const std::filesystem::path& path) {
  std::string body = "x,y,logp,floored\n";
  char buf[96];
  for (Index iy = 0; iy < grid.ny; ++iy)
    for (Index ix = 0; ix < grid.nx; ++ix) {
      const Vec c = grid.cellCenter(ix, iy);
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d\n", c[0], c[1],
                    grid.values(ix, iy), grid.floored(ix, iy) ? 1 : 0);
      body += buf;
    }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void writeGridMetaJson(const DensityGrid& grid,
                       const std::filesystem::path& path) {
  nlohmann::json j{
      {"mode", gridModeName(grid.mode)},
      {"bounds", {grid.bounds.xmin, grid.bounds.xmax, grid.bounds.ymin,
                  grid.bounds.ymax}},
      {"resolution", {grid.nx, grid.ny}},
      {"log_normalizer", grid.log_normalizer},
      {"normalizer", std::exp(grid.log_normalizer)},
      {"floored_cells", static_cast<long>(grid.floored.count())},
      {"total_mass", grid.totalMass()},
      {"quality_warning", grid.quality_warning},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace gradflow
