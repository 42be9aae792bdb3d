#include <gradflow/data.hpp>

#include <gradflow/rng.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

namespace gradflow {

std::vector<Vec> MixtureSpec::means() const {
  std::vector<Vec> m;
  m.reserve(9);
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) {
      Vec mu(2);
      mu << spacing * i, spacing * j;
      m.push_back(mu);
    }
  return m;
}

std::string datasetName(DatasetId id) {
  return id == DatasetId::gaussian_grid ? "grid" : "swiss";
}

DatasetId datasetFromName(const std::string& name) {
  if (name == "grid") return DatasetId::gaussian_grid;
  if (name == "swiss") return DatasetId::swiss_roll;
  throw UsageError("unknown dataset '" + name + "' (expected grid|swiss)");
}

PointBatch sampleSwissRoll(Index n, std::uint64_t seed, double jitter) {
  if (n < 0) throw UsageError("sample count must be non-negative");
  RngStream rng(seed);
  Mat pts(2, n);
  for (Index i = 0; i < n; ++i) {
    const double t = 1.5 * M_PI * (1.0 + 2.0 * rng.uniform());
    pts(0, i) = t * std::cos(t) / 7.5 * 4.0 + jitter * rng.normal();
    pts(1, i) = t * std::sin(t) / 7.5 * 4.0 + jitter * rng.normal();
  }
  return PointBatch{std::move(pts), "swiss", seed};
}

PointBatch sampleGaussianGrid(Index n, const MixtureSpec& spec,
                              std::uint64_t seed) {
  if (n < 0) throw UsageError("sample count must be non-negative");
  if (spec.std_dev <= 0) throw UsageError("mixture std must be positive");
  RngStream rng(seed);
  const auto means = spec.means();
  Mat pts(2, n);
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<size_t>(rng.uniform() * 9.0) % 9;
    pts(0, i) = means[k][0] + spec.std_dev * rng.normal();
    pts(1, i) = means[k][1] + spec.std_dev * rng.normal();
  }
  return PointBatch{std::move(pts), "grid", seed};
}

PointBatch sampleData(const DataSpec& spec, Index n, std::uint64_t seed) {
  if (spec.id == DatasetId::gaussian_grid)
    return sampleGaussianGrid(n, spec.mixture, seed);
  return sampleSwissRoll(n, seed, spec.swiss_jitter);
}

double trueLogDensity(const MixtureSpec& spec, const Vec& x) {
  if (x.size() != 2) throw UsageError("mixture density is 2-dimensional");
  const auto means = spec.means();
  const double var = spec.std_dev * spec.std_dev;
  const double log_norm = -std::log(2.0 * M_PI * var) - std::log(9.0);
  double best = -std::numeric_limits<double>::infinity();
  std::array<double, 9> expo;
  for (size_t k = 0; k < 9; ++k) {
    expo[k] = -0.5 * (x - means[k]).squaredNorm() / var;
    best = std::max(best, expo[k]);
  }
  double acc = 0.0;
  for (size_t k = 0; k < 9; ++k) acc += std::exp(expo[k] - best);
  return log_norm + best + std::log(acc);
}

double trueLogDensity(const DataSpec& spec, const Vec& x) {
  if (spec.id != DatasetId::gaussian_grid)
    throw UsageError("true density is only available for the grid mixture");
  return trueLogDensity(spec.mixture, x);
}

PointBatch samplePrior(Index n, int d, std::uint64_t seed) {
  if (n < 0) throw UsageError("sample count must be non-negative");
  RngStream rng(seed);
  return PointBatch{rng.normalMat(d, n), "prior", seed};
}

double mixtureEntropyMonteCarlo(const MixtureSpec& spec, long n_samples,
                                std::uint64_t seed) {
  if (n_samples < 1) throw UsageError("need at least one sample");
  RngStream rng(seed);
  const auto means = spec.means();
  double acc = 0.0;
  Vec x(2);
  for (long i = 0; i < n_samples; ++i) {
    const auto k = static_cast<size_t>(rng.uniform() * 9.0) % 9;
    x[0] = means[k][0] + spec.std_dev * rng.normal();
    x[1] = means[k][1] + spec.std_dev * rng.normal();
    acc += trueLogDensity(spec, x);
  }
  return -acc / static_cast<double>(n_samples);
}

namespace {

void formatDouble(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

void writePointsCsv(const PointBatch& batch,
                    const std::filesystem::path& path) {
  std::string body = "x0,x1\n";
  for (Index i = 0; i < batch.points.cols(); ++i) {
    formatDouble(body, batch.points(0, i));
    body += ',';
    formatDouble(body, batch.points(1, i));
    body += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

PointBatch readPointsCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  std::vector<double> xs, ys;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("malformed CSV row: " + line);
    xs.push_back(std::stod(line.substr(0, comma)));
    ys.push_back(std::stod(line.substr(comma + 1)));
  }
  Mat pts(2, static_cast<Index>(xs.size()));
  for (size_t i = 0; i < xs.size(); ++i) {
    pts(0, static_cast<Index>(i)) = xs[i];
    pts(1, static_cast<Index>(i)) = ys[i];
  }
  return PointBatch{std::move(pts), "", 0};
}

void writePointsBinary(const PointBatch& batch,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  const std::uint64_t n = static_cast<std::uint64_t>(batch.points.cols());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (Index i = 0; i < batch.points.cols(); ++i) {
    const double xy[2] = {batch.points(0, i), batch.points(1, i)};
    out.write(reinterpret_cast<const char*>(xy), sizeof(xy));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PointBatch readPointsBinary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in) throw IoError("truncated point file: " + path.string());
  Mat pts(2, static_cast<Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    double xy[2];
    in.read(reinterpret_cast<char*>(xy), sizeof(xy));
    if (!in) throw IoError("truncated point file: " + path.string());
    pts(0, static_cast<Index>(i)) = xy[0];
    pts(1, static_cast<Index>(i)) = xy[1];
  }
  return PointBatch{std::move(pts), "", 0};
}

}  // namespace gradflow
