#pragma once

#include <gradflow/types.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gradflow {

/// A batch of d-dimensional points, stored as columns.
struct PointBatch {
  Mat points;  // d x n
  std::string dataset_id;
  std::uint64_t seed = 0;

  Index size() const { return points.cols(); }
};

/// Nine Gaussians on the grid {-spacing, 0, spacing}^2, uniform weights.
/// With the default spacing/std the mixture's differential entropy is
/// about 1.49 nats.
struct MixtureSpec {
  double spacing = 4.0;
  double std_dev = 0.17;

  std::vector<Vec> means() const;
};

enum class DatasetId { gaussian_grid, swiss_roll };

struct DataSpec {
  DatasetId id = DatasetId::gaussian_grid;
  MixtureSpec mixture;
  double swiss_jitter = 0.05;
};

std::string datasetName(DatasetId id);
DatasetId datasetFromName(const std::string& name);  // UsageError on unknown

/// Swiss roll: t = 1.5*pi*(1 + 2u), point (t cos t, t sin t)/7.5*4 plus
/// Gaussian jitter.
PointBatch sampleSwissRoll(Index n, std::uint64_t seed, double jitter = 0.05);

PointBatch sampleGaussianGrid(Index n, const MixtureSpec& spec,
                              std::uint64_t seed);

PointBatch sampleData(const DataSpec& spec, Index n, std::uint64_t seed);

/// Exact log density of the grid mixture.
double trueLogDensity(const MixtureSpec& spec, const Vec& x);

/// Dataset-level dispatch; the swiss roll has no closed form and throws.
double trueLogDensity(const DataSpec& spec, const Vec& x);

/// Standard Gaussian latent prior.
PointBatch samplePrior(Index n, int d, std::uint64_t seed);

/// Monte Carlo estimate of the mixture's differential entropy -E[log p].
double mixtureEntropyMonteCarlo(const MixtureSpec& spec, long n_samples,
                                std::uint64_t seed);

// Serialization: CSV with an "x0,x1" header, and a binary little-endian
// format with a uint64 count prefix.
void writePointsCsv(const PointBatch& batch, const std::filesystem::path& path);
PointBatch readPointsCsv(const std::filesystem::path& path);
void writePointsBinary(const PointBatch& batch,
                       const std::filesystem::path& path);
PointBatch readPointsBinary(const std::filesystem::path& path);

}  // namespace gradflow
