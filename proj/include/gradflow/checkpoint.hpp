#pragma once

#include <gradflow/energy.hpp>
#include <gradflow/mlp.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace gradflow {

enum class EnergyKind { mlp, quadratic, linear };

std::string energyKindName(EnergyKind kind);
EnergyKind energyKindFromName(const std::string& name);

/// Checkpoint header; carries the sampler settings the model was trained
/// with so `sample`/`loglik`/`diagnose` run without extra flags.
struct CheckpointMeta {
  int version = 1;
  EnergyKind kind = EnergyKind::mlp;
  MlpConfig arch;
  std::uint64_t seed = 0;
  long iterations = 0;
  double time_horizon = 0.2;  // generator integration time T
  double eta = 0.1;           // chain step size
  int chain_steps = 40;
  double noise_scale = 0.0;
  std::string init_scheme = "uniform_fan_in";
  // analytic kinds
  double quad_scale = 1.0;
  Vec linear_w;
  double linear_b = 0.0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::optional<Mlp> mlp;  // present iff meta.kind == mlp
};

/// Binary format: uint32 little-endian JSON header length, UTF-8 JSON
/// header, then (for the mlp kind) all weights and all biases as
/// little-endian float64, layer-major, row-major. Round-trips bit-exactly.
/// Analytic kinds store their parameters in the header and have no payload.
void saveCheckpoint(const std::filesystem::path& path, const Mlp& net,
                    const CheckpointMeta& meta);
void saveQuadraticCheckpoint(const std::filesystem::path& path, double scale,
                             CheckpointMeta meta = {});
void saveLinearCheckpoint(const std::filesystem::path& path, const Vec& w,
                          double b, CheckpointMeta meta = {});
Checkpoint loadCheckpoint(const std::filesystem::path& path);

/// Calls fn with the checkpoint's energy as its concrete type.
template <class Fn>
decltype(auto) withEnergy(const Checkpoint& ck, Fn&& fn) {
  switch (ck.meta.kind) {
    case EnergyKind::mlp:
      return fn(*ck.mlp);
    case EnergyKind::quadratic:
      return fn(QuadraticEnergy(ck.meta.quad_scale, ck.meta.arch.input_dim));
    case EnergyKind::linear:
      return fn(LinearEnergy(ck.meta.linear_w, ck.meta.linear_b));
  }
  throw UsageError("unknown checkpoint kind");
}

}  // namespace gradflow
