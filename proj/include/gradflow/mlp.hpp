#pragma once

#include <gradflow/types.hpp>

#include <cstdint>
#include <vector>

namespace gradflow {

/// Fixed fully-connected architecture: num_layers affine layers, swish
/// after every layer except the last, scalar output.
struct MlpConfig {
  int input_dim = 2;
  int hidden_dim = 256;
  int num_layers = 5;
};

class Mlp;

/// Values shaped like the network parameters (gradients, Adam moments).
/// Entry order matches the checkpoint layout: all weights (layer-major,
/// row-major), then all biases.
struct MlpGrad {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  static MlpGrad zeroLike(const Mlp& net);
  void setZero();
  void add(const MlpGrad& other);
  void axpy(double alpha, const MlpGrad& other);
  void scale(double alpha);
  double squaredNorm() const;
  double norm() const;

  Index entryCount() const;
  double entry(Index i) const;
  void setEntry(Index i, double v);
};

struct HvpResult {
  Mat grad;  // d x B, per-column input gradient
  Mat hvp;   // d x B, per-column Hessian-vector product
};

struct MixedSecondResult {
  Mat grad;
  Mat hvp;
  MlpGrad mixed;  // d/dtheta of sum_b coeff_b <grad E(x_b), v_b>
};

struct TraceGradResult {
  Vec trace;        // per-column tr[Hessian]
  Mat trace_grad_x; // column b = coeff_b * d(trace)/dx at x_b
  MlpGrad trace_grad_params;  // d/dtheta of sum_b coeff_b tr[Hessian(x_b)]
};

struct GradAndTraceResult {
  Mat grad;
  Vec trace;
};

/// Reusable buffers for the engine passes. Hot loops construct one per
/// worker and hand it to consecutive calls of the same shape, so layer
/// buffers are allocated once instead of per call. Purely a cache; safe to
/// default-construct anywhere, never shared between threads.
struct MlpScratch {
  std::vector<Mat> A, Z, S, F1, F2, F3;
  std::vector<Mat> GZ, GA, GZd, GAd, Zd, Ad;
  std::vector<Mat> A1, A2, Z1, Z2, Zb0, Zb1, Zb2, Ab0, Ab1, Ab2;
  Mat dir, tmp1, tmp2;
};

/// The energy network E: R^d -> R together with its differentiation engine.
///
/// All derivatives are exact and layer-local: reverse mode for input and
/// parameter gradients, forward-over-reverse for Hessian-vector products,
/// and reverse over second-order directional jets for derivatives of the
/// Hessian trace. Batched entry points treat matrix columns as samples.
class Mlp {
 public:
  using ParamGrad = MlpGrad;
  using Scratch = MlpScratch;

  explicit Mlp(MlpConfig cfg);
  static Mlp randomInit(MlpConfig cfg, std::uint64_t seed);

  const MlpConfig& config() const { return cfg_; }
  int dim() const { return cfg_.input_dim; }
  int numLayers() const { return cfg_.num_layers; }
  const Mat& weight(int l) const { return W_[l]; }
  Mat& weight(int l) { return W_[l]; }
  const Vec& bias(int l) const { return b_[l]; }
  Vec& bias(int l) { return b_[l]; }

  Index paramCount() const;
  double param(Index i) const;
  void setParam(Index i, double v);
  bool allFinite() const;

  // Single-point surface (EnergyModel).
  double energy(const Vec& x) const;
  Vec grad(const Vec& x) const;
  double hessianTrace(const Vec& x) const;
  Vec hessianVec(const Vec& x, const Vec& v) const;

  // Batched engine. A caller-held scratch avoids per-call allocation in
  // loops; passing nullptr uses a local one.
  Vec energyBatch(const Mat& X) const;
  Mat gradBatch(const Mat& X, MlpScratch* scratch = nullptr) const;
  GradAndTraceResult gradAndTrace(const Mat& X,
                                  MlpScratch* scratch = nullptr) const;
  Vec hessianTraceBatch(const Mat& X, MlpScratch* scratch = nullptr) const;
  HvpResult hessianVecBatch(const Mat& X, const Mat& V,
                            MlpScratch* scratch = nullptr) const;

  /// Gradient w.r.t. parameters of sum_b coeff_b * E(x_b).
  MlpGrad paramGrad(const Mat& X, const Vec& coeff,
                    MlpScratch* scratch = nullptr) const;

  /// One forward-over-reverse pass returning input gradients, H*v, and the
  /// parameter gradient of sum_b coeff_b * <grad E(x_b), v_b>.
  MixedSecondResult mixedSecondGrad(const Mat& X, const Mat& V,
                                    const Vec& coeff,
                                    MlpScratch* scratch = nullptr) const;

  /// Hessian-trace values plus their input and parameter gradients,
  /// via reverse mode over second-order jets along coordinate directions.
  TraceGradResult hessianTraceGrads(const Mat& X, const Vec& coeff,
                                    MlpScratch* scratch = nullptr) const;

  MlpGrad zeroGrad() const;
  void applyUpdate(const MlpGrad& delta);  // params += delta

 private:
  void checkInput(const Mat& X) const;

  MlpConfig cfg_;
  std::vector<Mat> W_;
  std::vector<Vec> b_;
};

}  // namespace gradflow
