// Test-side oracles: central finite differences over inputs and parameters,
// and a one-parameter toy energy that exercises the generic training-path
// templates with hand-computable values. Everything here is independent of
// the engine code it checks.
#pragma once

#include <gradflow/mlp.hpp>
#include <gradflow/rng.hpp>

#include <cmath>
#include <functional>

namespace oracles {

using gradflow::Index;
using gradflow::Mat;
using gradflow::Vec;

inline gradflow::Mlp smallNet(std::uint64_t seed, int hidden = 8,
                              int layers = 3) {
  gradflow::MlpConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = hidden;
  cfg.num_layers = layers;
  return gradflow::Mlp::randomInit(cfg, seed);
}

inline double relErr(double approx, double exact) {
  return std::abs(approx - exact) /
         std::max(std::abs(exact), 1e-12);
}

inline double vecRelErr(const Vec& approx, const Vec& exact) {
  return (approx - exact).norm() / std::max(exact.norm(), 1e-12);
}

/// Central finite difference of a scalar function of x.
inline Vec fdGradX(const std::function<double(const Vec&)>& f, const Vec& x,
                   double h = 1e-5) {
  Vec g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Central finite difference of a scalar functional over all parameters,
/// flattened in the checkpoint entry order.
inline Vec fdParamGrad(const std::function<double(const gradflow::Mlp&)>& f,
                       const gradflow::Mlp& net, double h = 1e-5) {
  gradflow::Mlp probe = net;
  const Index n = probe.paramCount();
  Vec g(n);
  for (Index i = 0; i < n; ++i) {
    const double orig = probe.param(i);
    probe.setParam(i, orig + h);
    const double fp = f(probe);
    probe.setParam(i, orig - h);
    const double fm = f(probe);
    probe.setParam(i, orig);
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Vec flatten(const gradflow::MlpGrad& g) {
  Vec out(g.entryCount());
  for (Index i = 0; i < out.size(); ++i) out[i] = g.entry(i);
  return out;
}

// ---------------------------------------------------------------------------
// One-parameter toy energy E_theta(x) = theta * ||x||^2 / 2. Satisfies the
// TrainableEnergy concept with a scalar parameter gradient, so the unroll
// recursion can be checked against hand-differentiated closed forms.

struct ScalarGrad {
  double v = 0.0;
  void add(const ScalarGrad& o) { v += o.v; }
  void axpy(double a, const ScalarGrad& o) { v += a * o.v; }
  void scale(double a) { v *= a; }
  double norm() const { return std::abs(v); }
};

class ScalarQuadEnergy {
 public:
  using ParamGrad = ScalarGrad;

  explicit ScalarQuadEnergy(double theta) : theta_(theta) {}

  int dim() const { return 2; }
  double theta() const { return theta_; }

  Vec energyBatch(const Mat& X) const {
    ++calls_energy;
    return 0.5 * theta_ * X.colwise().squaredNorm().transpose();
  }
  Mat gradBatch(const Mat& X) const {
    ++calls_grad;
    grad_cols += X.cols();
    return theta_ * X;
  }
  ScalarGrad paramGrad(const Mat& X, const Vec& coeff) const {
    // d/dtheta sum_b coeff_b E(x_b) = sum_b coeff_b ||x_b||^2 / 2
    const Vec sq = X.colwise().squaredNorm().transpose();
    return ScalarGrad{0.5 * sq.dot(coeff)};
  }
  ScalarGrad zeroGrad() const { return ScalarGrad{0.0}; }

  struct Mixed {
    Mat grad;
    Mat hvp;
    ScalarGrad mixed;
  };
  Mixed mixedSecondGrad(const Mat& X, const Mat& V, const Vec& coeff) const {
    // grad E = theta x, Hessian = theta I, <grad E, v> = theta <x, v>.
    Mixed r;
    r.grad = theta_ * X;
    r.hvp = theta_ * V;
    const Vec dots = X.cwiseProduct(V).colwise().sum().transpose();
    r.mixed = ScalarGrad{dots.dot(coeff)};
    return r;
  }

  mutable long calls_energy = 0;
  mutable long calls_grad = 0;
  mutable Index grad_cols = 0;

 private:
  double theta_;
};

}  // namespace oracles
