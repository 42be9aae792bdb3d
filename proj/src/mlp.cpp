#include <gradflow/mlp.hpp>

#include <gradflow/rng.hpp>

#include <cmath>

namespace gradflow {

// ---------------------------------------------------------------------------
// MlpGrad

MlpGrad MlpGrad::zeroLike(const Mlp& net) {
  MlpGrad g;
  const int L = net.numLayers();
  g.weights.reserve(L);
  g.biases.reserve(L);
  for (int l = 0; l < L; ++l) {
    g.weights.push_back(Mat::Zero(net.weight(l).rows(), net.weight(l).cols()));
    g.biases.push_back(Vec::Zero(net.bias(l).size()));
  }
  return g;
}

void MlpGrad::setZero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpGrad::add(const MlpGrad& other) { axpy(1.0, other); }

void MlpGrad::axpy(double alpha, const MlpGrad& other) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += alpha * other.weights[l];
    biases[l] += alpha * other.biases[l];
  }
}

void MlpGrad::scale(double alpha) {
  for (auto& w : weights) w *= alpha;
  for (auto& b : biases) b *= alpha;
}

double MlpGrad::squaredNorm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

double MlpGrad::norm() const { return std::sqrt(squaredNorm()); }

Index MlpGrad::entryCount() const {
  Index n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

namespace {

// Locates linear entry i in the weights-then-biases, row-major layout.
template <class Weights, class Biases>
double* locateEntry(Weights& weights, Biases& biases, Index i) {
  for (auto& w : weights) {
    if (i < w.size()) {
      const Index r = i / w.cols();
      const Index c = i % w.cols();
      return &w(r, c);
    }
    i -= w.size();
  }
  for (auto& b : biases) {
    if (i < b.size()) return &b(i);
    i -= b.size();
  }
  throw UsageError("parameter index out of range");
}

void ensureSlots(std::vector<Mat>& v, int n) {
  if (static_cast<int>(v.size()) != n) v.resize(static_cast<size_t>(n));
}

}  // namespace

double MlpGrad::entry(Index i) const {
  return *locateEntry(const_cast<std::vector<Mat>&>(weights),
                      const_cast<std::vector<Vec>&>(biases), i);
}

void MlpGrad::setEntry(Index i, double v) {
  *locateEntry(weights, biases, i) = v;
}

// ---------------------------------------------------------------------------
// Mlp construction

Mlp::Mlp(MlpConfig cfg) : cfg_(cfg) {
  if (cfg.input_dim < 1 || cfg.hidden_dim < 1 || cfg.num_layers < 1)
    throw UsageError("MlpConfig dimensions must be positive");
  const int L = cfg.num_layers;
  W_.reserve(L);
  b_.reserve(L);
  for (int l = 0; l < L; ++l) {
    const int in = (l == 0) ? cfg.input_dim : cfg.hidden_dim;
    const int out = (l == L - 1) ? 1 : cfg.hidden_dim;
    W_.push_back(Mat::Zero(out, in));
    b_.push_back(Vec::Zero(out));
  }
}

Mlp Mlp::randomInit(MlpConfig cfg, std::uint64_t seed) {
  Mlp net(cfg);
  for (int l = 0; l < cfg.num_layers; ++l) {
    RngStream rng(seed, static_cast<std::uint64_t>(l));
    Mat& W = net.W_[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(W.cols()));
    for (Index r = 0; r < W.rows(); ++r)
      for (Index c = 0; c < W.cols(); ++c)
        W(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  }
  return net;
}

Index Mlp::paramCount() const {
  Index n = 0;
  for (const auto& w : W_) n += w.size();
  for (const auto& b : b_) n += b.size();
  return n;
}

double Mlp::param(Index i) const {
  return *locateEntry(const_cast<std::vector<Mat>&>(W_),
                      const_cast<std::vector<Vec>&>(b_), i);
}

void Mlp::setParam(Index i, double v) { *locateEntry(W_, b_, i) = v; }

bool Mlp::allFinite() const {
  for (const auto& w : W_)
    if (!w.allFinite()) return false;
  for (const auto& b : b_)
    if (!b.allFinite()) return false;
  return true;
}

MlpGrad Mlp::zeroGrad() const { return MlpGrad::zeroLike(*this); }

void Mlp::applyUpdate(const MlpGrad& delta) {
  for (int l = 0; l < cfg_.num_layers; ++l) {
    W_[l] += delta.weights[l];
    b_[l] += delta.biases[l];
  }
}

void Mlp::checkInput(const Mat& X) const {
  if (X.rows() != cfg_.input_dim)
    throw UsageError("input has " + std::to_string(X.rows()) +
                     " rows, expected " + std::to_string(cfg_.input_dim));
}

// ---------------------------------------------------------------------------
// Engine passes
//
// Notation (per layer l, batch as columns):
//   Z[l] = W[l] A[l] + b[l],  A[l+1] = swish(Z[l])  for l < L-1,
//   energy = Z[L-1] (one row).
// Reverse quantities: GZ[l] = d(out)/dZ[l], GA[l] = d(out)/dA[l]. Dotted
// quantities (Zd, Ad, GZd, GAd) are forward-mode tangents along direction
// columns. F1..F3 cache the swish derivatives of the cached sigmoid:
//   F1 = S*(1 + z*(1-S))
//   F2 = s1*(2 + z*(1-2S)),  s1 = S*(1-S)
//   F3 = 3*s2 + z*s3,        s2 = s1*(1-2S), s3 = s1*((1-2S)^2 - 2*s1)

namespace {

void runForward(const std::vector<Mat>& W, const std::vector<Vec>& b,
                const Mat& X, MlpScratch& s) {
  const int L = static_cast<int>(W.size());
  ensureSlots(s.A, L);
  ensureSlots(s.Z, L);
  ensureSlots(s.S, L);
  s.A[0] = X;
  for (int l = 0; l < L; ++l) {
    s.Z[l].noalias() = W[l] * s.A[l];
    s.Z[l].colwise() += b[l];
    if (l < L - 1) {
      s.S[l] = (1.0 / (1.0 + (-s.Z[l].array()).exp())).matrix();
      s.A[l + 1] = s.Z[l].cwiseProduct(s.S[l]);
    }
  }
}

void fillF1(const MlpScratch& sc, std::vector<Mat>& F1, int L) {
  ensureSlots(F1, L);
  for (int l = 0; l < L - 1; ++l) {
    const auto z = sc.Z[l].array();
    const auto sg = sc.S[l].array();
    F1[l] = (sg * (1.0 + z * (1.0 - sg))).matrix();
  }
}

void fillF2(const MlpScratch& sc, std::vector<Mat>& F2, int L) {
  ensureSlots(F2, L);
  for (int l = 0; l < L - 1; ++l) {
    const auto z = sc.Z[l].array();
    const auto sg = sc.S[l].array();
    F2[l] = (sg * (1.0 - sg) * (2.0 + z * (1.0 - 2.0 * sg))).matrix();
  }
}

void fillF3(const MlpScratch& sc, std::vector<Mat>& F3, int L) {
  ensureSlots(F3, L);
  for (int l = 0; l < L - 1; ++l) {
    const auto z = sc.Z[l].array();
    const auto sg = sc.S[l].array();
    const auto s1 = sg * (1.0 - sg);
    const auto om2 = 1.0 - 2.0 * sg;
    F3[l] = (3.0 * s1 * om2 + z * s1 * (om2 * om2 - 2.0 * s1)).matrix();
  }
}

// Reverse sweep with per-sample output adjoint `seed` (one row).
void runReverse(const std::vector<Mat>& W, MlpScratch& s, const Mat& seed) {
  const int L = static_cast<int>(W.size());
  ensureSlots(s.GZ, L);
  ensureSlots(s.GA, L);
  s.GZ[L - 1] = seed;
  for (int l = L - 1; l >= 0; --l) {
    s.GA[l].noalias() = W[l].transpose() * s.GZ[l];
    if (l > 0) s.GZ[l - 1] = s.F1[l - 1].cwiseProduct(s.GA[l]);
  }
}

// Forward tangents along direction columns V.
void runTangentForward(const std::vector<Mat>& W, MlpScratch& s,
                       const Mat& V) {
  const int L = static_cast<int>(W.size());
  ensureSlots(s.Zd, L);
  ensureSlots(s.Ad, L);
  s.Ad[0] = V;
  for (int l = 0; l < L; ++l) {
    s.Zd[l].noalias() = W[l] * s.Ad[l];
    if (l < L - 1) s.Ad[l + 1] = s.F1[l].cwiseProduct(s.Zd[l]);
  }
}

// Tangent of the reverse sweep; needs GA from the primal reverse and F2.
void runTangentReverse(const std::vector<Mat>& W, MlpScratch& s) {
  const int L = static_cast<int>(W.size());
  const Index B = s.A[0].cols();
  ensureSlots(s.GZd, L);
  ensureSlots(s.GAd, L);
  s.GZd[L - 1].setZero(1, B);
  for (int l = L - 1; l >= 0; --l) {
    s.GAd[l].noalias() = W[l].transpose() * s.GZd[l];
    if (l > 0) {
      const int m = l - 1;
      s.GZd[m] = s.F2[m].cwiseProduct(s.Zd[m]).cwiseProduct(s.GA[l]) +
                 s.F1[m].cwiseProduct(s.GAd[l]);
    }
  }
}

}  // namespace

Vec Mlp::energyBatch(const Mat& X) const {
  checkInput(X);
  const int L = cfg_.num_layers;
  Mat cur = X;
  for (int l = 0; l < L; ++l) {
    Mat z = W_[l] * cur;
    z.colwise() += b_[l];
    if (l < L - 1)
      cur = z.cwiseProduct((1.0 / (1.0 + (-z.array()).exp())).matrix());
    else
      cur = std::move(z);
  }
  return cur.row(0).transpose();
}

Mat Mlp::gradBatch(const Mat& X, MlpScratch* scratch) const {
  checkInput(X);
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;
  runForward(W_, b_, X, s);
  fillF1(s, s.F1, cfg_.num_layers);
  runReverse(W_, s, Mat::Ones(1, X.cols()));
  return s.GA[0];
}

MlpGrad Mlp::paramGrad(const Mat& X, const Vec& coeff,
                       MlpScratch* scratch) const {
  checkInput(X);
  if (coeff.size() != X.cols())
    throw UsageError("coeff length must equal batch size");
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;
  runForward(W_, b_, X, s);
  fillF1(s, s.F1, cfg_.num_layers);
  runReverse(W_, s, coeff.transpose());
  MlpGrad g = zeroGrad();
  for (int l = 0; l < cfg_.num_layers; ++l) {
    g.weights[l].noalias() = s.GZ[l] * s.A[l].transpose();
    g.biases[l] = s.GZ[l].rowwise().sum();
  }
  return g;
}

HvpResult Mlp::hessianVecBatch(const Mat& X, const Mat& V,
                               MlpScratch* scratch) const {
  checkInput(X);
  checkInput(V);
  if (V.cols() != X.cols()) throw UsageError("V must match X column count");
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;
  runForward(W_, b_, X, s);
  fillF1(s, s.F1, cfg_.num_layers);
  fillF2(s, s.F2, cfg_.num_layers);
  runReverse(W_, s, Mat::Ones(1, X.cols()));
  runTangentForward(W_, s, V);
  runTangentReverse(W_, s);
  return HvpResult{s.GA[0], s.GAd[0]};
}

MixedSecondResult Mlp::mixedSecondGrad(const Mat& X, const Mat& V,
                                       const Vec& coeff,
                                       MlpScratch* scratch) const {
  checkInput(X);
  checkInput(V);
  if (V.cols() != X.cols()) throw UsageError("V must match X column count");
  if (coeff.size() != X.cols())
    throw UsageError("coeff length must equal batch size");
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;
  runForward(W_, b_, X, s);
  fillF1(s, s.F1, cfg_.num_layers);
  fillF2(s, s.F2, cfg_.num_layers);
  runReverse(W_, s, Mat::Ones(1, X.cols()));
  runTangentForward(W_, s, V);
  runTangentReverse(W_, s);

  // d/dW of <grad, v> picks up both the tangent of GZ and the tangent of A.
  const auto crow = coeff.transpose().array();
  MlpGrad mixed = zeroGrad();
  for (int l = 0; l < cfg_.num_layers; ++l) {
    s.tmp1 = (s.GZd[l].array().rowwise() * crow).matrix();
    s.tmp2 = (s.GZ[l].array().rowwise() * crow).matrix();
    mixed.weights[l].noalias() = s.tmp1 * s.A[l].transpose();
    mixed.weights[l].noalias() += s.tmp2 * s.Ad[l].transpose();
    mixed.biases[l] = s.tmp1.rowwise().sum();
  }
  return MixedSecondResult{s.GA[0], s.GAd[0], std::move(mixed)};
}

Vec Mlp::hessianTraceBatch(const Mat& X, MlpScratch* scratch) const {
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;
  return gradAndTrace(X, &s).trace;
}

GradAndTraceResult Mlp::gradAndTrace(const Mat& X, MlpScratch* scratch) const {
  checkInput(X);
  const Index B = X.cols();
  const int d = cfg_.input_dim;
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;
  runForward(W_, b_, X, s);
  fillF1(s, s.F1, cfg_.num_layers);
  fillF2(s, s.F2, cfg_.num_layers);
  runReverse(W_, s, Mat::Ones(1, B));
  Vec trace = Vec::Zero(B);
  for (int i = 0; i < d; ++i) {
    s.dir.setZero(d, B);
    s.dir.row(i).setOnes();
    runTangentForward(W_, s, s.dir);
    runTangentReverse(W_, s);
    trace += s.GAd[0].row(i).transpose();
  }
  return GradAndTraceResult{s.GA[0], std::move(trace)};
}

// Second-order jets: along direction columns u carry (value, first, second)
// derivatives; the output's second component is u^T H u per sample. A
// reverse sweep over that program yields input and parameter gradients of
// the quadratic form, hence of the Hessian trace when summed over the
// coordinate directions.
TraceGradResult Mlp::hessianTraceGrads(const Mat& X, const Vec& coeff,
                                       MlpScratch* scratch) const {
  checkInput(X);
  if (coeff.size() != X.cols())
    throw UsageError("coeff length must equal batch size");
  const Index B = X.cols();
  const int d = cfg_.input_dim;
  const int L = cfg_.num_layers;
  MlpScratch local;
  MlpScratch& s = scratch ? *scratch : local;

  runForward(W_, b_, X, s);
  fillF1(s, s.F1, L);
  fillF2(s, s.F2, L);
  fillF3(s, s.F3, L);

  Vec trace = Vec::Zero(B);
  Mat trace_grad_x = Mat::Zero(d, B);
  MlpGrad gparams = zeroGrad();

  ensureSlots(s.A1, L);
  ensureSlots(s.A2, L);
  ensureSlots(s.Z1, L);
  ensureSlots(s.Z2, L);
  ensureSlots(s.Zb0, L);
  ensureSlots(s.Zb1, L);
  ensureSlots(s.Zb2, L);
  ensureSlots(s.Ab0, L);
  ensureSlots(s.Ab1, L);
  ensureSlots(s.Ab2, L);

  for (int i = 0; i < d; ++i) {
    // Jet forward along u = e_i.
    s.A1[0].setZero(d, B);
    s.A1[0].row(i).setOnes();
    s.A2[0].setZero(d, B);
    for (int l = 0; l < L; ++l) {
      s.Z1[l].noalias() = W_[l] * s.A1[l];
      s.Z2[l].noalias() = W_[l] * s.A2[l];
      if (l < L - 1) {
        s.A1[l + 1] = s.F1[l].cwiseProduct(s.Z1[l]);
        s.A2[l + 1] = s.F2[l].cwiseProduct(s.Z1[l].cwiseProduct(s.Z1[l])) +
                      s.F1[l].cwiseProduct(s.Z2[l]);
      }
    }
    trace += s.Z2[L - 1].row(0).transpose();

    // Reverse over the jet program, seeded on the second-order output.
    s.Zb0[L - 1].setZero(1, B);
    s.Zb1[L - 1].setZero(1, B);
    s.Zb2[L - 1] = coeff.transpose();
    for (int l = L - 1; l >= 0; --l) {
      s.Ab0[l].noalias() = W_[l].transpose() * s.Zb0[l];
      s.Ab1[l].noalias() = W_[l].transpose() * s.Zb1[l];
      s.Ab2[l].noalias() = W_[l].transpose() * s.Zb2[l];
      gparams.weights[l].noalias() += s.Zb0[l] * s.A[l].transpose();
      gparams.weights[l].noalias() += s.Zb1[l] * s.A1[l].transpose();
      gparams.weights[l].noalias() += s.Zb2[l] * s.A2[l].transpose();
      gparams.biases[l] += s.Zb0[l].rowwise().sum();
      if (l > 0) {
        const int m = l - 1;
        s.tmp1 = s.Z1[m].cwiseProduct(s.Z1[m]);  // squared first-order jet
        s.Zb0[m] = s.F1[m].cwiseProduct(s.Ab0[l]) +
                   s.F2[m].cwiseProduct(s.Z1[m]).cwiseProduct(s.Ab1[l]) +
                   (s.F3[m].cwiseProduct(s.tmp1) +
                    s.F2[m].cwiseProduct(s.Z2[m]))
                       .cwiseProduct(s.Ab2[l]);
        s.Zb1[m] = s.F1[m].cwiseProduct(s.Ab1[l]) +
                   2.0 * s.F2[m].cwiseProduct(s.Z1[m]).cwiseProduct(s.Ab2[l]);
        s.Zb2[m] = s.F1[m].cwiseProduct(s.Ab2[l]);
      }
    }
    trace_grad_x += s.Ab0[0];
  }
  return TraceGradResult{std::move(trace), std::move(trace_grad_x),
                         std::move(gparams)};
}

// ---------------------------------------------------------------------------
// Single-point surface

double Mlp::energy(const Vec& x) const { return energyBatch(x)(0); }

Vec Mlp::grad(const Vec& x) const { return gradBatch(x).col(0); }

double Mlp::hessianTrace(const Vec& x) const {
  return hessianTraceBatch(x)(0);
}

Vec Mlp::hessianVec(const Vec& x, const Vec& v) const {
  return hessianVecBatch(x, v).hvp.col(0);
}

}  // namespace gradflow
