#pragma once

// Toy-scale numerics for low-rank adaptation of a quantized model: the adapter update,
// parameter counts, affine quantization, sequence negative log-likelihood and the analytic
// adapter gradient with a finite-difference check.

#include "burex/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace burex::lora {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeMismatchError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

class UnknownTokenError : public std::out_of_range
{
public:
  using std::out_of_range::out_of_range;
};

struct AdapterConfig
{
  int r = 64;
  double alpha = 16.0;
  int d = 0;
  int k = 0;
  double dropout = 0.1;  // recorded only; every check here is deterministic

  [[nodiscard]] double scale() const noexcept { return alpha / r; }

  void validate() const
  {
    if (d < 1 || k < 1) throw std::invalid_argument("adapter dimensions must be positive");
    if (r < 1 || r > std::min(d, k)) throw std::invalid_argument("adapter rank must lie in [1, min(d, k)]");
    if (!(alpha > 0.0)) throw std::invalid_argument("adapter alpha must be positive");
  }
};

/// (alpha / r) * B * A for B of shape d x r and A of shape r x k.
inline Matrix lora_delta(const Matrix& B, const Matrix& A, double alpha, int r)
{
  if (r < 1 || B.cols() != r || A.rows() != r) {
    throw ShapeMismatchError("lora_delta: B is " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()) + ", A is " +
                             std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + ", r = " + std::to_string(r));
  }
  return (alpha / r) * (B * A);
}

inline Eigen::Index numerical_rank(const Matrix& m, double tolerance = 1e-10)
{
  const Vector sv = Eigen::JacobiSVD<Matrix>(m).singularValues();
  return (sv.array() > tolerance).count();
}

struct ParamCounts
{
  std::uint64_t full = 0;
  std::uint64_t adapter = 0;
  bool adapter_smaller = false;
};

/// Trainable parameters of a full d x k update versus a rank-r adapter.
inline ParamCounts param_counts(std::uint64_t d, std::uint64_t k, std::uint64_t r)
{
  if (d == 0 || k == 0 || r == 0) throw std::invalid_argument("param_counts: dimensions must be positive");
  ParamCounts c;
  c.full = d * k;
  c.adapter = r * (d + k);
  c.adapter_smaller = c.adapter < c.full;
  return c;
}

inline double quantization_step(const Matrix& theta, int bits)
{
  if (theta.size() == 0) return 0.0;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return (theta.maxCoeff() - theta.minCoeff()) / levels;
}

/// Per-matrix affine quantization onto 2^bits evenly spaced levels over [min, max],
/// returned in dequantized form.
inline Matrix quantize_dequantize(const Matrix& theta, int bits = 4)
{
  if (bits < 2 || bits > 30) throw std::invalid_argument("quantize_dequantize: bits must lie in [2, 30]");
  if (theta.size() == 0) return theta;
  const double lo = theta.minCoeff();
  const double step = quantization_step(theta, bits);
  if (step == 0.0) return theta;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return theta.unaryExpr([&](double v) {
    const double q = std::clamp(std::round((v - lo) / step), 0.0, levels);
    return lo + q * step;
  });
}

// ---------------------------------------------------------------------------
// Toy autoregressive models

using TokenSpan = std::span<const std::size_t>;

/// A model maps (context, prefix) to a distribution over the vocabulary.
template <class M>
concept ToyModel = requires(const M& m, std::size_t context, TokenSpan prefix) {
  { m.vocab_size() } -> std::convertible_to<std::size_t>;
  { m.distribution(context, prefix) } -> std::convertible_to<Vector>;
};

class UniformModel
{
public:
  explicit UniformModel(std::size_t vocab)
  : vocab_(vocab)
  {}

  [[nodiscard]] std::size_t vocab_size() const noexcept { return vocab_; }

  [[nodiscard]] Vector distribution(std::size_t, TokenSpan) const
  {
    return Vector::Constant(static_cast<Eigen::Index>(vocab_), 1.0 / static_cast<double>(vocab_));
  }

private:
  std::size_t vocab_;
};

/// Any conditional distribution given as a callable.
class FunctionModel
{
public:
  using Fn = std::function<Vector(std::size_t, TokenSpan)>;

  FunctionModel(std::size_t vocab, Fn fn)
  : vocab_(vocab), fn_(std::move(fn))
  {}

  [[nodiscard]] std::size_t vocab_size() const noexcept { return vocab_; }
  [[nodiscard]] Vector distribution(std::size_t context, TokenSpan prefix) const { return fn_(context, prefix); }

private:
  std::size_t vocab_;
  Fn fn_;
};

inline Vector softmax(const Vector& logits)
{
  const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Logits from a single adapted weight matrix:
///   W = theta_q + (alpha / r) B A                         (d x k)
///   f_j = ctx_embed[:, x] + tok_embed[:, s_{j-1}]         (k, previous token is BOS at j = 1)
///   p(. | x, s_<j) = softmax(U W f_j)                     (U is V x d)
/// Only B and A are trained.
struct LowRankLogitModel
{
  Matrix theta_q;
  Matrix B;
  Matrix A;
  double alpha = 1.0;
  int r = 1;
  Matrix ctx_embed;  // k x contexts
  Matrix tok_embed;  // k x (V + 1); the last column is BOS
  Matrix U;          // V x d

  [[nodiscard]] std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(U.rows()); }
  [[nodiscard]] double scale() const noexcept { return alpha / r; }
  [[nodiscard]] Matrix weight() const { return theta_q + lora_delta(B, A, alpha, r); }

  [[nodiscard]] Vector features(std::size_t context, TokenSpan prefix) const
  {
    const auto prev = prefix.empty() ? vocab_size() : prefix.back();
    return ctx_embed.col(static_cast<Eigen::Index>(context)) + tok_embed.col(static_cast<Eigen::Index>(prev));
  }

  [[nodiscard]] Vector distribution(std::size_t context, TokenSpan prefix) const
  {
    return softmax(U * (weight() * features(context, prefix)));
  }

  /// Random instance; theta_q is the 4-bit quantization of a random base matrix.
  static LowRankLogitModel random(int d, int k, int r, std::size_t vocab, std::size_t contexts, std::uint64_t seed,
                                  double alpha = 2.0)
  {
    std::mt19937_64 rng = substream(seed, 0);
    auto fill = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
      Matrix m(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * (2.0 * uniform01(rng) - 1.0);
      return m;
    };
    LowRankLogitModel m;
    m.theta_q = quantize_dequantize(fill(d, k, 1.0), 4);
    m.B = fill(d, r, 0.5);
    m.A = fill(r, k, 0.5);
    m.alpha = alpha;
    m.r = r;
    m.ctx_embed = fill(k, static_cast<Eigen::Index>(contexts), 1.0);
    m.tok_embed = fill(k, static_cast<Eigen::Index>(vocab) + 1, 1.0);
    m.U = fill(static_cast<Eigen::Index>(vocab), d, 1.0);
    return m;
  }
};

static_assert(ToyModel<UniformModel>);
static_assert(ToyModel<FunctionModel>);
static_assert(ToyModel<LowRankLogitModel>);

struct NllResult
{
  double nll = 0.0;          // -sum_j log p(s_j | x, s_<j)
  double product_nll = 0.0;  // -log prod_j p(s_j | x, s_<j)
};

template <ToyModel M>
NllResult sequence_nll(const M& model, std::size_t context, TokenSpan s)
{
  NllResult out;
  double product = 1.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] >= model.vocab_size()) throw UnknownTokenError("token " + std::to_string(s[j]) + " outside vocabulary");
    const Vector p = model.distribution(context, s.first(j));
    const double pj = p(static_cast<Eigen::Index>(s[j]));
    out.nll -= std::log(pj);
    product *= pj;
  }
  out.product_nll = -std::log(product);
  return out;
}

struct Sample
{
  std::size_t context = 0;
  std::vector<std::size_t> tokens;
};

/// Empirical mean of the sequence NLL over a finite sample set.
template <ToyModel M>
double expected_nll(const M& model, std::span<const Sample> samples)
{
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& smp : samples) total += sequence_nll(model, smp.context, smp.tokens).nll;
  return total / static_cast<double>(samples.size());
}

struct AdapterGradient
{
  Matrix dB;
  Matrix dA;
};

/// Gradient of the sequence NLL with respect to B and A:
///   g_j = p_j - onehot(s_j),  G = sum_j (U^T g_j) f_j^T,  dB = c G A^T,  dA = c B^T G,  c = alpha / r.
inline AdapterGradient adapter_gradient(const LowRankLogitModel& m, std::size_t context, TokenSpan s)
{
  const Matrix W = m.weight();
  Matrix G = Matrix::Zero(W.rows(), W.cols());
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] >= m.vocab_size()) throw UnknownTokenError("token " + std::to_string(s[j]) + " outside vocabulary");
    const Vector f = m.features(context, s.first(j));
    Vector g = softmax(m.U * (W * f));
    g(static_cast<Eigen::Index>(s[j])) -= 1.0;
    G.noalias() += (m.U.transpose() * g) * f.transpose();
  }
  return {m.scale() * G * m.A.transpose(), m.scale() * m.B.transpose() * G};
}

struct GradCheckResult
{
  double max_rel_error = 0.0;
  double max_rel_error_B = 0.0;
  double max_rel_error_A = 0.0;
  AdapterGradient analytic;
  AdapterGradient numeric;
};

/// Compares adapter_gradient with five-point central differences on every entry of B and A.
/// Relative error per entry is |analytic - numeric| / (|analytic| + 1e-8). The fourth-order
/// stencil matters: with the two-point form, roundoff alone exceeds 1e-4 relative error on
/// entries near 1e-6.
inline GradCheckResult adapter_grad_check(LowRankLogitModel m, std::size_t context, TokenSpan s, double eps = 1e-3)
{
  GradCheckResult out;
  out.analytic = adapter_gradient(m, context, s);
  auto numeric_for = [&](Matrix& param) {
    Matrix grad(param.rows(), param.cols());
    for (Eigen::Index j = 0; j < param.cols(); ++j) {
      for (Eigen::Index i = 0; i < param.rows(); ++i) {
        const double saved = param(i, j);
        auto at = [&](double offset) {
          param(i, j) = saved + offset;
          return sequence_nll(m, context, s).nll;
        };
        const double p2 = at(2 * eps), p1 = at(eps), m1 = at(-eps), m2 = at(-2 * eps);
        param(i, j) = saved;
        grad(i, j) = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
      }
    }
    return grad;
  };
  out.numeric.dB = numeric_for(m.B);
  out.numeric.dA = numeric_for(m.A);
  auto rel = [](const Matrix& a, const Matrix& n) {
    if (a.size() == 0) return 0.0;
    return ((a - n).array().abs() / (a.array().abs() + 1e-8)).maxCoeff();
  };
  out.max_rel_error_B = rel(out.analytic.dB, out.numeric.dB);
  out.max_rel_error_A = rel(out.analytic.dA, out.numeric.dA);
  out.max_rel_error = std::max(out.max_rel_error_B, out.max_rel_error_A);
  return out;
}

/// Plain gradient descent on (B, A). Returns the loss before each step and after the last.
inline std::vector<double> gradient_descent(LowRankLogitModel& m, std::size_t context, TokenSpan s, int steps,
                                            double learning_rate)
{
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps) + 1);
  losses.push_back(sequence_nll(m, context, s).nll);
  for (int step = 0; step < steps; ++step) {
    const AdapterGradient g = adapter_gradient(m, context, s);
    m.B -= learning_rate * g.dB;
    m.A -= learning_rate * g.dA;
    losses.push_back(sequence_nll(m, context, s).nll);
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Self-check table

struct CheckRow
{
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Runs every numerical property on seeded toy instances.
inline std::vector<CheckRow> verify_adapter_math(std::uint64_t seed = 0)
{
  std::vector<CheckRow> rows;
  auto add = [&](std::string name, double measured, double threshold, bool pass) {
    rows.push_back({std::move(name), measured, threshold, pass});
  };

  {
    Matrix B(2, 1), A(1, 2), expect(2, 2);
    B << 1, 0;
    A << 2, 3;
    expect << 4, 6, 0, 0;
    const double err = (lora_delta(B, A, 2.0, 1) - expect).cwiseAbs().maxCoeff();
    add("lora_delta worked example", err, 0.0, err == 0.0);
  }
  {
    const auto m = LowRankLogitModel::random(8, 8, 2, 3, 1, seed);
    const Vector sv = Eigen::JacobiSVD<Matrix>(lora_delta(m.B, m.A, m.alpha, m.r)).singularValues();
    const double tail = sv.tail(6).maxCoeff();
    add("rank(delta) <= r (d=k=8, r=2)", tail, 1e-10, tail < 1e-10);
  }
  {
    const auto m = LowRankLogitModel::random(6, 5, 2, 3, 1, seed + 1);
    const Matrix A2 = LowRankLogitModel::random(6, 5, 2, 3, 1, seed + 2).A;
    const double lin = (lora_delta(m.B, m.A + A2, m.alpha, m.r) - lora_delta(m.B, m.A, m.alpha, m.r) -
                        lora_delta(m.B, A2, m.alpha, m.r))
                           .cwiseAbs()
                           .maxCoeff();
    add("lora_delta linear in A", lin, 1e-12, lin <= 1e-12);
    const double sc = (lora_delta(m.B, m.A, 2 * m.alpha, m.r) - 2.0 * lora_delta(m.B, m.A, m.alpha, m.r)).cwiseAbs().maxCoeff();
    add("doubling alpha doubles delta", sc, 1e-12, sc <= 1e-12);
  }
  {
    const auto c = param_counts(4096, 4096, 64);
    add("param_counts(4096, 4096, 64)", static_cast<double>(c.adapter), 524288.0,
        c.full == 16777216ULL && c.adapter == 524288ULL && c.adapter_smaller);
  }
  {
    std::mt19937_64 rng = substream(seed, 7);
    Matrix theta(16, 16);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = uniform01(rng);
    const double err = (quantize_dequantize(theta, 4) - theta).cwiseAbs().maxCoeff();
    const double bound = quantization_step(theta, 4) / 2.0 + 1e-12;
    add("4-bit quantization error <= step/2", err, bound, err <= bound);
  }
  {
    const std::vector<std::size_t> s{0, 1, 2};
    const auto nll = sequence_nll(UniformModel(4), 0, s);
    const double err = std::abs(nll.nll - 3.0 * std::log(4.0));
    add("uniform model NLL = t ln V", err, 1e-12, err <= 1e-12);
  }
  {
    const auto m = LowRankLogitModel::random(4, 5, 2, 5, 2, seed + 3);
    const std::vector<std::size_t> s{1, 4, 2};
    const auto nll = sequence_nll(m, 1, s);
    const double err = std::abs(nll.nll - nll.product_nll);
    add("NLL sum = -log product", err, 1e-12, err <= 1e-12);
    const auto check = adapter_grad_check(m, 1, s);
    add("adapter gradient vs finite differences", check.max_rel_error, 1e-4, check.max_rel_error < 1e-4);
  }
  {
    auto m = LowRankLogitModel::random(4, 5, 2, 5, 2, seed + 4);
    m.B.setZero();
    m.A.setZero();
    const std::vector<std::size_t> s{3, 0, 2};
    const auto check = adapter_grad_check(m, 0, s);
    const double worst = std::max(check.analytic.dA.cwiseAbs().maxCoeff(), check.numeric.dA.cwiseAbs().maxCoeff());
    add("dA = 0 at B = A = 0", worst, 0.0, worst == 0.0);
  }
  {
    auto m = LowRankLogitModel::random(4, 5, 2, 5, 2, seed + 5);
    const std::vector<std::size_t> s{2, 2, 4, 1};
    const auto losses = gradient_descent(m, 0, s, 20, 0.05);
    double worst_increase = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < losses.size(); ++i) worst_increase = std::max(worst_increase, losses[i] - losses[i - 1]);
    add("20 descent steps strictly decrease NLL", worst_increase, 0.0, worst_increase < 0.0);
  }
  return rows;
}

}  // namespace burex::lora
