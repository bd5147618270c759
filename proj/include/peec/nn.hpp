#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "peec/matrix.hpp"
#include "peec/random.hpp"

namespace peec::nn {

/// A trainable parameter tensor paired with its gradient accumulator.
struct ParamRef {
  Matrix* value;
  Matrix* grad;
  std::string name;
};

// ---------------------------------------------------------------------------
// Layers. Batches are row-major: one sample per row.
// ---------------------------------------------------------------------------

/// Fully-connected layer, y = x W^T + b. W is out x in to match the usual
/// column-vector convention; b is kept as a 1 x out matrix so optimizers can
/// treat every parameter uniformly. Backward accumulates into gW/gb.
class DenseLayer {
public:
  DenseLayer(size_t in, size_t out, std::string name = "dense")
      : W(out, in), b(1, out), gW(out, in), gb(1, out),
        name_(std::move(name)) {}

  size_t in_dim() const { return W.cols(); }
  size_t out_dim() const { return W.rows(); }

  /// Glorot-uniform weights, zero biases.
  void init(RandomSource& rs) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    W = rand_uniform(rs, W.rows(), W.cols(), -limit, limit);
    b = Matrix(1, W.rows());
  }

  Matrix forward(const Matrix& x) {
    if (x.cols() != in_dim()) {
      throw ShapeError(name_ + ": input width " + std::to_string(x.cols()) +
                       " vs expected " + std::to_string(in_dim()));
    }
    input_ = x;
    has_input_ = true;
    Matrix y = matmul(x, transpose(W));
    for (size_t i = 0; i < y.rows(); ++i) {
      for (size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
    }
    return y;
  }

  Matrix backward(const Matrix& gy) {
    if (!has_input_) throw ValueError(name_ + ": backward before forward");
    if (gy.cols() != out_dim() || gy.rows() != input_.rows()) {
      throw ShapeError(name_ + ": upstream gradient " + gy.shape_str() +
                       " vs output " + std::to_string(input_.rows()) + "x" +
                       std::to_string(out_dim()));
    }
    gW = add(gW, matmul(transpose(gy), input_));
    gb = add(gb, col_reduce(gy, Reduce::Sum));
    return matmul(gy, W);
  }

  void zero_grad() {
    gW = Matrix(gW.rows(), gW.cols());
    gb = Matrix(1, gb.cols());
  }

  std::vector<ParamRef> params() {
    return {{&W, &gW, name_ + ".W"}, {&b, &gb, name_ + ".b"}};
  }

  Matrix W, b, gW, gb;

private:
  Matrix input_;
  bool has_input_ = false;
  std::string name_;
};

/// f(x) = x for x >= 0 else slope * x; derivative at exactly 0 is 1.
class LeakyRelu {
public:
  explicit LeakyRelu(double slope = 0.01) : slope_(slope) {}

  double slope() const { return slope_; }

  Matrix forward(const Matrix& x) {
    input_ = x;
    Matrix y = x;
    for (size_t i = 0; i < y.size(); ++i) {
      if (y.data()[i] < 0.0) y.data()[i] *= slope_;
    }
    return y;
  }

  Matrix backward(const Matrix& gy) {
    detail::require_same_shape(gy, input_, "leaky_relu backward");
    Matrix gx = gy;
    for (size_t i = 0; i < gx.size(); ++i) {
      if (input_.data()[i] < 0.0) gx.data()[i] *= slope_;
    }
    return gx;
  }

private:
  double slope_;
  Matrix input_;
};

enum class Mode { Train, Infer };

/// Inverted dropout: kept units are scaled by 1/(1-p) at train time so
/// inference is a plain identity.
class Dropout {
public:
  explicit Dropout(double p = 0.5) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw ValueError("Dropout: p must be in [0,1)");
  }

  double p() const { return p_; }

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rs = nullptr) {
    mode_ = mode;
    if (mode == Mode::Infer) return x;
    if (rs == nullptr) {
      throw ValueError("Dropout: train mode requires a random source");
    }
    mask_ = Matrix(x.rows(), x.cols());
    const double keep_scale = 1.0 / (1.0 - p_);
    for (size_t i = 0; i < mask_.size(); ++i) {
      mask_.data()[i] = rs->next_double() < p_ ? 0.0 : keep_scale;
    }
    return hadamard(x, mask_);
  }

  Matrix backward(const Matrix& gy) {
    if (mode_ == Mode::Infer) return gy;
    return hadamard(gy, mask_);
  }

private:
  double p_;
  Mode mode_ = Mode::Infer;
  Matrix mask_;
};

/// Gradient reversal: identity forward, -alpha * g backward. Turns the joint
/// minimization into a min-max game between the encoder and the heads.
class GradReversal {
public:
  explicit GradReversal(double alpha = 1.0) : alpha_(alpha) {
    if (alpha < 0.0) throw ValueError("GradReversal: alpha must be >= 0");
  }

  double alpha() const { return alpha_; }
  void set_alpha(double alpha) {
    if (alpha < 0.0) throw ValueError("GradReversal: alpha must be >= 0");
    alpha_ = alpha;
  }

  Matrix forward(const Matrix& x) const { return x; }
  Matrix backward(const Matrix& gy) const { return scale(gy, -alpha_); }

private:
  double alpha_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossResult {
  double value;
  Matrix grad;
};

/// Batch mean of per-sample squared L2 reconstruction error. The gradient is
/// with respect to x_hat.
inline LossResult mse_loss(const Matrix& x, const Matrix& x_hat) {
  detail::require_same_shape(x, x_hat, "mse_loss");
  const double inv_batch = 1.0 / static_cast<double>(x.rows());
  double value = 0.0;
  Matrix grad(x.rows(), x.cols());
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat.data()[i] - x.data()[i];
    value += d * d;
    grad.data()[i] = 2.0 * d * inv_batch;
  }
  return {value * inv_batch, std::move(grad)};
}

inline Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (size_t i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (size_t j = 0; j < logits.cols(); ++j) {
      out(i, j) = std::exp(logits(i, j) - mx);
      sum += out(i, j);
    }
    for (size_t j = 0; j < logits.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

/// Mean negative log-softmax of the true class, stabilized by
/// max-subtraction; gradient = (softmax - onehot) / batch.
inline LossResult softmax_xent(const Matrix& logits,
                               std::span<const size_t> classes) {
  if (classes.size() != logits.rows()) {
    throw ShapeError("softmax_xent: " + std::to_string(classes.size()) +
                     " labels vs " + std::to_string(logits.rows()) + " rows");
  }
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  Matrix probs = softmax(logits);
  double value = 0.0;
  Matrix grad = probs;
  for (size_t i = 0; i < logits.rows(); ++i) {
    if (classes[i] >= logits.cols()) {
      throw ValueError("softmax_xent: class index " +
                       std::to_string(classes[i]) + " out of range for " +
                       std::to_string(logits.cols()) + " classes");
    }
    // log-prob recomputed in stabilized form rather than log(probs)
    double mx = logits(i, 0);
    for (size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double lse = 0.0;
    for (size_t j = 0; j < logits.cols(); ++j)
      lse += std::exp(logits(i, j) - mx);
    value -= (logits(i, classes[i]) - mx - std::log(lse));
    grad(i, classes[i]) -= 1.0;
  }
  for (size_t i = 0; i < grad.size(); ++i) grad.data()[i] *= inv_batch;
  return {value * inv_batch, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

/// Adam with bias correction. One state pair per parameter tensor; `step`
/// applies the update to every registered parameter and advances the shared
/// step counter.
class AdamOptimizer {
public:
  explicit AdamOptimizer(std::vector<ParamRef> params, double lr,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    if (!(lr > 0.0)) throw ValueError("AdamOptimizer: lr must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.value->rows(), p.value->cols());
      v_.emplace_back(p.value->rows(), p.value->cols());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
      Matrix& p = *params_[k].value;
      const Matrix& g = *params_[k].grad;
      if (!p.same_shape(g)) {
        throw ShapeError("AdamOptimizer: grad shape " + g.shape_str() +
                         " vs param " + p.shape_str());
      }
      for (size_t i = 0; i < p.size(); ++i) {
        const double gi = g.data()[i];
        double& mi = m_[k].data()[i];
        double& vi = v_[k].data()[i];
        mi = beta1_ * mi + (1.0 - beta1_) * gi;
        vi = beta2_ * vi + (1.0 - beta2_) * gi * gi;
        const double m_hat = mi / bc1;
        const double v_hat = vi / bc2;
        p.data()[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
      }
      ensure_finite(p, "AdamOptimizer::step");
    }
  }

  void zero_grad() {
    for (auto& p : params_) *p.grad = Matrix(p.grad->rows(), p.grad->cols());
  }

  size_t steps_taken() const { return t_; }

private:
  std::vector<ParamRef> params_;
  double lr_, beta1_, beta2_, eps_;
  size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

inline void step_sgd(std::span<const ParamRef> params, double lr) {
  for (const auto& ref : params) {
    Matrix& p = *ref.value;
    const Matrix& g = *ref.grad;
    if (!p.same_shape(g)) {
      throw ShapeError("step_sgd: grad shape " + g.shape_str() + " vs param " +
                       p.shape_str());
    }
    for (size_t i = 0; i < p.size(); ++i) p.data()[i] -= lr * g.data()[i];
    ensure_finite(p, "step_sgd");
  }
}

inline void zero_grads(std::span<const ParamRef> params) {
  for (const auto& ref : params) {
    *ref.grad = Matrix(ref.grad->rows(), ref.grad->cols());
  }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Anything whose analytic gradients should be compared against central
/// finite differences of the scalar loss. `backward` must zero the grads,
/// run a full forward+backward pass and leave gradients in `params`.
/// Dropout layers must run in infer mode.
struct GradCheckTarget {
  std::function<double()> loss;
  std::function<void()> backward;
  std::vector<ParamRef> params;
};

/// Max relative error (with an absolute floor of 1) between analytic and
/// central-difference gradients over every parameter entry. Intended for
/// small networks (<= 1e4 parameters).
inline double grad_check(GradCheckTarget& target, double epsilon = 1e-5) {
  target.backward();
  std::vector<Matrix> analytic;
  analytic.reserve(target.params.size());
  for (const auto& p : target.params) analytic.push_back(*p.grad);

  double max_err = 0.0;
  for (size_t k = 0; k < target.params.size(); ++k) {
    Matrix& value = *target.params[k].value;
    for (size_t i = 0; i < value.size(); ++i) {
      const double original = value.data()[i];
      value.data()[i] = original + epsilon;
      const double f_plus = target.loss();
      value.data()[i] = original - epsilon;
      const double f_minus = target.loss();
      value.data()[i] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double a = analytic[k].data()[i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

} // namespace peec::nn
