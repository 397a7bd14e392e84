#pragma once

#include <vector>

#include "gama/tensor.hpp"

/// Differentiable primitives. Every op records itself on the calling
/// thread's tape when an input requires a gradient and grad mode is on.
///
/// Image tensors are NCHW; a 3-d CHW input is treated as a batch of one and
/// keeps its rank on output. "Row" ops view a tensor as [rows, last_dim].
namespace gama {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[N,in] * weight[out,in]^T + bias[out]; bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Cross-correlation with zero padding. Output side is (H + 2*pad - k) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad);

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

/// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Per-(sample, channel) standardization over H*W, no affine parameters.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5));

enum class ActivationKind { leaky_relu, sigmoid, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::leaky_relu;
  double slope = 0.2;
  double scale = 1.0;

  static Activation leaky(double slope, double scale) { return {ActivationKind::leaky_relu, slope, scale}; }
  static Activation relu() { return {ActivationKind::leaky_relu, 0.0, 1.0}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0, 1.0}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0, 1.0}; }
};

/// Leaky ReLU with gain: scale*v for v >= 0, scale*slope*v otherwise.
template <typename T>
Tensor<T> activation(const Tensor<T>& x, const Activation& kind);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope, double scale = 1.0) {
  return activation(x, Activation::leaky(slope, scale));
}
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return activation(x, Activation::relu());
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(x, Activation::sigmoid());
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return activation(x, Activation::tanh());
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
/// x * s where s is a one-element tensor (both receive gradients).
template <typename T>
Tensor<T> mul_by_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Sum over the last dimension: [rows, K] -> [rows].
template <typename T>
Tensor<T> row_sum(const Tensor<T>& x);
/// Euclidean norm per row; the subgradient at the zero vector is taken as 0.
template <typename T>
Tensor<T> row_l2_norm(const Tensor<T>& x);

inline constexpr double kNormEps = 1e-12;

/// Scales each row to unit L2 norm; rows with norm <= 1e-12 raise
/// "degenerate embedding".
template <typename T>
Tensor<T> normalize_l2(const Tensor<T>& x);

/// Row-wise a.b / (|a||b|); [rows, K] x [rows, K] -> [rows].
template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b);

/// clamp_[0,1](min(x + eps, max(x - eps, raw))). Gradient flows into `raw`
/// where it was not clipped; `x` is treated as data.
template <typename T>
Tensor<T> project_linf(const Tensor<T>& raw, const Tensor<T>& x, T eps);

/// Mean binary cross-entropy of sigmoid(logits) against {0,1} targets with
/// probabilities clamped to [floor, 1 - floor].
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets,
                          T prob_floor = T(1e-7));

/// Mean softmax cross-entropy over rows of logits[N,M] against class indices.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets);

/// Mean of table rows per token sequence: table[V,E] -> [N,E].
template <typename T>
Tensor<T> embedding_mean(const Tensor<T>& table, const std::vector<std::vector<int>>& sequences);

/// Stack samples [C,H,W] or rows along a new leading axis (no gradient).
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& items);

}  // namespace gama
