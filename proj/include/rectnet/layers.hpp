#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rectnet/activation.hpp"
#include "rectnet/rng.hpp"
#include "rectnet/tensor.hpp"

namespace rectnet {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation), NCHW.
// ---------------------------------------------------------------------------

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  Tensor weights;  // (out, in, kh, kw)
  Tensor bias;     // (out)

  /// Zero-initialized weights and bias with "same" padding for odd kernels.
  static ConvSpec same(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);
};

/// floor((in + 2 pad - window) / stride) + 1, or InvalidShape if < 1.
std::size_t window_output_size(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad);

Shape conv_output_shape(const Shape& in, const ConvSpec& spec);
Tensor conv_forward(const Tensor& x, const ConvSpec& spec);

struct ConvGrads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_b;
};
/// grad_x is left empty when `compute_grad_x` is false.
ConvGrads conv_backward(const Tensor& x, const Tensor& grad_out, const ConvSpec& spec, bool compute_grad_x = true);

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

enum class PoolKind { Max, Avg };

struct PoolSpec {
  PoolKind kind = PoolKind::Max;
  std::size_t kh = 2, kw = 2;
  std::size_t sh = 2, sw = 2;
  std::size_t ph = 0, pw = 0;
};

Shape pool_output_shape(const Shape& in, const PoolSpec& spec);
/// Max pooling ignores padded cells; average pooling divides by the full
/// window area (padding counts as zeros).
Tensor pool_forward(const Tensor& x, const PoolSpec& spec);
/// Max routes each output gradient to the first maximal cell in row-major
/// order; average spreads it uniformly over the window.
Tensor pool_backward(const Tensor& x, const Tensor& grad_out, const PoolSpec& spec);

// ---------------------------------------------------------------------------
// Inverted dropout
// ---------------------------------------------------------------------------

struct DropoutSpec {
  double rate = 0.5;

  void validate() const;
};

/// Train: keeps each element with probability 1 - rate and scales it by
/// 1 / (1 - rate). The per-element multipliers are written to `mask`.
/// Test: identity, `mask` cleared.
Tensor dropout_forward(const Tensor& x, const DropoutSpec& spec, Mode mode, RngStream& rng, Tensor& mask);
/// An empty mask means the forward ran in test mode (identity).
Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask);

// ---------------------------------------------------------------------------
// Branching
// ---------------------------------------------------------------------------

std::pair<Tensor, Tensor> split_forward(const Tensor& x);
Tensor split_backward(const Tensor& grad_a, const Tensor& grad_b);

/// Stacks 4-d inputs along the channel axis.
Tensor concat_forward(std::span<const Tensor* const> inputs);
/// Slices the gradient back into per-input channel blocks.
std::vector<Tensor> concat_backward(const Tensor& grad_out, std::span<const Shape> input_shapes);

// ---------------------------------------------------------------------------
// Spatial pyramid pooling
// ---------------------------------------------------------------------------

struct SppSpec {
  std::vector<std::size_t> levels{1, 2, 4};
};

/// channels * sum(n^2)
std::size_t spp_feature_count(std::size_t channels, const SppSpec& spec);

/// Output (N, C * sum n^2), ordered level, channel, bin row, bin column.
/// Bin b of n covers [floor(b H / n), ceil((b+1) H / n)).
Tensor spp_forward(const Tensor& x, const SppSpec& spec);
Tensor spp_backward(const Tensor& x, const Tensor& grad_out, const SppSpec& spec);

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

struct DenseSpec {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor weights;  // (out, in)
  Tensor bias;     // (out)

  static DenseSpec zeros(std::size_t in_features, std::size_t out_features);
};

/// x is (N, ...) and is flattened to (N, in_features). Output (N, out).
Tensor dense_forward(const Tensor& x, const DenseSpec& spec);

struct DenseGrads {
  Tensor grad_x;  // same shape as x
  Tensor grad_w;
  Tensor grad_b;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& grad_out, const DenseSpec& spec);

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

struct LossOutput {
  double loss = 0.0;    // mean over the batch
  Tensor probabilities;  // (N, classes)
};

/// logits is (N, ...) flattened to (N, classes).
LossOutput softmax_xent(const Tensor& logits, std::span<const std::size_t> labels);
/// (p - onehot) / N, shaped like `logits_shape`.
Tensor softmax_xent_backward(const LossOutput& out, std::span<const std::size_t> labels, const Shape& logits_shape);

}  // namespace rectnet
