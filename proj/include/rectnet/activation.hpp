#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "rectnet/rng.hpp"
#include "rectnet/tensor.hpp"

namespace rectnet {

enum class Mode { Train, Test };

std::string_view to_string(Mode mode);

// Every unit in this file is the identity on x >= 0 and uses the x >= 0 branch
// (slope 1) as the subgradient at zero. Negative inputs are multiplied by a
// slope; for the divisor-parameterized units the slope is 1/a (or 1/d), so
// equal divisors always give bitwise-equal outputs across unit kinds.

/// Leaky ReLU divisor: y = x / a for x < 0. Requires a > 1.
struct LeakyParam {
  double a = 100.0;

  void validate() const;
};

/// One learned multiplicative slope per channel (y = slope_c * x for x < 0).
struct PReluState {
  std::vector<double> slopes;
  std::vector<double> slope_grads;

  static PReluState with_channels(std::size_t channels, double init = 0.25);
  void zero_grad();
};

/// Randomized leaky ReLU. In train mode the divisor of every negative-branch
/// element is drawn from U(l, u); in test mode the divisor is (l + u) / 2.
struct RReluParam {
  double l = 3.0;
  double u = 8.0;
  /// Divisors drawn by the last train-mode forward; absent after test mode.
  std::optional<Tensor> cached_divisors;

  void validate() const;
  double test_divisor() const { return (l + u) / 2.0; }
};

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

Tensor leaky_forward(const Tensor& x, const LeakyParam& p);
Tensor leaky_backward(const Tensor& x, const Tensor& grad_out, const LeakyParam& p);

/// Channel axis is dim 1 for rank >= 2; a rank-1 tensor is a single channel.
std::size_t channel_count(const Shape& shape);

Tensor prelu_forward(const Tensor& x, const PReluState& s);
/// Returns grad_in and accumulates d(loss)/d(slope_c) into s.slope_grads.
Tensor prelu_backward(const Tensor& x, const Tensor& grad_out, PReluState& s);

Tensor rrelu_forward(const Tensor& x, RReluParam& p, Mode mode, RngStream& rng);
Tensor rrelu_backward(const Tensor& x, const Tensor& grad_out, const RReluParam& p, Mode mode);

/// Fraction of exactly-zero elements.
double sparsity(const Tensor& y);

}  // namespace rectnet
