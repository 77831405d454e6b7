#include "rectnet/activation.hpp"

#include <cmath>
#include <fmt/format.h>

#include "rectnet/errors.hpp"

namespace rectnet {

std::string_view to_string(Mode mode) { return mode == Mode::Train ? "train" : "test"; }

void LeakyParam::validate() const {
  if (!(a > 1.0) || !std::isfinite(a)) throw InvalidParam(fmt::format("leaky: a must be > 1, got {}", a));
}

PReluState PReluState::with_channels(std::size_t channels, double init) {
  if (channels == 0) throw InvalidParam("prelu: channel count must be positive");
  return PReluState{std::vector<double>(channels, init), std::vector<double>(channels, 0.0)};
}

void PReluState::zero_grad() { std::fill(slope_grads.begin(), slope_grads.end(), 0.0); }

void RReluParam::validate() const {
  if (!(l > 0.0) || !(l < u) || !std::isfinite(u)) {
    throw InvalidRange(fmt::format("rrelu: need 0 < l < u, got l={} u={}", l, u));
  }
}

namespace {

Tensor slope_forward(const Tensor& x, double slope) {
  Tensor y = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  double* out = y.raw();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double neg = xp[i] * slope;
    out[i] = xp[i] >= 0.0 ? xp[i] : neg;
  }
  return y;
}

Tensor slope_backward(const Tensor& x, const Tensor& grad_out, double slope, const char* op) {
  require_same_shape(x, grad_out, op);
  Tensor g = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  const double* gp = grad_out.raw();
  double* out = g.raw();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = xp[i] >= 0.0 ? gp[i] : gp[i] * slope;
  return g;
}

}  // namespace

Tensor relu_forward(const Tensor& x) {
  return elementwise_map(x, [](double v) { return v >= 0.0 ? v : 0.0; });
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Tensor g = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  const double* gp = grad_out.raw();
  double* out = g.raw();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = xp[i] >= 0.0 ? gp[i] : 0.0;
  return g;
}

Tensor leaky_forward(const Tensor& x, const LeakyParam& p) {
  p.validate();
  return slope_forward(x, 1.0 / p.a);
}

Tensor leaky_backward(const Tensor& x, const Tensor& grad_out, const LeakyParam& p) {
  p.validate();
  return slope_backward(x, grad_out, 1.0 / p.a, "leaky_backward");
}

std::size_t channel_count(const Shape& shape) { return shape.rank() >= 2 ? shape[1] : 1; }

namespace {

struct ChannelLayout {
  std::size_t outer;
  std::size_t channels;
  std::size_t inner;
};

ChannelLayout channel_layout(const Shape& s) {
  if (s.rank() >= 2) return {s[0], s[1], s.numel_from(2)};
  return {1, 1, s.numel()};
}

void check_prelu(const Tensor& x, const PReluState& s) {
  const auto c = channel_count(x.shape());
  if (s.slopes.size() != c) {
    throw ShapeMismatch(fmt::format("prelu: {} slopes for {} channels", s.slopes.size(), c));
  }
}

}  // namespace

Tensor prelu_forward(const Tensor& x, const PReluState& s) {
  check_prelu(x, s);
  const auto [outer, channels, inner] = channel_layout(x.shape());
  Tensor y = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  double* out = y.raw();
  for (std::size_t n = 0; n < outer; ++n) {
    for (std::size_t c = 0; c < channels; ++c, xp += inner, out += inner) {
      const double slope = s.slopes[c];
      for (std::size_t k = 0; k < inner; ++k) out[k] = xp[k] >= 0.0 ? xp[k] : xp[k] * slope;
    }
  }
  return y;
}

Tensor prelu_backward(const Tensor& x, const Tensor& grad_out, PReluState& s) {
  check_prelu(x, s);
  require_same_shape(x, grad_out, "prelu_backward");
  if (s.slope_grads.size() != s.slopes.size()) s.slope_grads.assign(s.slopes.size(), 0.0);
  const auto [outer, channels, inner] = channel_layout(x.shape());
  Tensor g = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  const double* gp = grad_out.raw();
  double* out = g.raw();
  for (std::size_t n = 0; n < outer; ++n) {
    for (std::size_t c = 0; c < channels; ++c, xp += inner, gp += inner, out += inner) {
      const double slope = s.slopes[c];
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) {
        const bool pos = xp[k] >= 0.0;
        out[k] = pos ? gp[k] : gp[k] * slope;
        acc += pos ? 0.0 : gp[k] * xp[k];
      }
      s.slope_grads[c] += acc;
    }
  }
  return g;
}

Tensor rrelu_forward(const Tensor& x, RReluParam& p, Mode mode, RngStream& rng) {
  p.validate();
  if (mode == Mode::Test) {
    p.cached_divisors.reset();
    return slope_forward(x, 1.0 / p.test_divisor());
  }
  // Sample the whole divisor tensor first, then map.
  Tensor divisors = uniform_sample(rng, p.l, p.u, x.size()).reshaped(x.shape());
  Tensor y = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  const double* dp = divisors.raw();
  double* out = y.raw();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = xp[i] >= 0.0 ? xp[i] : xp[i] * (1.0 / dp[i]);
  p.cached_divisors = std::move(divisors);
  return y;
}

Tensor rrelu_backward(const Tensor& x, const Tensor& grad_out, const RReluParam& p, Mode mode) {
  p.validate();
  if (mode == Mode::Test) return slope_backward(x, grad_out, 1.0 / p.test_divisor(), "rrelu_backward");
  if (!p.cached_divisors || p.cached_divisors->shape() != x.shape()) {
    throw StaleCache("rrelu_backward: no cached divisors for this input (forward not run in train mode)");
  }
  require_same_shape(x, grad_out, "rrelu_backward");
  const Tensor& d = *p.cached_divisors;
  Tensor g = Tensor::uninitialized(x.shape());
  const double* xp = x.raw();
  const double* gp = grad_out.raw();
  const double* dp = d.raw();
  double* out = g.raw();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = xp[i] >= 0.0 ? gp[i] : gp[i] * (1.0 / dp[i]);
  return g;
}

double sparsity(const Tensor& y) {
  if (y.empty()) return 0.0;
  std::size_t zeros = 0;
  for (double v : y.data()) zeros += (v == 0.0);
  return static_cast<double>(zeros) / static_cast<double>(y.size());
}

}  // namespace rectnet
