#include "rectnet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

void require_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw ShapeMismatch(fmt::format("{}: expected NCHW input, got {}", op, x.shape().str()));
}

}  // namespace

std::size_t window_output_size(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad) {
  if (stride == 0 || window == 0) throw InvalidShape("window and stride must be positive");
  if (in + 2 * pad < window) {
    throw InvalidShape(fmt::format("window {} does not fit input {} with padding {}", window, in, pad));
  }
  return (in + 2 * pad - window) / stride + 1;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

ConvSpec ConvSpec::same(std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
  ConvSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kh = s.kw = kernel;
  s.ph = s.pw = kernel / 2;
  s.weights = Tensor(Shape{out_channels, in_channels, kernel, kernel});
  s.bias = Tensor(Shape{out_channels});
  return s;
}

Shape conv_output_shape(const Shape& in, const ConvSpec& spec) {
  if (in.rank() != 4) throw ShapeMismatch(fmt::format("conv: expected NCHW input, got {}", in.str()));
  if (in[1] != spec.in_channels) {
    throw ShapeMismatch(fmt::format("conv: input has {} channels, layer expects {}", in[1], spec.in_channels));
  }
  return Shape{in[0], spec.out_channels, window_output_size(in[2], spec.kh, spec.sh, spec.ph),
               window_output_size(in[3], spec.kw, spec.sw, spec.pw)};
}

namespace {

void check_conv_params(const ConvSpec& spec) {
  if (spec.weights.shape() != Shape{spec.out_channels, spec.in_channels, spec.kh, spec.kw}) {
    throw ShapeMismatch(fmt::format("conv: weights shape {} inconsistent with spec", spec.weights.shape().str()));
  }
  if (spec.bias.shape() != Shape{spec.out_channels}) throw ShapeMismatch("conv: bias shape inconsistent with spec");
}

bool is_pointwise(const ConvSpec& s) {
  return s.kh == 1 && s.kw == 1 && s.sh == 1 && s.sw == 1 && s.ph == 0 && s.pw == 0;
}

// Output columns [lo, hi) whose input column ow * stride + j - pad lies inside [0, width).
std::pair<std::size_t, std::size_t> valid_columns(std::size_t j, std::size_t stride, std::size_t pad, std::size_t width,
                                                  std::size_t out_w) {
  const std::size_t lo = j >= pad ? 0 : (pad - j + stride - 1) / stride;
  const std::size_t end = width + pad - j;  // first input column past the edge, shifted
  const std::size_t hi = width + pad <= j ? 0 : std::min(out_w, (end + stride - 1) / stride);
  return {std::min(lo, hi), hi};
}

// col is (C*kh*kw) x (Ho*Wo) with row stride ld.
void im2col(const double* img, std::size_t channels, std::size_t height, std::size_t width, const ConvSpec& s,
            std::size_t out_h, std::size_t out_w, double* col, std::size_t ld) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = img + c * height * width;
    for (std::size_t i = 0; i < s.kh; ++i) {
      for (std::size_t j = 0; j < s.kw; ++j) {
        double* dst = col + ((c * s.kh + i) * s.kw + j) * ld;
        const auto [lo, hi] = valid_columns(j, s.sw, s.pw, width, out_w);
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto r = static_cast<std::ptrdiff_t>(oh * s.sh + i) - static_cast<std::ptrdiff_t>(s.ph);
          double* row = dst + oh * out_w;
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(row, row + out_w, 0.0);
            continue;
          }
          const double* src_row = src + static_cast<std::size_t>(r) * width;
          std::fill(row, row + lo, 0.0);
          if (lo < hi && s.sw == 1) {
            std::copy(src_row + (lo + j - s.pw), src_row + (hi + j - s.pw), row + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) row[ow] = src_row[ow * s.sw + j - s.pw];
          }
          std::fill(row + hi, row + out_w, 0.0);
        }
      }
    }
  }
}

void col2im(const double* col, std::size_t channels, std::size_t height, std::size_t width, const ConvSpec& s,
            std::size_t out_h, std::size_t out_w, double* img, std::size_t ld) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = img + c * height * width;
    for (std::size_t i = 0; i < s.kh; ++i) {
      for (std::size_t j = 0; j < s.kw; ++j) {
        const double* src = col + ((c * s.kh + i) * s.kw + j) * ld;
        const auto [lo, hi] = valid_columns(j, s.sw, s.pw, width, out_w);
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto r = static_cast<std::ptrdiff_t>(oh * s.sh + i) - static_cast<std::ptrdiff_t>(s.ph);
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(height)) continue;
          double* dst_row = dst + static_cast<std::size_t>(r) * width;
          const double* row = src + oh * out_w;
          for (std::size_t ow = lo; ow < hi; ++ow) dst_row[ow * s.sw + j - s.pw] += row[ow];
        }
      }
    }
  }
}

}  // namespace

Tensor conv_forward(const Tensor& x, const ConvSpec& spec) {
  require_rank4(x, "conv_forward");
  check_conv_params(spec);
  const Shape out_shape = conv_output_shape(x.shape(), spec);
  const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t out_h = out_shape[2], out_w = out_shape[3];
  const std::size_t k = channels * spec.kh * spec.kw;
  const std::size_t plane = out_h * out_w;

  Tensor y = Tensor::uninitialized(out_shape);
  const ConstMatMap w(spec.weights.raw(), idx(spec.out_channels), idx(k));
  const ConstVecMap b(spec.bias.raw(), idx(spec.out_channels));
  const bool pointwise = is_pointwise(spec);
  Buffer col(pointwise ? 0 : k * plane);

  for (std::size_t n = 0; n < batch; ++n) {
    const double* img = x.raw() + n * channels * height * width;
    const double* col_ptr = img;
    if (!pointwise) {
      im2col(img, channels, height, width, spec, out_h, out_w, col.data(), plane);
      col_ptr = col.data();
    }
    MatMap out(y.raw() + n * spec.out_channels * plane, idx(spec.out_channels), idx(plane));
    out.noalias() = w * ConstMatMap(col_ptr, idx(k), idx(plane));
    out.colwise() += b;
  }
  return y;
}

ConvGrads conv_backward(const Tensor& x, const Tensor& grad_out, const ConvSpec& spec, bool compute_grad_x) {
  require_rank4(x, "conv_backward");
  check_conv_params(spec);
  const Shape out_shape = conv_output_shape(x.shape(), spec);
  if (grad_out.shape() != out_shape) {
    throw ShapeMismatch(fmt::format("conv_backward: grad {} vs output {}", grad_out.shape().str(), out_shape.str()));
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t out_h = out_shape[2], out_w = out_shape[3];
  const std::size_t k = channels * spec.kh * spec.kw;
  const std::size_t plane = out_h * out_w;

  ConvGrads g{compute_grad_x ? Tensor(x.shape()) : Tensor(), Tensor(spec.weights.shape()), Tensor(spec.bias.shape())};
  const ConstMatMap w(spec.weights.raw(), idx(spec.out_channels), idx(k));
  MatMap gw(g.grad_w.raw(), idx(spec.out_channels), idx(k));
  VecMap gb(g.grad_b.raw(), idx(spec.out_channels));
  const bool pointwise = is_pointwise(spec);
  Buffer col(pointwise ? 0 : k * plane);
  Buffer dcol(pointwise ? 0 : k * plane);

  for (std::size_t n = 0; n < batch; ++n) {
    const double* img = x.raw() + n * channels * height * width;
    double* dimg = compute_grad_x ? g.grad_x.raw() + n * channels * height * width : nullptr;
    const ConstMatMap dy(grad_out.raw() + n * spec.out_channels * plane, idx(spec.out_channels), idx(plane));
    gb += dy.rowwise().sum();
    if (pointwise) {
      gw.noalias() += dy * ConstMatMap(img, idx(k), idx(plane)).transpose();
      if (dimg) MatMap(dimg, idx(k), idx(plane)).noalias() = w.transpose() * dy;
    } else {
      im2col(img, channels, height, width, spec, out_h, out_w, col.data(), plane);
      gw.noalias() += dy * ConstMatMap(col.data(), idx(k), idx(plane)).transpose();
      if (dimg) {
        MatMap(dcol.data(), idx(k), idx(plane)).noalias() = w.transpose() * dy;
        col2im(dcol.data(), channels, height, width, spec, out_h, out_w, dimg, plane);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Shape pool_output_shape(const Shape& in, const PoolSpec& spec) {
  if (in.rank() != 4) throw ShapeMismatch(fmt::format("pool: expected NCHW input, got {}", in.str()));
  if (spec.ph >= spec.kh || spec.pw >= spec.kw) {
    throw InvalidShape(fmt::format("pool: padding ({},{}) must be smaller than window ({},{})", spec.ph, spec.pw,
                                   spec.kh, spec.kw));
  }
  return Shape{in[0], in[1], window_output_size(in[2], spec.kh, spec.sh, spec.ph),
               window_output_size(in[3], spec.kw, spec.sw, spec.pw)};
}

namespace {

struct Window {
  std::size_t r0, r1, c0, c1;  // clipped to the input, half-open
};

Window pool_window(std::size_t oh, std::size_t ow, std::size_t height, std::size_t width, const PoolSpec& s) {
  const auto r = static_cast<std::ptrdiff_t>(oh * s.sh) - static_cast<std::ptrdiff_t>(s.ph);
  const auto c = static_cast<std::ptrdiff_t>(ow * s.sw) - static_cast<std::ptrdiff_t>(s.pw);
  const auto clip = [](std::ptrdiff_t v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(hi)));
  };
  return {clip(r, height), clip(r + static_cast<std::ptrdiff_t>(s.kh), height), clip(c, width),
          clip(c + static_cast<std::ptrdiff_t>(s.kw), width)};
}

// Index of the first maximal element in row-major scan of the window.
std::size_t argmax_in(const double* plane, std::size_t width, const Window& win) {
  std::size_t best = win.r0 * width + win.c0;
  double best_v = plane[best];
  for (std::size_t r = win.r0; r < win.r1; ++r) {
    for (std::size_t c = win.c0; c < win.c1; ++c) {
      const double v = plane[r * width + c];
      const bool better = v > best_v;
      best_v = better ? v : best_v;
      best = better ? r * width + c : best;
    }
  }
  return best;
}

}  // namespace

Tensor pool_forward(const Tensor& x, const PoolSpec& spec) {
  const Shape out_shape = pool_output_shape(x.shape(), spec);
  const std::size_t planes = x.dim(0) * x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t out_h = out_shape[2], out_w = out_shape[3];
  const double area = static_cast<double>(spec.kh * spec.kw);
  Tensor y = Tensor::uninitialized(out_shape);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = x.raw() + p * height * width;
    double* out = y.raw() + p * out_h * out_w;
    for (std::size_t oh = 0; oh < out_h; ++oh) {
      for (std::size_t ow = 0; ow < out_w; ++ow) {
        const Window win = pool_window(oh, ow, height, width, spec);
        if (spec.kind == PoolKind::Max) {
          out[oh * out_w + ow] = in[argmax_in(in, width, win)];
        } else {
          double s = 0.0;
          for (std::size_t r = win.r0; r < win.r1; ++r)
            for (std::size_t c = win.c0; c < win.c1; ++c) s += in[r * width + c];
          out[oh * out_w + ow] = s / area;
        }
      }
    }
  }
  return y;
}

Tensor pool_backward(const Tensor& x, const Tensor& grad_out, const PoolSpec& spec) {
  const Shape out_shape = pool_output_shape(x.shape(), spec);
  if (grad_out.shape() != out_shape) {
    throw ShapeMismatch(fmt::format("pool_backward: grad {} vs output {}", grad_out.shape().str(), out_shape.str()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t out_h = out_shape[2], out_w = out_shape[3];
  const double area = static_cast<double>(spec.kh * spec.kw);
  Tensor g(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = x.raw() + p * height * width;
    const double* go = grad_out.raw() + p * out_h * out_w;
    double* gi = g.raw() + p * height * width;
    for (std::size_t oh = 0; oh < out_h; ++oh) {
      for (std::size_t ow = 0; ow < out_w; ++ow) {
        const Window win = pool_window(oh, ow, height, width, spec);
        const double v = go[oh * out_w + ow];
        if (spec.kind == PoolKind::Max) {
          gi[argmax_in(in, width, win)] += v;
        } else {
          for (std::size_t r = win.r0; r < win.r1; ++r)
            for (std::size_t c = win.c0; c < win.c1; ++c) gi[r * width + c] += v / area;
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

void DropoutSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidParam(fmt::format("dropout: rate must be in [0,1), got {}", rate));
}

Tensor dropout_forward(const Tensor& x, const DropoutSpec& spec, Mode mode, RngStream& rng, Tensor& mask) {
  spec.validate();
  if (mode == Mode::Test) {
    mask = Tensor();
    return x;
  }
  mask = Tensor(x.shape(), 1.0);
  if (spec.rate > 0.0) {
    const double keep_scale = 1.0 / (1.0 - spec.rate);
    rng.fill_unit(mask.data());
    for (auto& m : mask.data()) m = m < spec.rate ? 0.0 : keep_scale;
  }
  Tensor y = Tensor::uninitialized(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask) {
  if (mask.empty()) return grad_out;
  require_same_shape(grad_out, mask, "dropout_backward");
  Tensor g = Tensor::uninitialized(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

// ---------------------------------------------------------------------------
// Split / concat
// ---------------------------------------------------------------------------

std::pair<Tensor, Tensor> split_forward(const Tensor& x) { return {x, x}; }

Tensor split_backward(const Tensor& grad_a, const Tensor& grad_b) { return add(grad_a, grad_b); }

Tensor concat_forward(std::span<const Tensor* const> inputs) {
  if (inputs.empty()) throw ShapeMismatch("concat: no inputs");
  const Tensor& first = *inputs.front();
  require_rank4(first, "concat_forward");
  std::size_t channels = 0;
  for (const Tensor* t : inputs) {
    require_rank4(*t, "concat_forward");
    if (t->dim(0) != first.dim(0) || t->dim(2) != first.dim(2) || t->dim(3) != first.dim(3)) {
      throw ShapeMismatch(fmt::format("concat: {} vs {} differ outside the channel axis", t->shape().str(),
                                      first.shape().str()));
    }
    channels += t->dim(1);
  }
  const std::size_t batch = first.dim(0), plane = first.dim(2) * first.dim(3);
  Tensor y = Tensor::uninitialized(Shape{batch, channels, first.dim(2), first.dim(3)});
  double* out = y.raw();
  for (std::size_t n = 0; n < batch; ++n) {
    for (const Tensor* t : inputs) {
      const std::size_t block = t->dim(1) * plane;
      const double* src = t->raw() + n * block;
      out = std::copy(src, src + block, out);
    }
  }
  return y;
}

std::vector<Tensor> concat_backward(const Tensor& grad_out, std::span<const Shape> input_shapes) {
  require_rank4(grad_out, "concat_backward");
  std::vector<Tensor> grads;
  grads.reserve(input_shapes.size());
  std::size_t channels = 0;
  for (const auto& s : input_shapes) {
    grads.emplace_back(s);
    channels += s[1];
  }
  if (channels != grad_out.dim(1)) throw ShapeMismatch("concat_backward: channel counts do not add up");
  const std::size_t batch = grad_out.dim(0), plane = grad_out.dim(2) * grad_out.dim(3);
  const double* src = grad_out.raw();
  for (std::size_t n = 0; n < batch; ++n) {
    for (auto& g : grads) {
      const std::size_t block = g.dim(1) * plane;
      std::copy(src, src + block, g.raw() + n * block);
      src += block;
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Spatial pyramid pooling
// ---------------------------------------------------------------------------

std::size_t spp_feature_count(std::size_t channels, const SppSpec& spec) {
  std::size_t bins = 0;
  for (auto n : spec.levels) bins += n * n;
  return channels * bins;
}

namespace {

void check_spp(const Tensor& x, const SppSpec& spec) {
  require_rank4(x, "spp");
  if (spec.levels.empty()) throw InvalidParam("spp: at least one level required");
  for (auto n : spec.levels) {
    if (n == 0) throw InvalidParam("spp: levels must be positive");
    if (n > x.dim(2) || n > x.dim(3)) {
      throw InvalidShape(fmt::format("spp: level {} exceeds spatial size {}x{}", n, x.dim(2), x.dim(3)));
    }
  }
}

Window spp_bin(std::size_t level, std::size_t bi, std::size_t bj, std::size_t height, std::size_t width) {
  return {bi * height / level, ((bi + 1) * height + level - 1) / level, bj * width / level,
          ((bj + 1) * width + level - 1) / level};
}

// Calls f(plane_offset, window, output_index) for every pooled bin.
template <typename F>
void for_each_spp_bin(const Tensor& x, const SppSpec& spec, F&& f) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t features = spp_feature_count(channels, spec);
  for (std::size_t n = 0; n < batch; ++n) {
    std::size_t o = n * features;
    for (auto level : spec.levels) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t plane = (n * channels + c) * height * width;
        for (std::size_t bi = 0; bi < level; ++bi)
          for (std::size_t bj = 0; bj < level; ++bj) f(plane, spp_bin(level, bi, bj, height, width), o++);
      }
    }
  }
}

}  // namespace

Tensor spp_forward(const Tensor& x, const SppSpec& spec) {
  check_spp(x, spec);
  Tensor y(Shape{x.dim(0), spp_feature_count(x.dim(1), spec)});
  const std::size_t width = x.dim(3);
  for_each_spp_bin(x, spec, [&](std::size_t plane, const Window& win, std::size_t o) {
    const double* in = x.raw() + plane;
    y[o] = in[argmax_in(in, width, win)];
  });
  return y;
}

Tensor spp_backward(const Tensor& x, const Tensor& grad_out, const SppSpec& spec) {
  check_spp(x, spec);
  if (grad_out.shape() != Shape{x.dim(0), spp_feature_count(x.dim(1), spec)}) {
    throw ShapeMismatch(fmt::format("spp_backward: unexpected grad shape {}", grad_out.shape().str()));
  }
  Tensor g(x.shape());
  const std::size_t width = x.dim(3);
  for_each_spp_bin(x, spec, [&](std::size_t plane, const Window& win, std::size_t o) {
    g[plane + argmax_in(x.raw() + plane, width, win)] += grad_out[o];
  });
  return g;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

DenseSpec DenseSpec::zeros(std::size_t in_features, std::size_t out_features) {
  return DenseSpec{in_features, out_features, Tensor(Shape{out_features, in_features}), Tensor(Shape{out_features})};
}

namespace {

void check_dense(const Tensor& x, const DenseSpec& spec) {
  if (spec.weights.shape() != Shape{spec.out_features, spec.in_features} ||
      spec.bias.shape() != Shape{spec.out_features}) {
    throw ShapeMismatch("dense: parameter shapes inconsistent with spec");
  }
  if (x.rank() < 1 || x.shape().numel_from(1) != spec.in_features) {
    throw ShapeMismatch(
        fmt::format("dense: input {} does not flatten to {} features", x.shape().str(), spec.in_features));
  }
}

}  // namespace

Tensor dense_forward(const Tensor& x, const DenseSpec& spec) {
  check_dense(x, spec);
  const std::size_t batch = x.dim(0);
  Tensor y(Shape{batch, spec.out_features});
  MatMap out(y.raw(), idx(batch), idx(spec.out_features));
  out.noalias() = ConstMatMap(x.raw(), idx(batch), idx(spec.in_features)) *
                  ConstMatMap(spec.weights.raw(), idx(spec.out_features), idx(spec.in_features)).transpose();
  out.rowwise() += ConstVecMap(spec.bias.raw(), idx(spec.out_features)).transpose();
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& grad_out, const DenseSpec& spec) {
  check_dense(x, spec);
  const std::size_t batch = x.dim(0);
  if (grad_out.shape() != Shape{batch, spec.out_features}) {
    throw ShapeMismatch(fmt::format("dense_backward: unexpected grad shape {}", grad_out.shape().str()));
  }
  DenseGrads g{Tensor(x.shape()), Tensor(spec.weights.shape()), Tensor(spec.bias.shape())};
  const ConstMatMap dy(grad_out.raw(), idx(batch), idx(spec.out_features));
  const ConstMatMap in(x.raw(), idx(batch), idx(spec.in_features));
  const ConstMatMap w(spec.weights.raw(), idx(spec.out_features), idx(spec.in_features));
  MatMap(g.grad_w.raw(), idx(spec.out_features), idx(spec.in_features)).noalias() = dy.transpose() * in;
  VecMap(g.grad_b.raw(), idx(spec.out_features)) = dy.colwise().sum().transpose();
  MatMap(g.grad_x.raw(), idx(batch), idx(spec.in_features)).noalias() = dy * w;
  return g;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

LossOutput softmax_xent(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() < 2) throw ShapeMismatch("softmax_xent: logits must be (N, classes)");
  const std::size_t batch = logits.dim(0), classes = logits.shape().numel_from(1);
  if (labels.size() != batch) {
    throw ShapeMismatch(fmt::format("softmax_xent: {} labels for batch of {}", labels.size(), batch));
  }
  LossOutput out{0.0, Tensor(Shape{batch, classes})};
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] >= classes) {
      throw InvalidRange(fmt::format("softmax_xent: label {} out of range [0, {})", labels[n], classes));
    }
    const double* z = logits.raw() + n * classes;
    double* p = out.probabilities.raw() + n * classes;
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      p[k] = std::exp(z[k] - zmax);
      denom += p[k];
    }
    for (std::size_t k = 0; k < classes; ++k) p[k] /= denom;
    // log p[label] computed from the shifted logits to avoid log(0)
    total += std::log(denom) - (z[labels[n]] - zmax);
  }
  out.loss = total / static_cast<double>(batch);
  return out;
}

Tensor softmax_xent_backward(const LossOutput& out, std::span<const std::size_t> labels, const Shape& logits_shape) {
  const Tensor& p = out.probabilities;
  const std::size_t batch = p.dim(0), classes = p.dim(1);
  if (labels.size() != batch || logits_shape.numel() != p.size()) {
    throw ShapeMismatch("softmax_xent_backward: inconsistent shapes");
  }
  Tensor g(logits_shape);
  const double inv_n = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t k = 0; k < classes; ++k) {
      const double onehot = (k == labels[n]) ? 1.0 : 0.0;
      g[n * classes + k] = (p[n * classes + k] - onehot) * inv_n;
    }
  }
  return g;
}

}  // namespace rectnet
