#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "rectnet/errors.hpp"
#include "rectnet/layers.hpp"

using namespace rectnet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct seven-loop cross-correlation.
Tensor naive_conv(const Tensor& x, const ConvSpec& s) {
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = (h + 2 * s.ph - s.kh) / s.sh + 1, ow = (w + 2 * s.pw - s.kw) / s.sw + 1;
  Tensor y(Shape{n, s.out_channels, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = s.bias[o];
          for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t ki = 0; ki < s.kh; ++ki)
              for (std::size_t kj = 0; kj < s.kw; ++kj) {
                const long r = long(i * s.sh + ki) - long(s.ph), q = long(j * s.sw + kj) - long(s.pw);
                if (r < 0 || q < 0 || r >= long(h) || q >= long(w)) continue;
                acc += s.weights.at(o, c, ki, kj) * x.at(b, c, std::size_t(r), std::size_t(q));
              }
          y.at(b, o, i, j) = acc;
        }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv of ones with a 2x2 half kernel") {
  ConvSpec s;
  s.in_channels = 1;
  s.out_channels = 1;
  s.kh = s.kw = 2;
  s.weights = Tensor(Shape{1, 1, 2, 2}, 0.5);
  s.bias = Tensor(Shape{1});
  const Tensor y = conv_forward(Tensor(Shape{1, 1, 3, 3}, 1.0), s);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.data()) CHECK(v == 2.0);
}

TEST_CASE("conv output shapes") {
  const ConvSpec s = ConvSpec::same(3, 192, 5);
  CHECK(conv_output_shape(Shape{1, 3, 32, 32}, s) == Shape{1, 192, 32, 32});
  CHECK_THROWS_AS(conv_output_shape(Shape{1, 4, 32, 32}, s), ShapeMismatch);
  CHECK(window_output_size(32, 3, 2, 1) == 16);
  CHECK(window_output_size(70, 3, 2, 1) == 35);
  CHECK_THROWS_AS(window_output_size(2, 5, 1, 0), InvalidShape);
}

TEST_CASE("conv matches a direct loop") {
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{5, 1, 2}, std::tuple{3, 2, 1}, std::tuple{1, 1, 0},
                                std::tuple{2, 2, 0}}) {
    ConvSpec s;
    s.in_channels = 3;
    s.out_channels = 4;
    s.kh = s.kw = k;
    s.sh = s.sw = stride;
    s.ph = s.pw = pad;
    s.weights = random_tensor(Shape{4, 3, std::size_t(k), std::size_t(k)}, 10 + k);
    s.bias = random_tensor(Shape{4}, 20 + k);
    const Tensor x = random_tensor(Shape{2, 3, 9, 8}, 30 + k);
    CHECK(max_abs_diff(conv_forward(x, s), naive_conv(x, s)) < 1e-12);
  }
}

TEST_CASE("conv backward grad_x is the adjoint of forward") {
  // <conv(x) - b, g> == <x, grad_x(g)>
  ConvSpec s = ConvSpec::same(2, 3, 3);
  s.sh = s.sw = 2;
  s.weights = random_tensor(s.weights.shape(), 1);
  const Tensor x = random_tensor(Shape{2, 2, 7, 6}, 2);
  const Tensor y = conv_forward(x, s);
  const Tensor g = random_tensor(y.shape(), 3);
  const ConvGrads grads = conv_backward(x, g, s);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * grads.grad_x[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  CHECK(conv_backward(x, g, s, false).grad_x.empty());
}

TEST_CASE("pool output shapes") {
  CHECK(pool_output_shape(Shape{1, 8, 32, 32}, PoolSpec{PoolKind::Max, 3, 3, 2, 2, 1, 1}) == Shape{1, 8, 16, 16});
  CHECK(pool_output_shape(Shape{1, 8, 8, 8}, PoolSpec{PoolKind::Avg, 8, 8, 1, 1, 0, 0}) == Shape{1, 8, 1, 1});
  CHECK_THROWS_AS(pool_output_shape(Shape{1, 1, 4, 4}, PoolSpec{PoolKind::Max, 2, 2, 2, 2, 2, 2}), InvalidShape);
}

TEST_CASE("max pool picks the maximum and routes the gradient to it") {
  const Tensor x(Shape{1, 1, 2, 2}, {1, 5, 2, 3});
  const PoolSpec s{PoolKind::Max, 2, 2, 2, 2, 0, 0};
  const Tensor y = pool_forward(x, s);
  CHECK(y[0] == 5);
  const Tensor g = pool_backward(x, Tensor(Shape{1, 1, 1, 1}, 1.0), s);
  CHECK(g[0] == 0);
  CHECK(g[1] == 1);
  CHECK(g[2] == 0);
  CHECK(g[3] == 0);
}

TEST_CASE("max pool ties go to the first cell and padding is ignored") {
  const PoolSpec s{PoolKind::Max, 2, 2, 2, 2, 0, 0};
  const Tensor x(Shape{1, 1, 2, 2}, {4, 4, 4, 4});
  const Tensor g = pool_backward(x, Tensor(Shape{1, 1, 1, 1}, 1.0), s);
  CHECK(g[0] == 1);
  CHECK(g[3] == 0);
  const Tensor neg(Shape{1, 1, 2, 2}, {-1, -2, -3, -4});
  const Tensor y = pool_forward(neg, PoolSpec{PoolKind::Max, 3, 3, 2, 2, 1, 1});
  CHECK(y[0] == -1);
}

TEST_CASE("global average pool is the mean") {
  const Tensor x = random_tensor(Shape{1, 2, 8, 8}, 4);
  const Tensor y = pool_forward(x, PoolSpec{PoolKind::Avg, 8, 8, 1, 1, 0, 0});
  double m0 = 0;
  for (std::size_t i = 0; i < 64; ++i) m0 += x[i];
  CHECK(y[0] == doctest::Approx(m0 / 64).epsilon(1e-14));
  const Tensor g = pool_backward(x, Tensor(Shape{1, 2, 1, 1}, 1.0), PoolSpec{PoolKind::Avg, 8, 8, 1, 1, 0, 0});
  for (double v : g.data()) CHECK(v == 1.0 / 64);
}

TEST_CASE("padded average divides by the full window") {
  const Tensor y = pool_forward(Tensor(Shape{1, 1, 2, 2}, 1.0), PoolSpec{PoolKind::Avg, 3, 3, 2, 2, 1, 1});
  CHECK(y[0] == doctest::Approx(4.0 / 9.0));
}

TEST_CASE("dropout") {
  const Tensor x = random_tensor(Shape{1000}, 5);
  Tensor mask;
  RngStream rng(5, 1);
  SUBCASE("rate 0 is the identity") {
    CHECK(bitwise_equal(dropout_forward(x, DropoutSpec{0.0}, Mode::Train, rng, mask), x));
  }
  SUBCASE("test mode is the identity and clears the mask") {
    mask = Tensor(Shape{1});
    CHECK(bitwise_equal(dropout_forward(x, DropoutSpec{0.5}, Mode::Test, rng, mask), x));
    CHECK(mask.empty());
    CHECK(bitwise_equal(dropout_backward(x, mask), x));
  }
  SUBCASE("train mode keeps the mean") {
    const std::size_t n = 100000;
    const Tensor ones(Shape{n}, 1.0);
    const Tensor y = dropout_forward(ones, DropoutSpec{0.5}, Mode::Train, rng, mask);
    double s = 0;
    std::size_t zeros = 0;
    for (double v : y.data()) {
      s += v;
      zeros += v == 0.0;
      REQUIRE((v == 0.0 || v == 2.0));
    }
    // each element is 0 or 2 with probability 1/2: sd 1
    CHECK(std::abs(s / n - 1.0) < 4.0 / std::sqrt(double(n)));
    const Tensor g = dropout_backward(ones, mask);
    CHECK(bitwise_equal(g, y));
  }
  CHECK_THROWS_AS(DropoutSpec{1.0}.validate(), InvalidParam);
}

TEST_CASE("concat and split") {
  const Tensor a = random_tensor(Shape{2, 96, 3, 3}, 6);
  const Tensor b = random_tensor(Shape{2, 96, 3, 3}, 7);
  const Tensor* in[] = {&a, &b};
  const Tensor y = concat_forward(in);
  REQUIRE(y.shape() == Shape{2, 192, 3, 3});
  CHECK(y.at(1, 100, 2, 1) == b.at(1, 4, 2, 1));
  CHECK(y.at(1, 95, 0, 0) == a.at(1, 95, 0, 0));
  const Shape shapes[] = {a.shape(), b.shape()};
  const auto parts = concat_backward(y, shapes);
  CHECK(bitwise_equal(parts[0], a));
  CHECK(bitwise_equal(parts[1], b));

  const Tensor bad = random_tensor(Shape{2, 4, 2, 3}, 8);
  const Tensor* mismatched[] = {&a, &bad};
  CHECK_THROWS_AS(concat_forward(mismatched), ShapeMismatch);

  const auto [s1, s2] = split_forward(a);
  CHECK(bitwise_equal(s1, a));
  CHECK(bitwise_equal(s2, a));
  const Tensor g = split_backward(a, b);
  CHECK(g[17] == a[17] + b[17]);
}

TEST_CASE("spp") {
  const Tensor y = spp_forward(Tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4}), SppSpec{{1}});
  REQUIRE(y.shape() == Shape{1, 1});
  CHECK(y[0] == 4);
  CHECK(spp_feature_count(256, SppSpec{}) == 5376);
  CHECK(spp_forward(random_tensor(Shape{2, 256, 8, 8}, 9), SppSpec{}).shape() == Shape{2, 5376});

  // 3x3 input with 2 bins per side: bins [0,2) and [1,3) overlap in the middle
  const Tensor x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 9, 5, 6, 7, 8});
  const Tensor z = spp_forward(x, SppSpec{{2}});
  CHECK(z[0] == 9);
  CHECK(z[1] == 9);
  CHECK(z[2] == 9);
  CHECK(z[3] == 9);
  CHECK_THROWS_AS(spp_forward(x, SppSpec{{4}}), InvalidShape);
}

TEST_CASE("dense") {
  DenseSpec s = DenseSpec::zeros(1, 1);
  s.weights[0] = 2;
  s.bias[0] = 1;
  CHECK(dense_forward(Tensor(Shape{1, 1}, {3}), s)[0] == 7);

  DenseSpec id = DenseSpec::zeros(4, 4);
  for (std::size_t i = 0; i < 4; ++i) id.weights[i * 4 + i] = 1;
  const Tensor x = random_tensor(Shape{3, 4, 1, 1}, 10);
  CHECK(bitwise_equal(dense_forward(x, id), x.reshaped(Shape{3, 4})));
  const DenseGrads g = dense_backward(x, Tensor(Shape{3, 4}, 1.0), id);
  CHECK(g.grad_x.shape() == x.shape());
  CHECK(g.grad_b[0] == 3);
}

TEST_CASE("softmax cross-entropy") {
  const std::size_t labels[] = {3};
  const LossOutput uniform = softmax_xent(Tensor(Shape{1, 10}, 0.0), labels);
  CHECK(uniform.loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  const std::size_t two[] = {0};
  const LossOutput out = softmax_xent(Tensor(Shape{1, 2}, {1.0, -1.0}), two);
  CHECK(out.loss == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));

  const Tensor logits = random_tensor(Shape{5, 7}, 11);
  const std::size_t many[] = {0, 1, 2, 3, 6};
  const LossOutput r = softmax_xent(scale(logits, 100.0), many);
  for (std::size_t n = 0; n < 5; ++n) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += r.probabilities[n * 7 + c];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  CHECK(std::isfinite(r.loss));

  const Tensor g = softmax_xent_backward(out, two, Shape{1, 2});
  CHECK(g[0] == doctest::Approx(out.probabilities[0] - 1.0));
  CHECK(g[1] == doctest::Approx(out.probabilities[1]));

  const std::size_t bad[] = {2};
  CHECK_THROWS_AS(softmax_xent(Tensor(Shape{1, 2}), bad), InvalidRange);
}
