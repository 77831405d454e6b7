#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rectnet/errors.hpp"
#include "rectnet/rng.hpp"
#include "rectnet/tensor.hpp"

using namespace rectnet;

TEST_CASE("tensor_new fills every element") {
  const Tensor t = tensor_new(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.shape() == Shape{2, 3});
  for (double v : t.data()) CHECK(v == 1.5);
}

TEST_CASE("zero or missing dimensions are rejected") {
  CHECK_THROWS_AS(tensor_new(Shape{2, 0}, 0.0), InvalidShape);
  CHECK_THROWS_AS(Tensor(Shape{}), InvalidShape);
}

TEST_CASE("data constructor checks length") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeMismatch);
  const Tensor t(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(t[3] == 4);
}

TEST_CASE("4-d indexing is row-major NCHW") {
  Tensor t(Shape{2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 7.0;
  CHECK(t[t.size() - 1] == 7.0);
  t.at(0, 1, 0, 0) = 3.0;
  CHECK(t[20] == 3.0);
}

TEST_CASE("add") {
  const Tensor a(Shape{3}, {1, 2, 3});
  const Tensor b(Shape{3}, {10, 20, 30});
  const Tensor c = add(a, b);
  CHECK(c[0] == 11);
  CHECK(c[2] == 33);
  CHECK_THROWS_AS(add(a, Tensor(Shape{4})), ShapeMismatch);
}

TEST_CASE("matmul matches a hand product") {
  const Tensor a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b(Shape{3, 2}, {7, 8, 9, 10, 11, 12});
  const Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 2});
  CHECK(c[0] == 58);
  CHECK(c[1] == 64);
  CHECK(c[2] == 139);
  CHECK(c[3] == 154);
  CHECK_THROWS_AS(matmul(a, a), ShapeMismatch);
}

TEST_CASE("reduce_sum") {
  CHECK(reduce_sum(Tensor(Shape{3}, {1, 2, 3})) == 6);
  CHECK(reduce_sum(tensor_new(Shape{10, 10}, 0.5)) == 50);
}

TEST_CASE("reshape keeps data and checks counts") {
  const Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped(Shape{3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r[5] == 6);
  CHECK_THROWS_AS(t.reshaped(Shape{4}), ShapeMismatch);
}

TEST_CASE("bitwise_equal distinguishes signed zero") {
  const Tensor a(Shape{1}, {0.0});
  const Tensor b(Shape{1}, {-0.0});
  CHECK_FALSE(bitwise_equal(a, b));
  CHECK(bitwise_equal(a, a));
  CHECK_FALSE(bitwise_equal(a, Tensor(Shape{1, 1})));
}

TEST_CASE("elementwise_map") {
  const Tensor y = elementwise_map(Tensor(Shape{2}, {1, -2}), [](double v) { return v * v; });
  CHECK(y[0] == 1);
  CHECK(y[1] == 4);
}

TEST_CASE("uniform_sample mean near the midpoint") {
  RngStream rng(7, 0);
  const std::size_t n = 100000;
  const Tensor s = uniform_sample(rng, 3.0, 8.0, n);
  const double mean = reduce_sum(s) / n;
  const double sigma = 5.0 / std::sqrt(12.0);
  CHECK(std::abs(mean - 5.5) < 3.0 * sigma / std::sqrt(double(n)));
  const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
  CHECK(*lo >= 3.0);
  CHECK(*hi < 8.0);
}

TEST_CASE("uniform_sample rejects empty ranges") {
  RngStream rng(1, 0);
  CHECK_THROWS_AS(uniform_sample(rng, 2.0, 2.0, 10), InvalidRange);
  CHECK_THROWS_AS(uniform_sample(rng, 3.0, 2.0, 10), InvalidRange);
}
