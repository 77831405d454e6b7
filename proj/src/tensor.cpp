#include "rectnet/tensor.hpp"

#include <Eigen/Core>
#include <cstring>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw InvalidShape("shape must have at least one dimension");
  for (auto d : dims) {
    if (d == 0) throw InvalidShape(fmt::format("zero dimension in shape ({})", fmt::join(dims, ",")));
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate_dims(dims_); }

std::size_t Shape::numel() const noexcept {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::size_t Shape::numel_from(std::size_t axis) const {
  std::size_t n = 1;
  for (std::size_t i = axis; i < dims_.size(); ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const { return fmt::format("({})", fmt::join(dims_, ",")); }

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {
  if (shape_.rank() == 0) throw InvalidShape("tensor requires a non-empty shape");
}

Tensor::Tensor(Shape shape, const std::vector<double>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_.rank() == 0) throw InvalidShape("tensor requires a non-empty shape");
  if (data_.size() != shape_.numel()) {
    throw ShapeMismatch(fmt::format("data length {} does not match shape {}", data_.size(), shape_.str()));
  }
}

Tensor Tensor::uninitialized(Shape shape) {
  if (shape.rank() == 0) throw InvalidShape("tensor requires a non-empty shape");
  Tensor t;
  t.data_.resize(shape.numel());
  t.shape_ = std::move(shape);
  return t;
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape.numel() != data_.size()) {
    throw ShapeMismatch(fmt::format("cannot reshape {} to {}", shape_.str(), shape.str()));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor tensor_new(const Shape& shape, double fill) { return Tensor(shape, fill); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(fmt::format("{}: shape {} vs {}", op, a.shape().str(), b.shape().str()));
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor y = Tensor::uninitialized(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor scale(const Tensor& x, double factor) {
  return elementwise_map(x, [factor](double v) { return v * factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeMismatch("matmul: operands must be 2-d");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeMismatch(fmt::format("matmul: inner dims {} vs {}", a.shape().str(), b.shape().str()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor y(Shape{a.dim(0), b.dim(1)});
  Eigen::Map<RowMajor> out(y.raw(), m, n);
  out.noalias() = Eigen::Map<const RowMajor>(a.raw(), m, k) * Eigen::Map<const RowMajor>(b.raw(), k, n);
  return y;
}

double reduce_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 || std::memcmp(a.raw(), b.raw(), a.size() * sizeof(double)) == 0;
}

}  // namespace rectnet
