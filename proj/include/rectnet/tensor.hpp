#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rectnet {

/// Tensor dimensions. 4-d tensors are ordered N, C, H, W.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  /// Product of all dims; 0 for the unset (rank-0) shape.
  std::size_t numel() const noexcept;

  /// Product of dims from `axis` to the end.
  std::size_t numel_from(std::size_t axis) const;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

namespace detail {
inline constexpr std::size_t kBufferAlign = 64;

// 64-byte aligned storage; vector::resize leaves doubles uninitialized.
// Vectorized reductions peel a prefix that depends on the address, so a
// fixed alignment keeps results bitwise reproducible from run to run.
template <typename T>
struct BufferAllocator : std::allocator<T> {
  using value_type = T;
  template <typename U>
  struct rebind {
    using other = BufferAllocator<U>;
  };
  BufferAllocator() = default;
  template <typename U>
  BufferAllocator(const BufferAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlign}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kBufferAlign}); }
  template <typename U>
  bool operator==(const BufferAllocator<U>&) const noexcept {
    return true;
  }
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};
}  // namespace detail

using Buffer = std::vector<double, detail::BufferAllocator<double>>;

/// Dense row-major tensor of doubles. A default-constructed tensor is empty
/// and is used as a "not yet computed" placeholder.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& data);

  /// Storage left uninitialized; the caller must write every element.
  static Tensor uninitialized(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  /// Same data, new shape; element counts must agree.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);

 private:
  Shape shape_;
  Buffer data_;
};

Tensor tensor_new(const Shape& shape, double fill);

template <typename F>
Tensor elementwise_map(const Tensor& x, F&& f) {
  Tensor y = Tensor::uninitialized(x.shape());
  const auto in = x.data();
  auto out = y.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return y;
}

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// 2-d matrix product (m x k) * (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);

double reduce_sum(const Tensor& x);

/// Same shape and identical bit patterns in every element.
bool bitwise_equal(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace rectnet
