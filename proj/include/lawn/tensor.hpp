#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lawn::nn {

namespace detail {

/// Size-bucketed buffer recycler. Training reallocates the same few dozen
/// buffer sizes every step; reusing them sidesteps allocator/page churn,
/// which is expensive under sandboxed kernels.
float* pool_alloc_floats(size_t n);
void pool_free_floats(float* p, size_t n) noexcept;

// Pool-backed and default-initializing: resize leaves floats uninitialized,
// so operator results that overwrite their whole buffer skip a zeroing pass.
template <typename T>
struct TensorAlloc {
  using value_type = T;
  TensorAlloc() = default;
  template <typename U>
  TensorAlloc(const TensorAlloc<U>&) {}

  T* allocate(size_t n) {
    if constexpr (std::is_same_v<T, float>) return pool_alloc_floats(n);
    else return std::allocator<T>().allocate(n);
  }
  void deallocate(T* p, size_t n) noexcept {
    if constexpr (std::is_same_v<T, float>) pool_free_floats(p, n);
    else std::allocator<T>().deallocate(p, n);
  }
  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  bool operator==(const TensorAlloc&) const { return true; }
};

}  // namespace detail

/// Dense row-major float32 container. Activations use NHWC layout
/// (batch, height, width, channels). Plain construction zero-fills;
/// Tensor::uninitialized skips the fill for buffers written in full.
class Tensor {
 public:
  using Buffer = std::vector<float, detail::TensorAlloc<float>>;

  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0f);
  }

  Tensor(std::vector<int64_t> shape, const std::vector<float>& data)
      : shape_(std::move(shape)) {
    if (static_cast<size_t>(checked_numel(shape_)) != data.size())
      throw std::invalid_argument("Tensor: data length does not match shape");
    data_.assign(data.begin(), data.end());
  }

  static Tensor uninitialized(std::vector<int64_t> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(static_cast<size_t>(checked_numel(t.shape_)));
    return t;
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, float v) {
    Tensor t = uninitialized(std::move(shape));
    for (float& x : t.data_) x = v;
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](size_t i) { return data_[i]; }
  float operator[](size_t i) const { return data_[i]; }

  /// Reinterprets the buffer under a new shape with the same element count.
  Tensor reshaped(std::vector<int64_t> shape) const {
    if (checked_numel(shape) != numel())
      throw std::invalid_argument("Tensor: reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool operator==(const Tensor& o) const = default;

  std::string shape_string() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static int64_t checked_numel(const std::vector<int64_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 1) throw std::invalid_argument("Tensor: nonpositive dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  Buffer data_;
};

}  // namespace lawn::nn
