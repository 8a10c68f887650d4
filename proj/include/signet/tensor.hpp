#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "signet/error.hpp"
#include "signet/rng.hpp"

namespace signet {

// Dense n-dimensional array, row-major (last dimension fastest), contiguous.
// Value semantics: once constructed a tensor is never mutated in place by
// public operations, so copies may be shared freely across threads.
//
// float is the training dtype; double exists for finite-difference gradient
// checks, which need the extra precision.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  // Zero tensor. Dimensions of size zero are representable (they arise from
  // empty contractions) but the fill factories below require dims >= 1.
  explicit TensorT(std::vector<std::int64_t> shape);

  static TensorT filled(std::vector<std::int64_t> shape, T value);
  static TensorT uniform(std::vector<std::int64_t> shape, double lo, double hi,
                         Rng& rng);
  static TensorT normal(std::vector<std::int64_t> shape, double mean,
                        double stddev, Rng& rng);
  static TensorT from_data(std::vector<std::int64_t> shape,
                           std::vector<T> data);
  static TensorT identity(std::int64_t n);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  const std::vector<std::int64_t>& strides() const { return strides_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(std::size_t i) const { return shape_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t flat) { return data_[flat]; }
  const T& operator[](std::int64_t flat) const { return data_[flat]; }

  // Bounds-checked multi-index access; flat offset is sum(index[i]*stride[i]).
  T& at(std::initializer_list<std::int64_t> index);
  const T& at(std::initializer_list<std::int64_t> index) const;

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  // Reinterprets the buffer under a new shape with the same element count.
  TensorT reshaped(std::vector<std::int64_t> new_shape) const;

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return TensorT<U>::from_data(shape_, std::move(out));
  }

  // Throws ErrorKind::numeric if any element is NaN or Inf.
  void check_finite(const std::string& context) const;

  std::string shape_str() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<std::int64_t> strides_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

enum class EwOp { add, sub, mul, div, max };

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> elementwise(const TensorT<T>& a, const TensorT<T>& b, EwOp op);

template <typename T>
TensorT<T> elementwise(const TensorT<T>& a, T scalar, EwOp op);

// 2-D transpose; returns a contiguous copy.
template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a);

std::string shape_to_string(const std::vector<std::int64_t>& shape);

}  // namespace signet
