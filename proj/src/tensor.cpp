#include "signet/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>

namespace signet {

namespace {

std::int64_t product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

void require_valid_dims(const std::vector<std::int64_t>& shape,
                        std::int64_t min_dim) {
  for (std::int64_t d : shape) {
    if (d < min_dim) {
      throw Error(ErrorKind::shape, "invalid dimension " + std::to_string(d) +
                                        " in shape " + shape_to_string(shape));
    }
  }
}

std::vector<std::int64_t> row_major_strides(
    const std::vector<std::int64_t>& shape) {
  std::vector<std::int64_t> strides(shape.size());
  std::int64_t stride = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = stride;
    stride *= shape[i];
  }
  return strides;
}

}  // namespace

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
TensorT<T>::TensorT(std::vector<std::int64_t> shape) {
  require_valid_dims(shape, 0);
  shape_ = std::move(shape);
  strides_ = row_major_strides(shape_);
  data_.assign(static_cast<std::size_t>(product(shape_)), T(0));
}

template <typename T>
TensorT<T> TensorT<T>::filled(std::vector<std::int64_t> shape, T value) {
  require_valid_dims(shape, 1);
  TensorT t(std::move(shape));
  for (T& x : t.data_) x = value;
  t.check_finite("filled");
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::uniform(std::vector<std::int64_t> shape, double lo,
                               double hi, Rng& rng) {
  require_valid_dims(shape, 1);
  TensorT t(std::move(shape));
  for (T& x : t.data_) x = static_cast<T>(rng.uniform(lo, hi));
  t.check_finite("uniform fill");
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::normal(std::vector<std::int64_t> shape, double mean,
                              double stddev, Rng& rng) {
  require_valid_dims(shape, 1);
  TensorT t(std::move(shape));
  for (T& x : t.data_) x = static_cast<T>(rng.normal(mean, stddev));
  t.check_finite("normal fill");
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::from_data(std::vector<std::int64_t> shape,
                                 std::vector<T> data) {
  require_valid_dims(shape, 0);
  if (product(shape) != static_cast<std::int64_t>(data.size())) {
    throw Error(ErrorKind::shape,
                "data of " + std::to_string(data.size()) +
                    " elements does not fill shape " + shape_to_string(shape));
  }
  TensorT t;
  t.shape_ = std::move(shape);
  t.strides_ = row_major_strides(t.shape_);
  t.data_ = std::move(data);
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::identity(std::int64_t n) {
  TensorT t(std::vector<std::int64_t>{n, n});
  for (std::int64_t i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
  return t;
}

template <typename T>
T& TensorT<T>::at(std::initializer_list<std::int64_t> index) {
  return const_cast<T&>(static_cast<const TensorT&>(*this).at(index));
}

template <typename T>
const T& TensorT<T>::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<std::int64_t>(index.size()) != ndim()) {
    throw Error(ErrorKind::shape, "index rank mismatch");
  }
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (std::int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) {
      throw Error(ErrorKind::shape, "index out of bounds on axis " +
                                        std::to_string(axis) + " of shape " +
                                        shape_str());
    }
    flat += i * strides_[axis];
    ++axis;
  }
  return data_[flat];
}

template <typename T>
TensorT<T> TensorT<T>::reshaped(std::vector<std::int64_t> new_shape) const {
  require_valid_dims(new_shape, 0);
  if (product(new_shape) != numel()) {
    throw Error(ErrorKind::shape, "cannot reshape " + shape_str() + " to " +
                                      shape_to_string(new_shape));
  }
  return from_data(std::move(new_shape), data_);
}

template <typename T>
void TensorT<T>::check_finite(const std::string& context) const {
  for (const T& x : data_) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw Error(ErrorKind::numeric,
                  "non-finite value produced by " + context);
    }
  }
}

template <typename T>
std::string TensorT<T>::shape_str() const {
  return shape_to_string(shape_);
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw Error(ErrorKind::shape, "matmul requires 2-D operands, got " +
                                      a.shape_str() + " and " + b.shape_str());
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorKind::shape, "matmul inner dimensions differ: " +
                                      a.shape_str() + " x " + b.shape_str());
  }
  TensorT<T> c(std::vector<std::int64_t>{m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  // i-k-j order keeps both b and c accesses contiguous in the inner loop.
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T aik = pa[i * k + kk];
      const T* brow = pb + kk * n;
      T* crow = pc + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  c.check_finite("matmul");
  return c;
}

namespace {

template <typename T>
T apply_ew(T x, T y, EwOp op) {
  switch (op) {
    case EwOp::add: return x + y;
    case EwOp::sub: return x - y;
    case EwOp::mul: return x * y;
    case EwOp::div:
      if (y == T(0)) {
        throw Error(ErrorKind::numeric, "elementwise division by zero");
      }
      return x / y;
    case EwOp::max: return x > y ? x : y;
  }
  throw Error(ErrorKind::usage, "unknown elementwise op");
}

}  // namespace

template <typename T>
TensorT<T> elementwise(const TensorT<T>& a, const TensorT<T>& b, EwOp op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::shape, "elementwise shape mismatch: " +
                                      a.shape_str() + " vs " + b.shape_str());
  }
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    out[i] = apply_ew(a[i], b[i], op);
  }
  out.check_finite("elementwise");
  return out;
}

template <typename T>
TensorT<T> elementwise(const TensorT<T>& a, T scalar, EwOp op) {
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    out[i] = apply_ew(a[i], scalar, op);
  }
  out.check_finite("elementwise");
  return out;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  if (a.ndim() != 2) {
    throw Error(ErrorKind::shape, "transpose2d requires a 2-D tensor");
  }
  const std::int64_t m = a.dim(0), n = a.dim(1);
  TensorT<T> out(std::vector<std::int64_t>{n, m});
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      out[j * m + i] = a[i * n + j];
    }
  }
  return out;
}

template class TensorT<float>;
template class TensorT<double>;

template TensorT<float> matmul(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> matmul(const TensorT<double>&,
                                const TensorT<double>&);
template TensorT<float> elementwise(const TensorT<float>&,
                                    const TensorT<float>&, EwOp);
template TensorT<double> elementwise(const TensorT<double>&,
                                     const TensorT<double>&, EwOp);
template TensorT<float> elementwise(const TensorT<float>&, float, EwOp);
template TensorT<double> elementwise(const TensorT<double>&, double, EwOp);
template TensorT<float> transpose2d(const TensorT<float>&);
template TensorT<double> transpose2d(const TensorT<double>&);

}  // namespace signet
