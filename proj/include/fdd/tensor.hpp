#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdd/error.hpp"

namespace fdd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

/// Dense row-major tensor with value semantics.
template <class Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_extents();
  }

  BasicTensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_)) {
      detail::throw_dimension("tensor data length " +
                              std::to_string(data_.size()) +
                              " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  Real* raw() noexcept { return data_.data(); }
  const Real* raw() const noexcept { return data_.data(); }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// NCHW element access for rank-4 tensors.
  Real& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const Real& at(std::size_t n, std::size_t c, std::size_t h,
                 std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      detail::throw_dimension("cannot reshape " + shape_string(shape_) +
                              " to " + shape_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  void fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](Real v) { return std::isfinite(v); });
  }

  template <class Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_,
                              std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) {
        detail::throw_dimension("tensor extents must be positive, got " +
                                shape_string(shape_));
      }
    }
  }

  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

template <class Real>
void require_same_shape(const BasicTensor<Real>& a, const BasicTensor<Real>& b,
                        const char* what) {
  if (a.shape() != b.shape()) {
    detail::throw_dimension(std::string(what) + ": shape " +
                            shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
  }
}

template <class Real>
void add_into(BasicTensor<Real>& dst, const BasicTensor<Real>& src) {
  require_same_shape(dst, src, "add_into");
  Real* d = dst.raw();
  const Real* s = src.raw();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace fdd
