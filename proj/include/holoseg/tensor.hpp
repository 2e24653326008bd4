#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace holoseg {

using Index = std::ptrdiff_t;

/// Large negative score used for masking. Finite so arithmetic never
/// produces NaN, yet below any real score.
inline constexpr double kNegMask = -1.0e30;

/// Thrown for shape errors and violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Dims = std::vector<Index>;

inline std::string dims_to_string(const Dims& dims) {
  std::string out = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + ")";
}

/// Dense row-major N-dimensional array. Maps use (height, width, channel).
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() = default;

  explicit BasicTensor(Dims dims, Scalar fill = Scalar(0)) : dims_(std::move(dims)) {
    data_.setConstant(checked_size(dims_), fill);
  }

  BasicTensor(std::initializer_list<Index> dims, Scalar fill = Scalar(0))
      : BasicTensor(Dims(dims), fill) {}

  BasicTensor(Dims dims, Storage data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_size(dims_) != data_.size()) {
      throw Error("tensor: data length " + std::to_string(data_.size()) +
                  " does not match dims " + dims_to_string(dims_));
    }
  }

  static BasicTensor from_vector(Dims dims, const std::vector<Scalar>& values) {
    Storage data = Eigen::Map<const Storage>(values.data(), static_cast<Index>(values.size()));
    return BasicTensor(std::move(dims), std::move(data));
  }

  const Dims& dims() const { return dims_; }
  Index dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const { return dims_.size(); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // (y, x, k) access for rank-3 maps.
  Scalar& operator()(Index y, Index x, Index k) { return data_[(y * dims_[1] + x) * dims_[2] + k]; }
  Scalar operator()(Index y, Index x, Index k) const {
    return data_[(y * dims_[1] + x) * dims_[2] + k];
  }

  /// Channel vector of pixel (y, x) in a rank-3 map.
  auto pixel(Index y, Index x) { return data_.segment((y * dims_[1] + x) * dims_[2], dims_[2]); }
  auto pixel(Index y, Index x) const {
    return data_.segment((y * dims_[1] + x) * dims_[2], dims_[2]);
  }

  /// Elementwise transform producing a new tensor of the same shape.
  template <typename F>
  BasicTensor unary(F&& f) const {
    return BasicTensor(dims_, Storage(data_.unaryExpr(std::forward<F>(f))));
  }

  bool same_shape(const BasicTensor& other) const { return dims_ == other.dims_; }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(dims_, data_.template cast<Other>().eval());
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && (a.data_ == b.data_).all();
  }

 private:
  static Index checked_size(const Dims& dims) {
    Index n = 1;
    for (Index d : dims) {
      if (d <= 0) throw Error("tensor: extents must be positive, got " + dims_to_string(dims));
      n *= d;
    }
    return n;
  }

  Dims dims_;
  Storage data_;
};

using Tensor = BasicTensor<double>;

/// Value and gradient of the same shape, used by the backward passes.
template <typename Scalar>
struct BasicGradPair {
  BasicTensor<Scalar> value;
  BasicTensor<Scalar> gradient;
};

using GradPair = BasicGradPair<double>;

template <typename Scalar>
void require_same_shape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": shape mismatch " + dims_to_string(a.dims()) + " vs " +
                dims_to_string(b.dims()));
  }
}

template <typename Scalar>
void require_rank(const BasicTensor<Scalar>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw Error(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                dims_to_string(t.dims()));
  }
}

/// Per-pixel class labels, row-major (height, width).
using LabelMap = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::int32_t kDefaultIgnoreLabel = 255;

/// Set of class indices present in (or predicted for) one image.
using LabelSet = std::set<std::int32_t>;

}  // namespace holoseg
