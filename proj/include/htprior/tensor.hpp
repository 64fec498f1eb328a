#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "htprior/common.hpp"

namespace htprior {

// Extents of a rank <= 4 row-major array.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { check(); }
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { check(); }

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::size_t numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
  }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  void check() const {
    if (dims_.size() > kMaxRank) throw ConfigError("tensor rank above 4: " + str());
  }

  std::vector<std::size_t> dims_;
};

// Dense array with shape metadata and an optional gradient buffer. Images are
// [H, W, C], Hough maps [n_rho, n_theta, C], conv kernels [kh, kw, Cin, Cout]
// or [k, Cin, Cout].
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_.numel(), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }

  std::span<T> data() & { return data_; }
  std::span<const T> data() const& { return data_; }
  // a span into a temporary would dangle
  std::span<const T> data() const&& = delete;
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // rank-3 accessor, the common case for images and Hough maps
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    const auto& d = shape_.dims();
    return data_[(i * d[1] + j) * d[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    const auto& d = shape_.dims();
    return data_[(i * d[1] + j) * d[2] + k];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  bool has_grad() const { return grad_.has_value(); }
  std::span<T> grad() { return *grad_; }
  std::span<const T> grad() const { return *grad_; }
  void zero_grad() { grad_.emplace(data_.size(), T{0}); }
  void clear_grad() { grad_.reset(); }
  void accumulate_grad(std::span<const T> g) {
    if (!grad_) zero_grad();
    assert(g.size() == data_.size());
    for (std::size_t i = 0; i < g.size(); ++i) (*grad_)[i] += g[i];
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<T>> grad_;
};

using Tensor = BasicTensor<float>;

template <typename T, typename Rng>
BasicTensor<T> random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ConfigError("dot: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ConfigError("shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace htprior
