#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stripdet {

// Shape of a rank-4 NCHW feature map.
struct Dims {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t count() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;

  std::string str() const {
    std::ostringstream oss;
    oss << "(" << n << "," << c << "," << h << "," << w << ")";
    return oss.str();
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense rank-4 tensor, row-major with batch outermost and width innermost.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;

  explicit Tensor4(Dims dims, T fill = T(0)) : dims_(dims), data_(dims.count(), fill) {}

  Tensor4(Dims dims, std::vector<T> values) : dims_(dims), data_(std::move(values)) {
    if (data_.size() != dims_.count()) {
      throw ShapeError("length mismatch: dims " + dims_.str() + " expect " +
                       std::to_string(dims_.count()) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  Tensor4(Dims dims, std::initializer_list<T> values)
      : Tensor4(dims, std::vector<T>(values)) {}

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }
  std::vector<T>& values() { return data_; }

  std::size_t index(std::size_t b, std::size_t c, std::size_t i, std::size_t j) const {
    return ((b * dims_.c + c) * dims_.h + i) * dims_.w + j;
  }

  T& operator()(std::size_t b, std::size_t c, std::size_t i, std::size_t j) {
    return data_[index(b, c, i, j)];
  }
  const T& operator()(std::size_t b, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[index(b, c, i, j)];
  }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  // Pointer to the start of plane (b, c).
  T* plane(std::size_t b, std::size_t c) { return data_.data() + (b * dims_.c + c) * dims_.plane(); }
  const T* plane(std::size_t b, std::size_t c) const {
    return data_.data() + (b * dims_.c + c) * dims_.plane();
  }

  Tensor4 reshaped(Dims dims) const {
    if (dims.count() != dims_.count()) {
      throw ShapeError("reshape " + dims_.str() + " -> " + dims.str() + " changes element count");
    }
    Tensor4 out = *this;
    out.dims_ = dims;
    return out;
  }

  template <typename U>
  Tensor4<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor4<U>(dims_, std::move(out));
  }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  T sum() const {
    T s = T(0);
    for (const T& v : data_) s += v;
    return s;
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_{};
  std::vector<T> data_;
};

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

enum class Elementwise { add, mul };

template <typename T>
Tensor4<T> elementwise(Elementwise op, const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_dims(a.dims(), b.dims(), "elementwise");
  Tensor4<T> out(a.dims());
  const std::size_t n = a.size();
  if (op == Elementwise::add) {
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] + b[k];
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * b[k];
  }
  return out;
}

}  // namespace stripdet
