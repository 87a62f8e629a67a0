#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rdc/common.hpp"

namespace rdc {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Value semantics; copies are deep.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw invariant_error("tensor data size does not match shape " +
                            shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
  static Tensor from(std::initializer_list<T> vals) {
    return Tensor({static_cast<int64_t>(vals.size())},
                  std::vector<T>(vals.begin(), vals.end()));
  }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // NCHW helpers.
  T& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T& at3(int64_t c, int64_t h, int64_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  const T& at3(int64_t c, int64_t h, int64_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  T& at2(int64_t r, int64_t c) { return data_[r * shape_[1] + c]; }
  const T& at2(int64_t r, int64_t c) const { return data_[r * shape_[1] + c]; }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw invariant_error("reshape numel mismatch " + shape_str(shape_) +
                            " -> " + shape_str(s));
    Tensor out = *this;
    out.shape_ = std::move(s);
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename F>
  Tensor<T> map(F f) const {
    Tensor<T> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = f(data_[i]);
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

  double sum() const {
    double acc = 0.0;
    for (const T& v : data_) acc += static_cast<double>(v);
    return acc;
  }
  double mean() const { return numel() ? sum() / numel() : 0.0; }
  T min() const { return *std::min_element(data_.begin(), data_.end()); }
  T max() const { return *std::max_element(data_.begin(), data_.end()); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool bitwise_equal(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                             const char* what) {
  if (!a.same_shape(b))
    throw invariant_error(std::string(what) + ": shape mismatch " +
                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace rdc
