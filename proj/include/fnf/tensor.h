#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fnf {

// Dense row-major tensor with up to four dimensions.
// Images use shape {H, W, C} with C=3 for linear camera RGB.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_count(shape_), fill) {}

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_count(shape_))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  T& at(int a) {
    assert(ndim() == 1);
    return data_[static_cast<size_t>(a)];
  }
  T& at(int a, int b) {
    assert(ndim() == 2);
    return data_[static_cast<size_t>(a) * shape_[1] + b];
  }
  T& at(int a, int b, int c) {
    assert(ndim() == 3);
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  T& at(int a, int b, int c, int d) {
    assert(ndim() == 4);
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const T& at(int a) const { return const_cast<Tensor*>(this)->at(a); }
  const T& at(int a, int b) const { return const_cast<Tensor*>(this)->at(a, b); }
  const T& at(int a, int b, int c) const { return const_cast<Tensor*>(this)->at(a, b, c); }
  const T& at(int a, int b, int c, int d) const {
    return const_cast<Tensor*>(this)->at(a, b, c, d);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  static int64_t checked_count(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must not be empty");
    if (shape.size() > 4) throw std::invalid_argument("tensor rank > 4 unsupported");
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Image = Tensor<float>;

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// H x W x 3 check shared by the image pipeline.
template <typename T>
void require_hw3(const Tensor<T>& t, const char* what) {
  if (t.ndim() != 3 || t.dim(2) != 3)
    throw std::invalid_argument(std::string(what) + ": expected HxWx3, got " +
                                shape_str(t.shape()));
}

}  // namespace fnf
