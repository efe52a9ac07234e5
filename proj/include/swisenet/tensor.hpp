#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "swisenet/error.hpp"

namespace swisenet {

/// Dimension list of a rank-1..4 tensor. Rank-4 tensors are laid out as
/// (batch, row, column, channel), row-major.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t i) const { return dims_[i]; }
  std::int64_t numel() const;
  const std::vector<std::int64_t>& dims() const { return dims_; }

  bool operator==(const Shape& other) const = default;

  // "(2,150,150,64)"
  std::string str() const;

 private:
  std::vector<std::int64_t> dims_;
};

/// Dense real-valued array. Value type of the whole math core; gradients live
/// on the tape node or Parameter that owns the tensor.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::int64_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 element access (n, h, w, c).
  T& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
    return data_[offset(n, h, w, c)];
  }
  const T& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
    return data_[offset(n, h, w, c)];
  }
  // Rank-2 element access (row, col).
  T& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  const T& at(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }

  void fill(T value);
  bool all_finite() const;
  T item() const;

  // Same data, new dimensions with equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  std::size_t offset(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
    return static_cast<std::size_t>(((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c);
  }

  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace swisenet
