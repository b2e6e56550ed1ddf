#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sisn/error.hpp"

namespace sisn {

// N x C x H x W extent. Every component is strictly positive.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool valid() const { return n > 0 && c > 0 && h > 0 && w > 0; }
  bool is_scalar() const { return n == 1 && c == 1 && h == 1 && w == 1; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

// Dense row-major (N, C, H, W) array. Value semantics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}) {}

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape) {
    require(shape.valid(), ErrorKind::kInvalidArgument, "tensor shape must be positive, got " + shape.str());
    data_.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(shape.valid(), ErrorKind::kInvalidArgument, "tensor shape must be positive, got " + shape.str());
    require(data_.size() == shape.numel(), ErrorKind::kShapeMismatch,
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
  }

  static Tensor scalar(T value) { return Tensor(Shape{1, 1, 1, 1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace sisn
