#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evonas {

enum class Precision { f32, f64 };

Precision parse_precision(const std::string& text);
std::string to_string(Precision p);

// Raised by every nn-core op when operand shapes disagree.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// (channels, rows, cols) of a single sample.
struct Dims {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return c * h * w; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  Dims sample() const { return {c, h, w}; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

// Dense NCHW tensor; row-major with n outermost.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;

  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) { check_shape(); }

  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_.size()) {
      throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) + " != " + to_string(shape_) +
                          " element count " + std::to_string(shape_.size()));
    }
  }

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  // Same data viewed under a different shape with equal element count.
  Tensor4 reshaped(Shape4 shape) const& { return Tensor4(shape, data_); }
  Tensor4 reshaped(Shape4 shape) && { return Tensor4(shape, std::move(data_)); }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  void check_shape() const {
    if (shape_.n == 0 || shape_.c == 0 || shape_.h == 0 || shape_.w == 0) {
      throw ShapeMismatch("tensor shape components must be >= 1, got " + to_string(shape_));
    }
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

}  // namespace evonas
