#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "evonas/architecture.hpp"
#include "evonas/tensor.hpp"

namespace evonas {

template <typename T>
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  Tensor4<T> weights;  // (out_channels, in_channels, kernel, kernel)
  std::vector<T> bias;  // out_channels

  // Zero-initialized layer with consistent tensor shapes.
  static Conv2d zeros(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride);
  ConvSpec spec() const { return {in_channels, out_channels, kernel, stride}; }
};

struct MaxPool {
  std::size_t size = 2;
  std::size_t stride = 2;
  PoolSpec spec() const { return {size, stride}; }
};

struct ReLU {};
struct Flatten {};

template <typename T>
struct Dense {
  std::size_t in_units = 0;
  std::size_t out_units = 0;
  Tensor4<T> weights;  // (out_units, in_units, 1, 1), i.e. a row-major out x in matrix
  std::vector<T> bias;  // out_units

  static Dense zeros(std::size_t in_units, std::size_t out_units);
  DenseSpec spec() const { return {in_units, out_units}; }
};

template <typename T>
using Layer = std::variant<Conv2d<T>, MaxPool, ReLU, Flatten, Dense<T>>;

template <typename T>
LayerSpec spec_of(const Layer<T>& layer);

// --- convolution (valid padding, cross-correlation) ---

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const Conv2d<T>& layer);

template <typename T>
struct ConvGrads {
  Tensor4<T> input;
  Tensor4<T> weights;
  std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const Conv2d<T>& layer, const Tensor4<T>& grad_out);

// --- max pooling; ties resolve to the first row-major element of the window ---

template <typename T>
struct PoolForward {
  Tensor4<T> output;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

template <typename T>
PoolForward<T> maxpool_forward(const Tensor4<T>& input, const MaxPool& layer);

template <typename T>
Tensor4<T> maxpool_backward(std::span<const std::size_t> argmax, const Shape4& input_shape,
                            const Tensor4<T>& grad_out);

// --- elementwise ---

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& input);

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out);

// --- affine; input is viewed as an (n x c*h*w) matrix ---

template <typename T>
Tensor4<T> dense_forward(const Tensor4<T>& input, const Dense<T>& layer);

template <typename T>
struct DenseGrads {
  Tensor4<T> input;
  Tensor4<T> weights;
  std::vector<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor4<T>& input, const Dense<T>& layer, const Tensor4<T>& grad_out);

// --- loss ---

template <typename T>
struct LossResult {
  T loss = T(0);
  Tensor4<T> grad_logits;
};

// Mean softmax cross-entropy over the batch; logits are (n, classes, 1, 1).
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, std::span<const int> labels);

// Row-wise softmax of (n, classes, 1, 1) logits.
template <typename T>
std::vector<T> softmax_rows(const Tensor4<T>& logits);

}  // namespace evonas
