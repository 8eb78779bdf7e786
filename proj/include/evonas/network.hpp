#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "evonas/architecture.hpp"
#include "evonas/layers.hpp"

namespace evonas {

inline constexpr std::size_t kClassCount = 2;

// One gradient buffer per parameter tensor, in Network::parameters() order.
template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
struct ForwardTrace {
  std::vector<Tensor4<T>> inputs;                  // input to each layer
  std::vector<std::vector<std::size_t>> argmax;    // populated for pool layers only
  Tensor4<T> logits;
};

// Linear stack of layers ending in Dense(kClassCount). Scalar type T selects
// the precision (float or double); velocity buffers for momentum SGD live here.
template <typename T>
class Network {
 public:
  Network(Dims input_shape, std::vector<Layer<T>> layers);

  const Dims& input_shape() const { return input_shape_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::size_t class_count() const { return kClassCount; }
  Architecture architecture() const;

  // Parameter tensors in fixed order: per layer, weights then bias.
  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;
  std::size_t parameter_count() const;

  Tensor4<T> forward(const Tensor4<T>& batch) const;
  ForwardTrace<T> forward_trace(const Tensor4<T>& batch) const;
  Gradients<T> backward(const ForwardTrace<T>& trace, const Tensor4<T>& grad_logits) const;

  // Loss and gradients of mean cross-entropy for one batch.
  std::pair<T, Gradients<T>> loss_and_gradients(const Tensor4<T>& batch, std::span<const int> labels) const;
  T loss(const Tensor4<T>& batch, std::span<const int> labels) const;

  // v <- momentum*v - lr*g; w <- w + v.
  void sgd_step(const Gradients<T>& grads, double lr, double momentum);

  // forward + backward + sgd_step; returns the pre-step loss.
  T train_batch(const Tensor4<T>& batch, std::span<const int> labels, double lr, double momentum);

  // Kaiming-style uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero bias.
  void initialize(std::uint64_t seed);

  // Order-sensitive FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;

  Network<float> to_float() const;
  Network<double> to_double() const;

 private:
  void check_batch(const Tensor4<T>& batch) const;

  Dims input_shape_;
  std::vector<Layer<T>> layers_;
  Gradients<T> velocity_;
};

// Element-wise precision conversion of every parameter tensor.
template <typename To, typename From>
Network<To> network_cast(const Network<From>& src);

template <typename T>
using GradientFn = std::function<Gradients<T>(const Network<T>&, const Tensor4<T>&, std::span<const int>)>;

// Max over all parameters of |analytic - central difference| / max(|analytic|, |cd|, 1e-12).
// `analytic` defaults to Network::loss_and_gradients; overriding it lets tests feed a faulty backward.
// The finite differences are evaluated on an extended-precision copy of the network.
double grad_check(const Network<double>& network, const Tensor4<double>& batch, std::span<const int> labels,
                  double epsilon, const GradientFn<double>& analytic = {});

}  // namespace evonas
