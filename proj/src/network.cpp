#include "evonas/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "evonas/rng.hpp"

namespace evonas {

template <typename T>
Network<T>::Network(Dims input_shape, std::vector<Layer<T>> layers)
    : input_shape_(input_shape), layers_(std::move(layers)) {
  if (input_shape_.c == 0 || input_shape_.h == 0 || input_shape_.w == 0) {
    throw ShapeMismatch("network input shape must be >= 1 in every dimension, got " + to_string(input_shape_));
  }
  if (layers_.empty()) throw ShapeMismatch("network has no layers");
  const auto* last = std::get_if<Dense<T>>(&layers_.back());
  if (last == nullptr || last->out_units != kClassCount) {
    throw ShapeMismatch("network must end in Dense with " + std::to_string(kClassCount) + " outputs");
  }
  const Architecture arch = architecture();
  trace_dims(arch);  // throws on any inconsistency
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (const auto* c = std::get_if<Conv2d<T>>(&layers_[i])) {
      if (c->weights.shape() != Shape4{c->out_channels, c->in_channels, c->kernel, c->kernel} ||
          c->bias.size() != c->out_channels) {
        throw ShapeMismatch("layer " + std::to_string(i) + ": conv weight tensors do not match hyperparameters");
      }
    } else if (const auto* d = std::get_if<Dense<T>>(&layers_[i])) {
      if (d->weights.size() != d->in_units * d->out_units || d->bias.size() != d->out_units) {
        throw ShapeMismatch("layer " + std::to_string(i) + ": dense weight tensors do not match hyperparameters");
      }
    }
  }
}

template <typename T>
Architecture Network<T>::architecture() const {
  Architecture arch{input_shape_, {}};
  arch.layers.reserve(layers_.size());
  for (const auto& l : layers_) arch.layers.push_back(spec_of<T>(l));
  return arch;
}

template <typename T>
std::vector<std::span<T>> Network<T>::parameters() {
  std::vector<std::span<T>> out;
  for (auto& l : layers_) {
    if (auto* c = std::get_if<Conv2d<T>>(&l)) {
      out.emplace_back(c->weights.values());
      out.emplace_back(c->bias);
    } else if (auto* d = std::get_if<Dense<T>>(&l)) {
      out.emplace_back(d->weights.values());
      out.emplace_back(d->bias);
    }
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> Network<T>::parameters() const {
  std::vector<std::span<const T>> out;
  for (const auto& l : layers_) {
    if (const auto* c = std::get_if<Conv2d<T>>(&l)) {
      out.emplace_back(c->weights.values());
      out.emplace_back(c->bias);
    } else if (const auto* d = std::get_if<Dense<T>>(&l)) {
      out.emplace_back(d->weights.values());
      out.emplace_back(d->bias);
    }
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

template <typename T>
void Network<T>::check_batch(const Tensor4<T>& batch) const {
  if (batch.shape().sample() != input_shape_) {
    throw ShapeMismatch("batch sample shape " + to_string(batch.shape().sample()) + " != network input " +
                        to_string(input_shape_));
  }
}

template <typename T>
Tensor4<T> Network<T>::forward(const Tensor4<T>& batch) const {
  check_batch(batch);
  Tensor4<T> x = batch;
  for (const auto& l : layers_) {
    if (const auto* c = std::get_if<Conv2d<T>>(&l)) {
      x = conv2d_forward(x, *c);
    } else if (const auto* p = std::get_if<MaxPool>(&l)) {
      x = maxpool_forward(x, *p).output;
    } else if (std::holds_alternative<ReLU>(l)) {
      for (T& v : x.values()) v = v > T(0) ? v : T(0);
    } else if (std::holds_alternative<Flatten>(l)) {
      const Shape4 s = x.shape();
      x = std::move(x).reshaped({s.n, s.c * s.h * s.w, 1, 1});
    } else {
      x = dense_forward(x, std::get<Dense<T>>(l));
    }
  }
  return x;
}

template <typename T>
ForwardTrace<T> Network<T>::forward_trace(const Tensor4<T>& batch) const {
  check_batch(batch);
  ForwardTrace<T> tr;
  tr.inputs.reserve(layers_.size());
  tr.argmax.resize(layers_.size());
  Tensor4<T> x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    tr.inputs.push_back(x);
    if (const auto* c = std::get_if<Conv2d<T>>(&l)) {
      x = conv2d_forward(x, *c);
    } else if (const auto* p = std::get_if<MaxPool>(&l)) {
      auto r = maxpool_forward(x, *p);
      x = std::move(r.output);
      tr.argmax[i] = std::move(r.argmax);
    } else if (std::holds_alternative<ReLU>(l)) {
      x = relu_forward(x);
    } else if (std::holds_alternative<Flatten>(l)) {
      const Shape4 s = x.shape();
      x = std::move(x).reshaped({s.n, s.c * s.h * s.w, 1, 1});
    } else {
      x = dense_forward(x, std::get<Dense<T>>(l));
    }
  }
  tr.logits = std::move(x);
  return tr;
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardTrace<T>& trace, const Tensor4<T>& grad_logits) const {
  if (trace.inputs.size() != layers_.size()) throw ShapeMismatch("backward: trace does not match network");
  // Parameter gradients are produced back to front, then reversed into parameters() order.
  std::vector<std::vector<T>> reversed;
  Tensor4<T> g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& l = layers_[i];
    const Tensor4<T>& in = trace.inputs[i];
    if (const auto* c = std::get_if<Conv2d<T>>(&l)) {
      auto cg = conv2d_backward(in, *c, g);
      reversed.push_back(std::move(cg.bias));
      reversed.push_back(std::move(cg.weights.storage()));
      g = std::move(cg.input);
    } else if (std::holds_alternative<MaxPool>(l)) {
      g = maxpool_backward<T>(trace.argmax[i], in.shape(), g);
    } else if (std::holds_alternative<ReLU>(l)) {
      g = relu_backward(in, g);
    } else if (std::holds_alternative<Flatten>(l)) {
      g = std::move(g).reshaped(in.shape());
    } else {
      auto dg = dense_backward(in, std::get<Dense<T>>(l), g);
      reversed.push_back(std::move(dg.bias));
      reversed.push_back(std::move(dg.weights.storage()));
      g = std::move(dg.input);
    }
  }
  return Gradients<T>(std::make_move_iterator(reversed.rbegin()), std::make_move_iterator(reversed.rend()));
}

template <typename T>
std::pair<T, Gradients<T>> Network<T>::loss_and_gradients(const Tensor4<T>& batch,
                                                          std::span<const int> labels) const {
  auto trace = forward_trace(batch);
  auto lr = softmax_cross_entropy(trace.logits, labels);
  return {lr.loss, backward(trace, lr.grad_logits)};
}

template <typename T>
T Network<T>::loss(const Tensor4<T>& batch, std::span<const int> labels) const {
  return softmax_cross_entropy(forward(batch), labels).loss;
}

template <typename T>
void Network<T>::sgd_step(const Gradients<T>& grads, double lr, double momentum) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd_step: momentum must be in [0, 1)");
  auto params = parameters();
  if (grads.size() != params.size()) {
    throw ShapeMismatch("sgd_step: " + std::to_string(grads.size()) + " gradient tensors for " +
                        std::to_string(params.size()) + " parameter tensors");
  }
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i].size(), T(0));
  }
  const T mu = static_cast<T>(momentum);
  const T eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size()) {
      throw ShapeMismatch("sgd_step: gradient tensor " + std::to_string(i) + " has " +
                          std::to_string(grads[i].size()) + " elements, parameter has " +
                          std::to_string(params[i].size()));
    }
    T* w = params[i].data();
    T* v = velocity_[i].data();
    const T* g = grads[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      v[j] = mu * v[j] - eta * g[j];
      w[j] += v[j];
    }
  }
}

template <typename T>
T Network<T>::train_batch(const Tensor4<T>& batch, std::span<const int> labels, double lr, double momentum) {
  auto [loss_value, grads] = loss_and_gradients(batch, labels);
  sgd_step(grads, lr, momentum);
  return loss_value;
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : layers_) {
    std::size_t fan_in = 0;
    std::span<T> w;
    std::span<T> b;
    if (auto* c = std::get_if<Conv2d<T>>(&l)) {
      fan_in = c->in_channels * c->kernel * c->kernel;
      w = c->weights.values();
      b = c->bias;
    } else if (auto* d = std::get_if<Dense<T>>(&l)) {
      fan_in = d->in_units;
      w = d->weights.values();
      b = d->bias;
    } else {
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& x : w) x = static_cast<T>(rng.uniform(-bound, bound));
    for (T& x : b) x = T(0);
  }
  velocity_.clear();
}

template <typename T>
std::uint64_t Network<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : parameters()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data());
    for (std::size_t i = 0; i < p.size_bytes(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename To, typename From>
Network<To> network_cast(const Network<From>& src) {
  std::vector<Layer<To>> layers;
  layers.reserve(src.layers().size());
  auto cast_vec = [](const std::vector<From>& v) { return std::vector<To>(v.begin(), v.end()); };
  for (const auto& l : src.layers()) {
    if (const auto* c = std::get_if<Conv2d<From>>(&l)) {
      Conv2d<To> o{c->in_channels, c->out_channels, c->kernel, c->stride,
                   Tensor4<To>(c->weights.shape(), cast_vec(c->weights.storage())), cast_vec(c->bias)};
      layers.emplace_back(std::move(o));
    } else if (const auto* d = std::get_if<Dense<From>>(&l)) {
      Dense<To> o{d->in_units, d->out_units, Tensor4<To>(d->weights.shape(), cast_vec(d->weights.storage())),
                  cast_vec(d->bias)};
      layers.emplace_back(std::move(o));
    } else if (const auto* p = std::get_if<MaxPool>(&l)) {
      layers.emplace_back(*p);
    } else if (std::holds_alternative<ReLU>(l)) {
      layers.emplace_back(ReLU{});
    } else {
      layers.emplace_back(Flatten{});
    }
  }
  return Network<To>(src.input_shape(), std::move(layers));
}

template <typename T>
Network<float> Network<T>::to_float() const {
  return network_cast<float>(*this);
}

template <typename T>
Network<double> Network<T>::to_double() const {
  return network_cast<double>(*this);
}

template class Network<float>;
template class Network<double>;
template class Network<long double>;

template Network<long double> network_cast<long double, double>(const Network<double>&);

double grad_check(const Network<double>& network, const Tensor4<double>& batch, std::span<const int> labels,
                  double epsilon, const GradientFn<double>& analytic) {
  const Gradients<double> grads =
      analytic ? analytic(network, batch, labels) : network.loss_and_gradients(batch, labels).second;
  // The central-difference reference runs in extended precision so its
  // roundoff (~1e-16 * loss / epsilon in double) does not swamp small gradients.
  Network<long double> probe = network_cast<long double>(network);
  const Tensor4<long double> xb(batch.shape(), std::vector<long double>(batch.values().begin(), batch.values().end()));
  auto params = probe.parameters();
  if (grads.size() != params.size()) throw ShapeMismatch("grad_check: gradient/parameter tensor count mismatch");
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].size() != params[t].size()) throw ShapeMismatch("grad_check: gradient tensor size mismatch");
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      long double& w = params[t][i];
      const long double saved = w;
      w = saved + epsilon;
      const long double up = probe.loss(xb, labels);
      w = saved - epsilon;
      const long double down = probe.loss(xb, labels);
      w = saved;
      const double cd = static_cast<double>((up - down) / (2.0L * epsilon));
      const double a = grads[t][i];
      const double denom = std::max({std::abs(a), std::abs(cd), 1e-12});
      worst = std::max(worst, std::abs(a - cd) / denom);
    }
  }
  return worst;
}

}  // namespace evonas
