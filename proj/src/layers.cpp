#include "evonas/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace evonas {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

std::string dims_str(std::size_t a, std::size_t b) { return std::to_string(a) + " vs " + std::to_string(b); }

void check_window(const char* op, const char* what, std::size_t window, const Shape4& s) {
  for (auto [name, extent] : {std::pair{"height", s.h}, std::pair{"width", s.w}}) {
    if (extent < window) {
      throw ShapeMismatch(std::string(op) + ": " + what + " " + std::to_string(window) + " exceeds input " + name +
                          " " + std::to_string(extent) + " (input " + to_string(s) + ")");
    }
  }
}

template <typename T>
void check_conv_input(const Tensor4<T>& input, const Conv2d<T>& layer) {
  const Shape4& s = input.shape();
  if (s.c != layer.in_channels) {
    throw ShapeMismatch("conv2d: input channels " + dims_str(s.c, layer.in_channels) + " (input " + to_string(s) +
                        ")");
  }
  check_window("conv2d", "kernel", layer.kernel, s);
  if (layer.stride == 0) throw ShapeMismatch("conv2d: stride must be >= 1");
  const Shape4 ws{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
  if (layer.weights.shape() != ws || layer.bias.size() != layer.out_channels) {
    throw ShapeMismatch("conv2d: weights " + to_string(layer.weights.shape()) + " / bias " +
                        std::to_string(layer.bias.size()) + " inconsistent with declared " + to_string(ws));
  }
}

// Unfolds one sample (c, h, w) into a (c*k*k) x (ho*wo) column matrix.
template <typename T>
void im2col(const T* src, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t s,
            std::size_t ho, std::size_t wo, T* col) {
  const std::size_t positions = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* plane = src + ci * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((ci * k + ki) * k + kj) * positions;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const T* in_row = plane + (oy * s + ki) * w + kj;
          T* out_row = row + oy * wo;
          if (s == 1) {
            std::copy(in_row, in_row + wo, out_row);
          } else {
            for (std::size_t ox = 0; ox < wo; ++ox) out_row[ox] = in_row[ox * s];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t s,
                std::size_t ho, std::size_t wo, T* dst) {
  const std::size_t positions = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    T* plane = dst + ci * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((ci * k + ki) * k + kj) * positions;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          T* out_row = plane + (oy * s + ki) * w + kj;
          const T* in_row = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) out_row[ox * s] += in_row[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Conv2d<T> Conv2d<T>::zeros(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                           std::size_t stride) {
  Conv2d<T> c;
  c.in_channels = in_channels;
  c.out_channels = out_channels;
  c.kernel = kernel;
  c.stride = stride;
  c.weights = Tensor4<T>({out_channels, in_channels, kernel, kernel});
  c.bias.assign(out_channels, T(0));
  return c;
}

template <typename T>
Dense<T> Dense<T>::zeros(std::size_t in_units, std::size_t out_units) {
  Dense<T> d;
  d.in_units = in_units;
  d.out_units = out_units;
  d.weights = Tensor4<T>({out_units, in_units, 1, 1});
  d.bias.assign(out_units, T(0));
  return d;
}

template <typename T>
LayerSpec spec_of(const Layer<T>& layer) {
  struct Visitor {
    LayerSpec operator()(const Conv2d<T>& c) const { return c.spec(); }
    LayerSpec operator()(const MaxPool& p) const { return p.spec(); }
    LayerSpec operator()(const ReLU&) const { return ReluSpec{}; }
    LayerSpec operator()(const Flatten&) const { return FlattenSpec{}; }
    LayerSpec operator()(const Dense<T>& d) const { return d.spec(); }
  };
  return std::visit(Visitor{}, layer);
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const Conv2d<T>& layer) {
  check_conv_input(input, layer);
  const Shape4& s = input.shape();
  const std::size_t k = layer.kernel;
  const std::size_t ho = (s.h - k) / layer.stride + 1;
  const std::size_t wo = (s.w - k) / layer.stride + 1;
  const std::size_t patch = s.c * k * k;
  const std::size_t positions = ho * wo;

  Tensor4<T> out({s.n, layer.out_channels, ho, wo});
  std::vector<T> col(patch * positions);
  ConstMatMap<T> wmat(layer.weights.data(), layer.out_channels, patch);
  for (std::size_t n = 0; n < s.n; ++n) {
    im2col(input.data() + n * s.c * s.h * s.w, s.c, s.h, s.w, k, layer.stride, ho, wo, col.data());
    ConstMatMap<T> cmat(col.data(), patch, positions);
    MatMap<T> omat(out.data() + n * layer.out_channels * positions, layer.out_channels, positions);
    omat.noalias() = wmat * cmat;
    for (std::size_t o = 0; o < layer.out_channels; ++o) omat.row(o).array() += layer.bias[o];
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const Conv2d<T>& layer, const Tensor4<T>& grad_out) {
  check_conv_input(input, layer);
  const Shape4& s = input.shape();
  const std::size_t k = layer.kernel;
  const std::size_t ho = (s.h - k) / layer.stride + 1;
  const std::size_t wo = (s.w - k) / layer.stride + 1;
  const Shape4 expected{s.n, layer.out_channels, ho, wo};
  if (grad_out.shape() != expected) {
    throw ShapeMismatch("conv2d_backward: grad_out " + to_string(grad_out.shape()) + " != forward output " +
                        to_string(expected));
  }
  const std::size_t patch = s.c * k * k;
  const std::size_t positions = ho * wo;

  ConvGrads<T> g{Tensor4<T>(s), Tensor4<T>(layer.weights.shape()), std::vector<T>(layer.out_channels, T(0))};
  std::vector<T> col(patch * positions);
  std::vector<T> gcol(patch * positions);
  ConstMatMap<T> wmat(layer.weights.data(), layer.out_channels, patch);
  MatMap<T> gw(g.weights.data(), layer.out_channels, patch);
  for (std::size_t n = 0; n < s.n; ++n) {
    im2col(input.data() + n * s.c * s.h * s.w, s.c, s.h, s.w, k, layer.stride, ho, wo, col.data());
    ConstMatMap<T> cmat(col.data(), patch, positions);
    ConstMatMap<T> gomat(grad_out.data() + n * layer.out_channels * positions, layer.out_channels, positions);
    gw.noalias() += gomat * cmat.transpose();
    MatMap<T> gcmat(gcol.data(), patch, positions);
    gcmat.noalias() = wmat.transpose() * gomat;
    col2im_add(gcol.data(), s.c, s.h, s.w, k, layer.stride, ho, wo, g.input.data() + n * s.c * s.h * s.w);
    for (std::size_t o = 0; o < layer.out_channels; ++o) g.bias[o] += gomat.row(o).sum();
  }
  return g;
}

template <typename T>
PoolForward<T> maxpool_forward(const Tensor4<T>& input, const MaxPool& layer) {
  const Shape4& s = input.shape();
  if (layer.size == 0 || layer.stride == 0) throw ShapeMismatch("maxpool: size and stride must be >= 1");
  check_window("maxpool", "window", layer.size, s);
  const std::size_t ho = (s.h - layer.size) / layer.stride + 1;
  const std::size_t wo = (s.w - layer.size) / layer.stride + 1;
  PoolForward<T> r{Tensor4<T>({s.n, s.c, ho, wo}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
          std::size_t best = input.offset(n, c, oy * layer.stride, ox * layer.stride);
          T best_v = input.data()[best];
          for (std::size_t ky = 0; ky < layer.size; ++ky) {
            for (std::size_t kx = 0; kx < layer.size; ++kx) {
              const std::size_t idx = input.offset(n, c, oy * layer.stride + ky, ox * layer.stride + kx);
              // strict > keeps the first row-major maximum on ties
              if (input.data()[idx] > best_v) {
                best_v = input.data()[idx];
                best = idx;
              }
            }
          }
          r.output.data()[o] = best_v;
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor4<T> maxpool_backward(std::span<const std::size_t> argmax, const Shape4& input_shape,
                            const Tensor4<T>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeMismatch("maxpool_backward: argmax length " + dims_str(argmax.size(), grad_out.size()) +
                        " grad_out elements");
  }
  Tensor4<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) throw ShapeMismatch("maxpool_backward: argmax index outside input");
    g.data()[argmax[i]] += grad_out.data()[i];
  }
  return g;
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& input) {
  Tensor4<T> out = input;
  for (T& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out) {
  if (input.shape() != grad_out.shape()) {
    throw ShapeMismatch("relu_backward: input " + to_string(input.shape()) + " vs grad_out " +
                        to_string(grad_out.shape()));
  }
  Tensor4<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(input.data()[i] > T(0))) g.data()[i] = T(0);
  }
  return g;
}

template <typename T>
Tensor4<T> dense_forward(const Tensor4<T>& input, const Dense<T>& layer) {
  const Shape4& s = input.shape();
  const std::size_t cols = s.c * s.h * s.w;
  if (cols != layer.in_units) {
    throw ShapeMismatch("dense: input columns " + dims_str(cols, layer.in_units) + " in_units");
  }
  if (layer.weights.size() != layer.out_units * layer.in_units || layer.bias.size() != layer.out_units) {
    throw ShapeMismatch("dense: weights/bias inconsistent with " + std::to_string(layer.out_units) + "x" +
                        std::to_string(layer.in_units));
  }
  Tensor4<T> out({s.n, layer.out_units, 1, 1});
  ConstMatMap<T> x(input.data(), s.n, cols);
  ConstMatMap<T> wmat(layer.weights.data(), layer.out_units, layer.in_units);
  MatMap<T> y(out.data(), s.n, layer.out_units);
  y.noalias() = x * wmat.transpose();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < layer.out_units; ++o) y(n, o) += layer.bias[o];
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor4<T>& input, const Dense<T>& layer, const Tensor4<T>& grad_out) {
  const Shape4& s = input.shape();
  const std::size_t cols = s.c * s.h * s.w;
  if (cols != layer.in_units) {
    throw ShapeMismatch("dense_backward: input columns " + dims_str(cols, layer.in_units) + " in_units");
  }
  const Shape4 expected{s.n, layer.out_units, 1, 1};
  if (grad_out.shape() != expected) {
    throw ShapeMismatch("dense_backward: grad_out " + to_string(grad_out.shape()) + " != " + to_string(expected));
  }
  DenseGrads<T> g{Tensor4<T>(s), Tensor4<T>(layer.weights.shape()), std::vector<T>(layer.out_units, T(0))};
  ConstMatMap<T> x(input.data(), s.n, cols);
  ConstMatMap<T> wmat(layer.weights.data(), layer.out_units, layer.in_units);
  ConstMatMap<T> gy(grad_out.data(), s.n, layer.out_units);
  MatMap<T>(g.input.data(), s.n, cols).noalias() = gy * wmat;
  MatMap<T>(g.weights.data(), layer.out_units, layer.in_units).noalias() = gy.transpose() * x;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < layer.out_units; ++o) g.bias[o] += gy(n, o);
  }
  return g;
}

template <typename T>
std::vector<T> softmax_rows(const Tensor4<T>& logits) {
  const std::size_t n = logits.shape().n;
  const std::size_t k = logits.shape().c * logits.shape().h * logits.shape().w;
  std::vector<T> p(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    const T m = *std::max_element(row, row + k);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      p[i * k + j] = std::exp(row[j] - m);
      sum += p[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= sum;
  }
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, std::span<const int> labels) {
  const std::size_t n = logits.shape().n;
  const std::size_t k = logits.shape().c * logits.shape().h * logits.shape().w;
  if (labels.size() != n) {
    throw ShapeMismatch("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                        std::to_string(n));
  }
  LossResult<T> r{T(0), Tensor4<T>(logits.shape())};
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    const T* row = logits.data() + i * k;
    const T m = *std::max_element(row, row + k);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - m);
    const T log_sum = std::log(sum);
    r.loss += (log_sum - (row[y] - m)) * inv_n;
    T* grow = r.grad_logits.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const T p = std::exp(row[j] - m - log_sum);
      grow[j] = (p - (static_cast<std::size_t>(y) == j ? T(1) : T(0))) * inv_n;
    }
  }
  return r;
}

#define EVONAS_INSTANTIATE_LAYERS(T)                                                                          \
  template struct Conv2d<T>;                                                                                  \
  template struct Dense<T>;                                                                                   \
  template LayerSpec spec_of<T>(const Layer<T>&);                                                             \
  template Tensor4<T> conv2d_forward<T>(const Tensor4<T>&, const Conv2d<T>&);                                 \
  template ConvGrads<T> conv2d_backward<T>(const Tensor4<T>&, const Conv2d<T>&, const Tensor4<T>&);          \
  template PoolForward<T> maxpool_forward<T>(const Tensor4<T>&, const MaxPool&);                              \
  template Tensor4<T> maxpool_backward<T>(std::span<const std::size_t>, const Shape4&, const Tensor4<T>&);    \
  template Tensor4<T> relu_forward<T>(const Tensor4<T>&);                                                     \
  template Tensor4<T> relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                                 \
  template Tensor4<T> dense_forward<T>(const Tensor4<T>&, const Dense<T>&);                                   \
  template DenseGrads<T> dense_backward<T>(const Tensor4<T>&, const Dense<T>&, const Tensor4<T>&);           \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor4<T>&, std::span<const int>);                   \
  template std::vector<T> softmax_rows<T>(const Tensor4<T>&);

EVONAS_INSTANTIATE_LAYERS(float)
EVONAS_INSTANTIATE_LAYERS(double)
EVONAS_INSTANTIATE_LAYERS(long double)

#undef EVONAS_INSTANTIATE_LAYERS

}  // namespace evonas
