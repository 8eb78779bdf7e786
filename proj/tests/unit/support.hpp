#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "evonas/layers.hpp"
#include "evonas/rng.hpp"
#include "evonas/tensor.hpp"

namespace testing {

using evonas::Shape4;
using evonas::Tensor4;

template <typename T = double>
Tensor4<T> random_tensor(evonas::Rng& rng, Shape4 shape, double lo = -1.0, double hi = 1.0) {
  Tensor4<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T = double>
std::vector<T> random_vector(evonas::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

// Direct quadruple-loop cross-correlation, independent of the im2col path.
inline Tensor4<double> naive_conv(const Tensor4<double>& x, const evonas::Conv2d<double>& l) {
  const auto s = x.shape();
  const std::size_t ho = (s.h - l.kernel) / l.stride + 1;
  const std::size_t wo = (s.w - l.kernel) / l.stride + 1;
  Tensor4<double> y({s.n, l.out_channels, ho, wo});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < l.out_channels; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = l.bias[o];
          for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t a = 0; a < l.kernel; ++a)
              for (std::size_t b = 0; b < l.kernel; ++b)
                acc += x.at(n, c, i * l.stride + a, j * l.stride + b) * l.weights.at(o, c, a, b);
          y.at(n, o, i, j) = acc;
        }
  return y;
}

inline double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

// Central difference of `f` with respect to every element of `x` (modified in place, then restored).
inline std::vector<double> numeric_grad(std::vector<double*> xs, const std::function<double()>& f, double eps = 1e-5) {
  std::vector<double> g;
  g.reserve(xs.size());
  for (double* p : xs) {
    const double keep = *p;
    *p = keep + eps;
    const double up = f();
    *p = keep - eps;
    const double down = f();
    *p = keep;
    g.push_back((up - down) / (2 * eps));
  }
  return g;
}

template <typename Container>
std::vector<double*> pointers(Container& c) {
  std::vector<double*> out;
  for (auto& v : c) out.push_back(&v);
  return out;
}

// max |a - b| / max(|a|, |b|, floor)
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  }
  return worst;
}

}  // namespace testing
