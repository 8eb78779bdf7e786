#include "evonas/architecture.hpp"

#include <stdexcept>
#include <string>

namespace evonas {

Precision parse_precision(const std::string& text) {
  if (text == "f32" || text == "float32" || text == "32") return Precision::f32;
  if (text == "f64" || text == "float64" || text == "64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + text + "' (expected f32 or f64)");
}

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

std::string to_string(const Dims& d) {
  return std::to_string(d.c) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w);
}

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

std::string layer_name(const LayerSpec& spec) {
  struct Visitor {
    std::string operator()(const ConvSpec& c) const {
      return "conv(" + std::to_string(c.in_channels) + "->" + std::to_string(c.out_channels) +
             ",k=" + std::to_string(c.kernel) + ",s=" + std::to_string(c.stride) + ")";
    }
    std::string operator()(const PoolSpec& p) const {
      return "maxpool(size=" + std::to_string(p.size) + ",s=" + std::to_string(p.stride) + ")";
    }
    std::string operator()(const ReluSpec&) const { return "relu"; }
    std::string operator()(const FlattenSpec&) const { return "flatten"; }
    std::string operator()(const DenseSpec& d) const {
      return "dense(" + std::to_string(d.in_units) + "->" + std::to_string(d.out_units) + ")";
    }
  };
  return std::visit(Visitor{}, spec);
}

std::size_t window_output_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ShapeMismatch("window and stride must be >= 1");
  if (window > in) {
    throw ShapeMismatch("window " + std::to_string(window) + " exceeds input extent " + std::to_string(in));
  }
  return (in - window) / stride + 1;
}

namespace {

Dims window_dims(const char* what, const Dims& in, std::size_t channels, std::size_t window, std::size_t stride) {
  if (window > in.h) {
    throw ShapeMismatch(std::string(what) + " window " + std::to_string(window) + " exceeds input height " +
                        std::to_string(in.h));
  }
  if (window > in.w) {
    throw ShapeMismatch(std::string(what) + " window " + std::to_string(window) + " exceeds input width " +
                        std::to_string(in.w));
  }
  return {channels, window_output_extent(in.h, window, stride), window_output_extent(in.w, window, stride)};
}

}  // namespace

Dims output_dims(const LayerSpec& spec, const Dims& in) {
  struct Visitor {
    const Dims& in;
    Dims operator()(const ConvSpec& c) const {
      if (c.in_channels != in.c) {
        throw ShapeMismatch("conv expects " + std::to_string(c.in_channels) + " input channels, got " +
                            std::to_string(in.c));
      }
      return window_dims("conv", in, c.out_channels, c.kernel, c.stride);
    }
    Dims operator()(const PoolSpec& p) const { return window_dims("maxpool", in, in.c, p.size, p.stride); }
    Dims operator()(const ReluSpec&) const { return in; }
    Dims operator()(const FlattenSpec&) const { return {in.size(), 1, 1}; }
    Dims operator()(const DenseSpec& d) const {
      if (d.in_units != in.size()) {
        throw ShapeMismatch("dense expects " + std::to_string(d.in_units) + " input units, got " +
                            std::to_string(in.size()) + " (" + to_string(in) + ")");
      }
      return {d.out_units, 1, 1};
    }
  };
  return std::visit(Visitor{in}, spec);
}

std::vector<Dims> trace_dims(const Architecture& arch) {
  std::vector<Dims> out;
  out.reserve(arch.layers.size());
  Dims cur = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    try {
      cur = output_dims(arch.layers[i], cur);
    } catch (const ShapeMismatch& e) {
      throw ShapeMismatch("layer " + std::to_string(i) + " " + layer_name(arch.layers[i]) + ": " + e.what());
    }
    out.push_back(cur);
  }
  return out;
}

}  // namespace evonas
