#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "evonas/tensor.hpp"

namespace evonas {

// Weight-free description of a layer stack: what FLOP/param accounting and
// shape inference need, without any tensors attached.
struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct PoolSpec {
  std::size_t size = 2;
  std::size_t stride = 2;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

struct ReluSpec {
  friend bool operator==(const ReluSpec&, const ReluSpec&) = default;
};

struct FlattenSpec {
  friend bool operator==(const FlattenSpec&, const FlattenSpec&) = default;
};

struct DenseSpec {
  std::size_t in_units = 0;
  std::size_t out_units = 0;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

using LayerSpec = std::variant<ConvSpec, PoolSpec, ReluSpec, FlattenSpec, DenseSpec>;

struct Architecture {
  Dims input;
  std::vector<LayerSpec> layers;
};

std::string layer_name(const LayerSpec& spec);

// floor((in - window) / stride) + 1 for valid (unpadded) windows.
// Throws ShapeMismatch when window > in or stride == 0.
std::size_t window_output_extent(std::size_t in, std::size_t window, std::size_t stride);

// Output dims of one layer applied to `in`; throws ShapeMismatch naming the offending dimension.
Dims output_dims(const LayerSpec& spec, const Dims& in);

// Dims after each layer (same length as arch.layers).
std::vector<Dims> trace_dims(const Architecture& arch);

}  // namespace evonas
