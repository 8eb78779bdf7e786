#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evonas/architecture.hpp"
#include "evonas/network.hpp"
#include "evonas/rng.hpp"

namespace evonas {

inline constexpr Dims kDefaultInputShape{3, 100, 100};

struct ConvGene {
  int out_channels = 16;
  int kernel = 3;
  int stride = 1;
  bool relu = true;
  friend bool operator==(const ConvGene&, const ConvGene&) = default;
};

struct PoolGene {
  int size = 2;
  int stride = 2;
  friend bool operator==(const PoolGene&, const PoolGene&) = default;
};

struct DenseGene {
  int units = 64;
  friend bool operator==(const DenseGene&, const DenseGene&) = default;
};

using FeatureGene = std::variant<ConvGene, PoolGene>;

struct LearnParams {
  double lr = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  friend bool operator==(const LearnParams&, const LearnParams&) = default;
};

struct Genome {
  std::vector<FeatureGene> features;  // conv/pool chain
  std::vector<DenseGene> head;        // hidden dense layers; Dense(2) is appended implicitly
  LearnParams learn;
  std::uint64_t id = 0;
  std::vector<std::uint64_t> parent_ids;

  // Layer genes and learning parameters equal; ids ignored.
  bool same_structure(const Genome& other) const;
  friend bool operator==(const Genome&, const Genome&) = default;
};

// Value domains the GA samples from. Defaults are the full search space.
struct SearchSpace {
  std::vector<int> out_channels{8, 16, 32, 64, 128, 256};
  int kernel_min = 1;
  int kernel_max = 7;
  int stride_min = 1;
  int stride_max = 3;
  std::vector<int> pool_sizes{2, 3};
  int pool_stride_min = 1;
  int pool_stride_max = 3;
  int dense_min = 16;
  int dense_max = 1024;
  std::size_t min_feature_layers = 1;
  std::size_t max_feature_layers = 12;
  std::size_t max_head_layers = 3;
  double conv_probability = 0.7;
  std::vector<int> batch_sizes{16, 32, 64, 128, 256};
  double lr_min = 1e-4;
  double lr_max = 1e-1;
  double momentum_max = 0.95;

  // Throws std::invalid_argument on empty or inverted ranges.
  void validate() const;
  std::vector<int> kernels() const;
  std::vector<int> strides() const;
};

// Categorical weights over one hyperparameter's values.
struct Categorical {
  std::vector<int> values;
  std::vector<double> weights;

  double weight_of(int value) const;
  int mode() const;
};

// Sampling weights over conv hyperparameters derived from throughput
// measurements; beta blends them with the uniform distribution.
struct ThroughputPrior {
  Categorical out_channels;
  Categorical kernel;
  Categorical stride;
  double beta = 1.0;

  // Every weight non-negative and each categorical summing to 1.
  bool valid(double tolerance = 1e-9) const;
  // Point mass on the given values.
  static ThroughputPrior delta(int out_channels, int kernel, int stride, double beta = 1.0);
};

struct MutationRates {
  double perturb_hparam = 0.5;
  double add_layer = 0.2;
  double remove_layer = 0.2;
  double perturb_lr = 0.3;
};

// Monotonic genome id source.
class IdAllocator {
 public:
  explicit IdAllocator(std::uint64_t next = 1) : next_(next) {}
  std::uint64_t next() { return next_++; }
  std::uint64_t peek() const { return next_; }

 private:
  std::uint64_t next_;
};

struct ShapeError {
  std::size_t layer = 0;     // index into Genome::features
  std::string dimension;     // "height" or "width"
  std::size_t extent = 0;    // incoming extent
  std::size_t window = 0;    // kernel or pool size that did not fit
  std::string message() const;
};

struct LayerShape {
  std::string kind;  // conv, relu, pool, flatten, dense
  Dims dims;         // output dims
};

struct ShapeTrace {
  std::vector<LayerShape> steps;
  std::optional<ShapeError> error;
  bool ok() const { return !error.has_value(); }
};

ShapeTrace validate_shapes(const Genome& genome, const Dims& input_shape = kDefaultInputShape);

// Shrinks (kernel/pool size down to the available extent) or removes the first
// collapsing feature layer until the trace is valid. Idempotent.
Genome repair(Genome genome, const Dims& input_shape = kDefaultInputShape);

// When `prior` is given, conv hyperparameters are drawn from beta*prior + (1-beta)*uniform.
Genome random_genome(Rng& rng, const SearchSpace& space, IdAllocator& ids, const Dims& input_shape,
                     const ThroughputPrior* prior = nullptr);

Genome mutate(const Genome& parent, Rng& rng, const MutationRates& rates, const SearchSpace& space,
              IdAllocator& ids, const Dims& input_shape, const ThroughputPrior* prior = nullptr);

// One cut position shared by both parents (so crossover(a, a) reproduces a).
Genome crossover(const Genome& a, const Genome& b, Rng& rng, IdAllocator& ids, const Dims& input_shape,
                 std::size_t max_feature_layers = 12);
Genome crossover_at(const Genome& a, const Genome& b, std::size_t cut, Rng& rng, IdAllocator& ids,
                    const Dims& input_shape, std::size_t max_feature_layers = 12);

// Weight-free layer stack: feature layers (+ReLU), Flatten, head Dense+ReLU, Dense(2).
// Throws ShapeMismatch if the genome does not fit the input shape.
Architecture genome_architecture(const Genome& genome, const Dims& input_shape);

template <typename T>
Network<T> instantiate(const Genome& genome, const Dims& input_shape, std::uint64_t seed);

// key=value line; doubles use shortest round-trip formatting.
std::string to_text(const Genome& genome);
Genome genome_from_text(const std::string& line);

}  // namespace evonas
