#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "evonas/architecture.hpp"
#include "evonas/eval_record.hpp"
#include "evonas/fitness.hpp"
#include "evonas/genome.hpp"
#include "evonas/network.hpp"
#include "evonas/patchset.hpp"

namespace evonas {

struct TrainBudget {
  int epochs = 2;
  std::optional<std::size_t> max_batches_per_epoch;
  void validate() const;
};

struct LatencyConfig {
  std::size_t batch_size = 32;
  int reps = 5;
  int warmup = 1;
};

struct EvalConfig {
  TrainBudget budget;
  ObjectiveConfig objective;
  LatencyConfig latency;
  Precision precision = Precision::f32;
  // Genomes with more parameters are recorded as failures without training.
  std::optional<std::uint64_t> max_params;
  std::size_t predict_batch_size = 128;
  // Test hook: skip the up-front validate_shapes pass so collapsing genomes
  // reach instantiation.
  bool skip_shape_validation = false;
};

// Recorded evaluation failure (non-finite loss and similar); evaluate()
// turns it into an EvalRecord rather than letting it escape.
class EvalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Weight and bias element counts.
std::uint64_t count_params(const Architecture& arch);
template <typename T>
std::uint64_t count_params(const Network<T>& network) {
  return count_params(network.architecture());
}

// Per-patch inference FLOPs, one entry per layer. Multiply-add counts 2:
// conv 2*k*k*c_in*c_out*h_out*w_out, dense 2*in*out, pool and ReLU one per
// output element, flatten 0.
std::vector<std::uint64_t> layer_flops(const Architecture& arch);
std::uint64_t count_flops_inference(const Architecture& arch);
template <typename T>
std::uint64_t count_flops_inference(const Network<T>& network) {
  return count_flops_inference(network.architecture());
}

template <typename T>
struct TrainResult {
  Network<T> network;
  double train_time_s = 0.0;
  std::size_t steps = 0;
  double last_loss = 0.0;
};

// Instantiates the genome (weights seeded by `seed`) and runs budget.epochs of
// minibatch momentum SGD over `train`, reshuffled each epoch. The last batch
// of an epoch may be partial. Throws EvalFailure on a non-finite loss and
// ShapeMismatch if the genome does not fit the data.
template <typename T>
TrainResult<T> train_short(const Genome& genome, const PatchSet& data, std::span<const std::size_t> train,
                           const TrainBudget& budget, std::uint64_t seed);

// Continues training an existing network (used for the final longer budget).
template <typename T>
TrainResult<T> train_network(Network<T> network, const LearnParams& learn, const PatchSet& data,
                             std::span<const std::size_t> train, const TrainBudget& budget, std::uint64_t seed);

// Positive-class softmax probabilities in index order.
template <typename T>
std::vector<double> predict_scores(const Network<T>& network, const PatchSet& data,
                                   std::span<const std::size_t> indices, std::size_t batch_size = 128);

// Class 1 when its score exceeds 0.5.
std::vector<int> predict_labels(std::span<const double> scores);

// Median/min/max of per-batch seconds; patches_per_s = batch_size / median.
LatencyStats summarize_latency(std::vector<double> samples_s, int batch_size);

// Times `reps` forward passes on a fixed seeded random batch after `warmup` untimed ones.
template <typename T>
LatencyStats measure_latency(const Network<T>& network, std::size_t batch_size, int reps, int warmup,
                             std::uint64_t seed = 0);

// Shapes are validated without repair; collapsing genomes, parameter-budget
// violations and non-finite losses become failed records. Latency is measured
// unless the objective is flop_proxy. val_f1 / val_auc come from the last epoch.
EvalRecord evaluate(const Genome& genome, const Splits& splits, const EvalConfig& config, std::uint64_t seed);

}  // namespace evonas
