#include "evonas/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "evonas/metrics.hpp"

namespace evonas {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Counter {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

Counter count_layer(const LayerSpec& spec, const Dims& in, const Dims& out) {
  return std::visit(
      [&](const auto& s) -> Counter {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConvSpec>) {
          return {s.out_channels * s.in_channels * s.kernel * s.kernel + s.out_channels,
                  2ULL * s.kernel * s.kernel * s.in_channels * s.out_channels * out.h * out.w};
        } else if constexpr (std::is_same_v<S, DenseSpec>) {
          return {s.out_units * s.in_units + s.out_units, 2ULL * s.in_units * s.out_units};
        } else if constexpr (std::is_same_v<S, FlattenSpec>) {
          return {0, 0};
        } else {
          (void)in;
          return {0, out.size()};
        }
      },
      spec);
}

}  // namespace

void TrainBudget::validate() const {
  if (epochs < 1) throw std::invalid_argument("budget.epochs must be >= 1, got " + std::to_string(epochs));
  if (max_batches_per_epoch && *max_batches_per_epoch == 0) {
    throw std::invalid_argument("budget.max_batches_per_epoch must be >= 1");
  }
}

std::uint64_t count_params(const Architecture& arch) {
  const auto dims = trace_dims(arch);
  std::uint64_t total = 0;
  Dims in = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    total += count_layer(arch.layers[i], in, dims[i]).params;
    in = dims[i];
  }
  return total;
}

std::vector<std::uint64_t> layer_flops(const Architecture& arch) {
  const auto dims = trace_dims(arch);
  std::vector<std::uint64_t> out;
  Dims in = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    out.push_back(count_layer(arch.layers[i], in, dims[i]).flops);
    in = dims[i];
  }
  return out;
}

std::uint64_t count_flops_inference(const Architecture& arch) {
  std::uint64_t total = 0;
  for (auto f : layer_flops(arch)) total += f;
  return total;
}

template <typename T>
TrainResult<T> train_network(Network<T> network, const LearnParams& learn, const PatchSet& data,
                             std::span<const std::size_t> train, const TrainBudget& budget, std::uint64_t seed) {
  budget.validate();
  if (train.empty()) throw std::invalid_argument("train_short: empty training split");
  if (learn.batch_size < 1) throw std::invalid_argument("train_short: batch size must be >= 1");
  const auto start = Clock::now();
  Rng rng(seed ^ 0x5EED5EEDULL);
  std::vector<std::size_t> order(train.begin(), train.end());
  const auto batch = static_cast<std::size_t>(learn.batch_size);
  std::size_t batches = (order.size() + batch - 1) / batch;
  if (budget.max_batches_per_epoch) batches = std::min(batches, *budget.max_batches_per_epoch);

  TrainResult<T> result{std::move(network), 0.0, 0, 0.0};
  for (int epoch = 0; epoch < budget.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * batch;
      const std::size_t hi = std::min(order.size(), lo + batch);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const auto x = data.gather<T>(idx);
      const auto y = data.gather_labels(idx);
      const T loss = result.network.train_batch(x, y, learn.lr, learn.momentum);
      ++result.steps;
      result.last_loss = static_cast<double>(loss);
      if (!std::isfinite(result.last_loss)) {
        throw EvalFailure("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      }
    }
  }
  // A step can also leave the weights non-finite after a finite pre-step loss.
  for (const auto& p : result.network.parameters()) {
    for (T w : p) {
      if (!std::isfinite(static_cast<double>(w))) throw EvalFailure("non-finite weights after training");
    }
  }
  result.train_time_s = seconds_since(start);
  return result;
}

template <typename T>
TrainResult<T> train_short(const Genome& genome, const PatchSet& data, std::span<const std::size_t> train,
                           const TrainBudget& budget, std::uint64_t seed) {
  const auto start = Clock::now();
  auto network = instantiate<T>(genome, data.dims, seed);
  auto result = train_network<T>(std::move(network), genome.learn, data, train, budget, seed);
  result.train_time_s = seconds_since(start);
  return result;
}

template <typename T>
std::vector<double> predict_scores(const Network<T>& network, const PatchSet& data,
                                   std::span<const std::size_t> indices, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch size must be >= 1");
  std::vector<double> scores;
  scores.reserve(indices.size());
  for (std::size_t lo = 0; lo < indices.size(); lo += batch_size) {
    const std::size_t hi = std::min(indices.size(), lo + batch_size);
    const auto probs = softmax_rows(network.forward(data.gather<T>(indices.subspan(lo, hi - lo))));
    for (std::size_t i = 0; i < hi - lo; ++i) scores.push_back(static_cast<double>(probs[i * kClassCount + 1]));
  }
  return scores;
}

std::vector<int> predict_labels(std::span<const double> scores) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s > 0.5 ? 1 : 0);
  return out;
}

LatencyStats summarize_latency(std::vector<double> samples_s, int batch_size) {
  if (samples_s.empty()) throw std::invalid_argument("latency: no samples");
  std::sort(samples_s.begin(), samples_s.end());
  const std::size_t n = samples_s.size();
  const double median = n % 2 ? samples_s[n / 2] : 0.5 * (samples_s[n / 2 - 1] + samples_s[n / 2]);
  LatencyStats s;
  s.median_s_per_batch = median;
  s.min_s = samples_s.front();
  s.max_s = samples_s.back();
  s.reps = static_cast<int>(n);
  s.batch_size = batch_size;
  s.patches_per_s = median > 0.0 ? static_cast<double>(batch_size) / median : std::numeric_limits<double>::infinity();
  return s;
}

template <typename T>
LatencyStats measure_latency(const Network<T>& network, std::size_t batch_size, int reps, int warmup,
                             std::uint64_t seed) {
  if (reps < 3) throw std::invalid_argument("latency: reps must be >= 3");
  if (warmup < 1) throw std::invalid_argument("latency: warmup must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("latency: batch size must be >= 1");
  const Dims& d = network.input_shape();
  Tensor4<T> batch({batch_size, d.c, d.h, d.w});
  Rng rng(seed);
  for (T& v : batch.values()) v = static_cast<T>(rng.uniform01());
  volatile T sink = T(0);
  for (int i = 0; i < warmup; ++i) sink = network.forward(batch).values()[0];
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto start = Clock::now();
    sink = network.forward(batch).values()[0];
    samples.push_back(seconds_since(start));
  }
  (void)sink;
  return summarize_latency(std::move(samples), static_cast<int>(batch_size));
}

namespace {

template <typename T>
void evaluate_as(const Genome& genome, const Splits& splits, const EvalConfig& config, std::uint64_t seed,
                 EvalRecord& record) {
  const PatchSet& data = *splits.data;
  auto trained = train_short<T>(genome, data, splits.train, config.budget, seed);
  record.train_time_s = trained.train_time_s;

  const auto scores = predict_scores(trained.network, data, splits.val, config.predict_batch_size);
  for (double s : scores) {
    if (!std::isfinite(s)) throw EvalFailure("non-finite validation scores");
  }
  const auto labels = data.gather_labels(splits.val);
  const auto f1 = f1_score(confusion_from(labels, predict_labels(scores)));
  record.val_f1 = f1.value;
  record.val_f1_degenerate = f1.degenerate;
  record.val_auc = auc_roc(scores, labels);

  if (config.objective.kind != ObjectiveKind::flop_proxy) {
    record.latency = measure_latency(trained.network, config.latency.batch_size, config.latency.reps,
                                     config.latency.warmup, seed);
  }
}

}  // namespace

EvalRecord evaluate(const Genome& genome, const Splits& splits, const EvalConfig& config, std::uint64_t seed) {
  if (!splits.data) throw std::invalid_argument("evaluate: splits carry no data");
  const PatchSet& data = *splits.data;
  EvalRecord record;
  record.genome_id = genome.id;

  if (!config.skip_shape_validation) {
    const auto trace = validate_shapes(genome, data.dims);
    if (!trace.ok()) return failed_record(genome.id, "shape: " + trace.error->message());
  }

  Architecture arch;
  try {
    arch = genome_architecture(genome, data.dims);
  } catch (const ShapeMismatch& e) {
    return failed_record(genome.id, std::string("shape: ") + e.what());
  }
  record.params = count_params(arch);
  record.flops_inference = count_flops_inference(arch);

  auto fail = [&](std::string reason) {
    EvalRecord r = failed_record(genome.id, std::move(reason));
    r.params = record.params;
    r.flops_inference = record.flops_inference;
    return r;
  };
  if (config.max_params && record.params > *config.max_params) {
    return fail("param budget: " + std::to_string(record.params) + " > " + std::to_string(*config.max_params));
  }
  if (splits.val.empty()) return fail("empty validation split");

  try {
    if (config.precision == Precision::f64) {
      evaluate_as<double>(genome, splits, config, seed, record);
    } else {
      evaluate_as<float>(genome, splits, config, seed, record);
    }
  } catch (const EvalFailure& e) {
    return fail(e.what());
  } catch (const ShapeMismatch& e) {
    return fail(std::string("shape: ") + e.what());
  } catch (const std::invalid_argument& e) {
    return fail(e.what());
  }
  score(record, config.objective);
  return record;
}

#define EVONAS_INSTANTIATE(T)                                                                                   \
  template TrainResult<T> train_short<T>(const Genome&, const PatchSet&, std::span<const std::size_t>,          \
                                         const TrainBudget&, std::uint64_t);                                    \
  template TrainResult<T> train_network<T>(Network<T>, const LearnParams&, const PatchSet&,                     \
                                           std::span<const std::size_t>, const TrainBudget&, std::uint64_t);    \
  template std::vector<double> predict_scores<T>(const Network<T>&, const PatchSet&, std::span<const std::size_t>, \
                                                 std::size_t);                                                  \
  template LatencyStats measure_latency<T>(const Network<T>&, std::size_t, int, int, std::uint64_t);

EVONAS_INSTANTIATE(float)
EVONAS_INSTANTIATE(double)

#undef EVONAS_INSTANTIATE

}  // namespace evonas
