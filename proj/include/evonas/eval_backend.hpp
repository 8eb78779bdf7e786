#pragma once

#include <cstdint>
#include <functional>

#include "evonas/eval_record.hpp"
#include "evonas/evaluator.hpp"
#include "evonas/genome.hpp"
#include "evonas/patchset.hpp"

namespace evonas {

// What a worker runs for each issued genome. Implementations must be safe to
// call from several threads at once. Returned records carry raw measurements;
// fitness is assigned by the master.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalRecord evaluate(const Genome& genome, std::uint64_t seed) const = 0;
};

// Trains and measures on a dataset (the real evaluator).
class DatasetEvaluator : public Evaluator {
 public:
  DatasetEvaluator(Splits splits, EvalConfig config) : splits_(std::move(splits)), config_(std::move(config)) {}
  EvalRecord evaluate(const Genome& genome, std::uint64_t seed) const override;
  const Splits& splits() const { return splits_; }
  const EvalConfig& config() const { return config_; }

 private:
  Splits splits_;
  EvalConfig config_;
};

// Wraps a plain function; used for stub evaluators in tests and benchmarks.
class FunctionEvaluator : public Evaluator {
 public:
  using Fn = std::function<EvalRecord(const Genome&, std::uint64_t)>;
  explicit FunctionEvaluator(Fn fn) : fn_(std::move(fn)) {}
  EvalRecord evaluate(const Genome& genome, std::uint64_t seed) const override { return fn_(genome, seed); }

 private:
  Fn fn_;
};

// Blocks the calling thread; stub evaluators use it to emulate evaluation time.
void sleep_seconds(double seconds);

// Stub that sleeps `seconds` and reports FLOPs/params from the genome's
// architecture on `input` with val_f1 fixed at `v`.
FunctionEvaluator sleep_stub(double seconds, Dims input = kDefaultInputShape, double v = 0.5);

}  // namespace evonas
