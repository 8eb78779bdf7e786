#include "evonas/eval_backend.hpp"

#include <chrono>
#include <thread>

namespace evonas {

EvalRecord DatasetEvaluator::evaluate(const Genome& genome, std::uint64_t seed) const {
  return evonas::evaluate(genome, splits_, config_, seed);
}

void sleep_seconds(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

FunctionEvaluator sleep_stub(double seconds, Dims input, double v) {
  return FunctionEvaluator([seconds, input, v](const Genome& genome, std::uint64_t) {
    EvalRecord r;
    r.genome_id = genome.id;
    r.val_f1 = v;
    try {
      const auto arch = genome_architecture(genome, input);
      r.flops_inference = count_flops_inference(arch);
      r.params = count_params(arch);
    } catch (const std::exception& e) {
      r = failed_record(genome.id, e.what());
    }
    sleep_seconds(seconds);
    return r;
  });
}

}  // namespace evonas
