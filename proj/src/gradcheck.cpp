#include "evonas/gradcheck.hpp"

#include <algorithm>
#include <chrono>

#include "evonas/network.hpp"

namespace evonas {

SearchSpace gradcheck_space() {
  SearchSpace s;
  s.out_channels = {2, 3, 4};
  s.kernel_max = 3;
  s.stride_max = 2;
  s.pool_stride_max = 2;
  s.dense_min = 3;
  s.dense_max = 6;
  s.max_feature_layers = 3;
  s.max_head_layers = 2;
  return s;
}

GradCheckSummary gradcheck_random_genomes(std::size_t count, std::uint64_t seed, double epsilon, Dims input,
                                          std::size_t batch) {
  const auto t0 = std::chrono::steady_clock::now();
  const SearchSpace space = gradcheck_space();
  Rng rng(seed);
  IdAllocator ids;
  GradCheckSummary out;
  for (std::size_t i = 0; i < count; ++i) {
    const Genome g = random_genome(rng, space, ids, input);
    Network<double> net = instantiate<double>(g, input, rng.next_u64());
    // Zero biases put ReLUs exactly on their kink; move off it.
    for (auto p : net.parameters()) {
      for (auto& v : p) v += rng.uniform(-0.05, 0.05);
    }
    Tensor4<double> x({batch, input.c, input.h, input.w});
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    std::vector<int> labels(batch);
    for (auto& l : labels) l = rng.bernoulli(0.5) ? 1 : 0;
    const double err = grad_check(net, x, labels, epsilon);
    out.cases.push_back({g, err});
    out.max_rel_error = std::max(out.max_rel_error, err);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace evonas
