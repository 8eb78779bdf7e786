#pragma once

#include <cstdint>
#include <vector>

#include "evonas/genome.hpp"

namespace evonas {

struct GradCheckCase {
  Genome genome;
  double max_rel_error = 0.0;
};

struct GradCheckSummary {
  std::vector<GradCheckCase> cases;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

// Small search space that keeps finite differences cheap.
SearchSpace gradcheck_space();

// grad_check on `count` random genomes instantiated in double precision with
// a seeded random batch of `batch` patches of `input` shape.
GradCheckSummary gradcheck_random_genomes(std::size_t count, std::uint64_t seed, double epsilon = 1e-5,
                                          Dims input = {3, 12, 12}, std::size_t batch = 3);

}  // namespace evonas
