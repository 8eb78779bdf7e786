#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evonas/eval_backend.hpp"
#include "evonas/genome.hpp"
#include "evonas/patchset.hpp"
#include "evonas/worker_pool.hpp"

namespace evonas {

// Cross product of conv layer hyperparameter lists.
struct ConvGrid {
  std::vector<std::size_t> in_channels{3, 16, 32};
  std::vector<std::size_t> out_channels{8, 16, 32, 64, 128, 256};
  std::vector<std::size_t> kernel{1, 2, 3, 4, 5, 6, 7};
  std::vector<std::size_t> stride{1, 2, 3};
  std::vector<std::size_t> batch_size{1, 4, 16};
  std::size_t height = 32;
  std::size_t width = 32;

  std::size_t size() const;
  void validate() const;
};

// "key = v1,v2,..." lines, '#' comments. Keys: in_channels, out_channels,
// kernel, stride, batch_size, height, width. Unlisted keys keep defaults;
// unknown keys throw std::invalid_argument naming the key.
ConvGrid parse_grid(std::istream& in);
ConvGrid load_grid_file(const std::string& path);

struct SweepRow {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t batch_size = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double median_s = 0.0;  // forward + backward of one batch
  std::uint64_t flops_per_layer = 0;  // inference FLOPs per patch
  double flops_per_s = 0.0;           // flops_per_layer * batch_size / median_s
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> skipped;  // one reason per collapsing config
};

// Times one conv layer's forward+backward on random data for each grid point
// (median of `reps` >= 3). Configs whose output would be empty are skipped.
SweepResult sweep_conv(const ConvGrid& grid, std::size_t reps, std::uint64_t seed = 1);

extern const char* const kSweepCsvHeader;
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(std::istream& in);

// Highest flops_per_s first; ties keep input order.
std::vector<SweepRow> top_k_by_throughput(const std::vector<SweepRow>& rows, std::size_t k);

// Per hyperparameter: weights over the values seen among the top-k rows,
// proportional to (count + smoothing).
ThroughputPrior build_prior(const std::vector<SweepRow>& rows, std::size_t k, double beta = 1.0,
                            double smoothing = 1.0);

struct Histogram {
  double lo = 0.0;
  double bin_width = 0.0;
  std::vector<std::size_t> counts;
};

struct TimingAnalysis {
  Histogram histogram;
  int modes = 1;
  std::vector<double> mode_centers;
  double separation_stat = 0.0;  // (c_hi - c_lo) / (sd_lo + sd_hi) of the 2-means split
  double cluster_centers[2] = {0.0, 0.0};
  std::size_t low_cluster_size = 0;
};

// Requires >= 30 samples. Splits the sorted samples at the exact 1-D 2-means
// optimum; two modes are reported when separation_stat > 2.
TimingAnalysis timing_distribution(std::vector<double> samples, std::size_t bins = 20);

void write_histogram_csv(std::ostream& out, const Histogram& histogram);

struct ScalingPoint {
  std::size_t workers = 0;
  std::size_t evaluations = 0;
  double makespan_s = 0.0;
  double throughput = 0.0;   // evaluations per second
  double efficiency = 0.0;   // throughput / (workers * throughput at the first count)
  double upper_bound = 0.0;  // every evaluation as fast as the best observed one
  double lower_bound = 0.0;  // every evaluation as slow as the worst observed one
  double best_eval_s = 0.0;
  double worst_eval_s = 0.0;
  double idle_fraction = 0.0;
};

struct ScalingConfig {
  std::vector<std::size_t> worker_counts{1, 2, 4};
  std::size_t networks_per_worker = 8;
  Transport transport = Transport::in_process;
  std::uint64_t seed = 1;
  void validate() const;
};

// Each worker gets exactly networks_per_worker copies of `genome` (fresh ids
// and seeds). Per-evaluation time is the worker's result-to-result cycle.
std::vector<ScalingPoint> weak_scaling(const ScalingConfig& config, const Evaluator& evaluator, const Genome& genome);

extern const char* const kScalingCsvHeader;
void write_scaling_csv(std::ostream& out, const std::vector<ScalingPoint>& points);

// Per-epoch training time samples of one fixed genome under varied learning
// parameters, one row per sample.
struct TimingSample {
  int worker_id = 0;
  std::uint64_t genome_id = 0;
  std::size_t epoch = 0;
  double epoch_time_s = 0.0;
};

// Trains `genome` once per learning-parameter variant (lr and momentum drawn
// from `space`), timing each epoch. Variants are spread over `workers` threads.
std::vector<TimingSample> collect_epoch_times(const Genome& genome, const PatchSet& data,
                                              std::span<const std::size_t> train, std::size_t variants, int epochs,
                                              std::size_t workers, const SearchSpace& space, std::uint64_t seed);

void write_timing_csv(std::ostream& out, const std::vector<TimingSample>& samples);
std::vector<TimingSample> read_timing_csv(std::istream& in);

// Parallel-coordinates table: sweep columns plus a 0/1 top-k flag.
void write_parallel_coordinates_csv(std::ostream& out, const std::vector<SweepRow>& rows, std::size_t top_k);

}  // namespace evonas
