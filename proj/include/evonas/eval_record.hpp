#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace evonas {

struct LatencyStats {
  double median_s_per_batch = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;
  int reps = 0;
  int batch_size = 0;
  double patches_per_s = 0.0;
  friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

// Outcome of evaluating one genome. A failed evaluation (shape error,
// non-finite loss, timeout, budget) is still a record: `failure` holds the
// reason and fitness is -inf.
struct EvalRecord {
  std::uint64_t genome_id = 0;
  std::optional<std::string> failure;
  double val_f1 = 0.0;
  bool val_f1_degenerate = false;
  double val_auc = 0.0;
  double train_time_s = 0.0;
  std::optional<LatencyStats> latency;
  std::uint64_t flops_inference = 0;
  std::uint64_t params = 0;
  double objective_raw = 0.0;
  double objective_norm = 0.0;
  double fitness = 0.0;
  int worker_id = -1;
  double started_s = 0.0;
  double finished_s = 0.0;

  bool ok() const { return !failure.has_value(); }
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

EvalRecord failed_record(std::uint64_t genome_id, std::string reason);

// Stable field names; -inf fitness is written as null.
nlohmann::json to_json(const EvalRecord& record);
EvalRecord record_from_json(const nlohmann::json& j);

}  // namespace evonas
