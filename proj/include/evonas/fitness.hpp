#pragma once

#include <optional>
#include <string>

#include "evonas/eval_record.hpp"

namespace evonas {

enum class ObjectiveKind { measured_latency, flop_proxy, param_count, none };

ObjectiveKind parse_objective_kind(const std::string& text);
std::string to_string(ObjectiveKind kind);

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

// f = v + alpha * m, with m the secondary objective normalized into [0, 1].
// Minimized costs take alpha < 0.
struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::none;
  double alpha = 0.0;
  std::optional<Bounds> bounds;  // unset until calibrated or configured
  bool clamp = true;

  // Throws std::invalid_argument when bounds are present with lo >= hi.
  void validate() const;
};

struct FitnessValue {
  double v = 0.0;
  double m = 0.0;
  double f = 0.0;
};

double normalize_objective(double raw, const Bounds& bounds, bool clamp = true);
double fitness(double v, double m, double alpha);

// Raw secondary objective of a successful record under `kind`
// (median seconds per batch, FLOPs per patch, parameter count, or 0).
double raw_objective(const EvalRecord& record, ObjectiveKind kind);

// Fills objective_raw / objective_norm / fitness from val_f1 and the config.
// Failed records get fitness -inf. Without bounds m is 0.
void score(EvalRecord& record, const ObjectiveConfig& config);

// Total order: successes before failures, then fitness descending, then
// fewer FLOPs, then lower genome_id. True when `a` ranks strictly before `b`.
bool ranks_before(const EvalRecord& a, const EvalRecord& b);

// -1, 0, +1 in ranking order.
int compare(const EvalRecord& a, const EvalRecord& b);

}  // namespace evonas
