#include "evonas/fitness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace evonas {

ObjectiveKind parse_objective_kind(const std::string& text) {
  if (text == "measured_latency") return ObjectiveKind::measured_latency;
  if (text == "flop_proxy") return ObjectiveKind::flop_proxy;
  if (text == "param_count") return ObjectiveKind::param_count;
  if (text == "none") return ObjectiveKind::none;
  throw std::invalid_argument("unknown objective kind '" + text +
                              "' (expected measured_latency, flop_proxy, param_count or none)");
}

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::measured_latency: return "measured_latency";
    case ObjectiveKind::flop_proxy: return "flop_proxy";
    case ObjectiveKind::param_count: return "param_count";
    case ObjectiveKind::none: return "none";
  }
  return "none";
}

void ObjectiveConfig::validate() const {
  if (!std::isfinite(alpha)) throw std::invalid_argument("objective alpha must be finite");
  if (kind != ObjectiveKind::none && bounds && !(bounds->lo < bounds->hi)) {
    throw std::invalid_argument("objective bounds need lo < hi, got lo=" + std::to_string(bounds->lo) +
                                " hi=" + std::to_string(bounds->hi));
  }
}

double normalize_objective(double raw, const Bounds& bounds, bool clamp) {
  const double m = (raw - bounds.lo) / (bounds.hi - bounds.lo);
  return clamp ? std::clamp(m, 0.0, 1.0) : m;
}

double fitness(double v, double m, double alpha) { return v + alpha * m; }

double raw_objective(const EvalRecord& record, ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::measured_latency:
      return record.latency ? record.latency->median_s_per_batch : 0.0;
    case ObjectiveKind::flop_proxy: return static_cast<double>(record.flops_inference);
    case ObjectiveKind::param_count: return static_cast<double>(record.params);
    case ObjectiveKind::none: return 0.0;
  }
  return 0.0;
}

void score(EvalRecord& record, const ObjectiveConfig& config) {
  if (!record.ok()) {
    record.fitness = -std::numeric_limits<double>::infinity();
    return;
  }
  record.objective_raw = raw_objective(record, config.kind);
  record.objective_norm = (config.kind != ObjectiveKind::none && config.bounds)
                              ? normalize_objective(record.objective_raw, *config.bounds, config.clamp)
                              : 0.0;
  record.fitness = fitness(record.val_f1, record.objective_norm, config.alpha);
}

bool ranks_before(const EvalRecord& a, const EvalRecord& b) { return compare(a, b) < 0; }

int compare(const EvalRecord& a, const EvalRecord& b) {
  if (a.ok() != b.ok()) return a.ok() ? -1 : 1;
  if (a.ok()) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness ? -1 : 1;
    if (a.flops_inference != b.flops_inference) return a.flops_inference < b.flops_inference ? -1 : 1;
  }
  if (a.genome_id != b.genome_id) return a.genome_id < b.genome_id ? -1 : 1;
  return 0;
}

}  // namespace evonas
