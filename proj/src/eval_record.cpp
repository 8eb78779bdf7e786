#include "evonas/eval_record.hpp"

#include <cmath>
#include <limits>

namespace evonas {

EvalRecord failed_record(std::uint64_t genome_id, std::string reason) {
  EvalRecord r;
  r.genome_id = genome_id;
  r.failure = std::move(reason);
  r.fitness = -std::numeric_limits<double>::infinity();
  return r;
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j;
  j["genome_id"] = r.genome_id;
  j["ok"] = r.ok();
  j["failure"] = r.failure ? nlohmann::json(*r.failure) : nlohmann::json(nullptr);
  j["val_f1"] = r.val_f1;
  j["val_f1_degenerate"] = r.val_f1_degenerate;
  j["val_auc"] = r.val_auc;
  j["train_time_s"] = r.train_time_s;
  if (r.latency) {
    const auto& l = *r.latency;
    j["latency"] = {{"median_s_per_batch", l.median_s_per_batch}, {"min_s", l.min_s}, {"max_s", l.max_s},
                    {"reps", l.reps}, {"batch_size", l.batch_size}, {"patches_per_s", l.patches_per_s}};
  } else {
    j["latency"] = nullptr;
  }
  j["flops_inference"] = r.flops_inference;
  j["params"] = r.params;
  j["objective_raw"] = r.objective_raw;
  j["objective_norm"] = r.objective_norm;
  j["fitness"] = std::isfinite(r.fitness) ? nlohmann::json(r.fitness) : nlohmann::json(nullptr);
  j["worker_id"] = r.worker_id;
  j["started_s"] = r.started_s;
  j["finished_s"] = r.finished_s;
  return j;
}

EvalRecord record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.genome_id = j.at("genome_id").get<std::uint64_t>();
  if (!j.at("failure").is_null()) r.failure = j.at("failure").get<std::string>();
  r.val_f1 = j.at("val_f1").get<double>();
  r.val_f1_degenerate = j.at("val_f1_degenerate").get<bool>();
  r.val_auc = j.at("val_auc").get<double>();
  r.train_time_s = j.at("train_time_s").get<double>();
  if (const auto& l = j.at("latency"); !l.is_null()) {
    r.latency = LatencyStats{l.at("median_s_per_batch").get<double>(), l.at("min_s").get<double>(),
                             l.at("max_s").get<double>(),          l.at("reps").get<int>(),
                             l.at("batch_size").get<int>(),         l.at("patches_per_s").get<double>()};
  }
  r.flops_inference = j.at("flops_inference").get<std::uint64_t>();
  r.params = j.at("params").get<std::uint64_t>();
  r.objective_raw = j.at("objective_raw").get<double>();
  r.objective_norm = j.at("objective_norm").get<double>();
  r.fitness = j.at("fitness").is_null() ? -std::numeric_limits<double>::infinity() : j.at("fitness").get<double>();
  r.worker_id = j.at("worker_id").get<int>();
  r.started_s = j.at("started_s").get<double>();
  r.finished_s = j.at("finished_s").get<double>();
  return r;
}

}  // namespace evonas
