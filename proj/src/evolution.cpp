#include "evonas/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "evonas/model_io.hpp"

namespace evonas {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kCalibrationStream = 0xCA11B4A7E5EEDULL;

nlohmann::json fitness_json(double f) {
  return std::isfinite(f) ? nlohmann::json(f) : nlohmann::json(nullptr);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

void GaConfig::validate() const {
  space.validate();
  if (population < 2) throw std::invalid_argument("population must be >= 2");
  if (elites >= population) throw std::invalid_argument("elites must be < population");
  if (tournament < 1) throw std::invalid_argument("tournament size must be >= 1");
  if (!(crossover_p >= 0 && crossover_p <= 1)) throw std::invalid_argument("crossover probability must be in [0, 1]");
  for (double r : {mutation.perturb_hparam, mutation.add_layer, mutation.remove_layer, mutation.perturb_lr}) {
    if (!(r >= 0 && r <= 1)) throw std::invalid_argument("mutation rates must be in [0, 1]");
  }
  if (prior && !prior->valid()) throw std::invalid_argument("throughput prior weights must be >= 0 and sum to 1");
}

void StopCriteria::validate() const {
  if (!max_evaluations && !wall_clock_s) throw std::invalid_argument("a stop criterion (max evaluations or wall clock) is required");
  if (max_evaluations && *max_evaluations == 0) throw std::invalid_argument("max evaluations must be >= 1");
  if (wall_clock_s && !(*wall_clock_s > 0)) throw std::invalid_argument("wall clock budget must be > 0");
}

// ---- Population

Population::Population(std::size_t capacity, std::size_t elites) : capacity_(capacity), elites_(elites) {
  if (capacity == 0 || elites >= capacity) throw std::invalid_argument("population needs capacity > elites");
}

std::optional<std::uint64_t> Population::insert(Member member) {
  const auto at = std::upper_bound(members_.begin(), members_.end(), member,
                                   [](const Member& a, const Member& b) { return ranks_before(a.record, b.record); });
  members_.insert(at, std::move(member));
  if (members_.size() <= capacity_) return std::nullopt;
  // Sorted best-first, so the last member is the worst and, with
  // capacity > elites, never one of the elites.
  const std::uint64_t evicted = members_.back().record.genome_id;
  members_.pop_back();
  return evicted;
}

std::uint64_t task_seed(std::uint64_t run_seed, std::uint64_t genome_id) {
  return splitmix64(run_seed ^ splitmix64(genome_id));
}

// ---- log

void EvolutionLog::write(const nlohmann::json& line) {
  *out_ << line.dump() << '\n';
  out_->flush();
}

void EvolutionLog::header(const nlohmann::json& config, const ObjectiveConfig& objective,
                          const nlohmann::json& calibration, std::uint64_t seed) {
  nlohmann::json obj{{"kind", to_string(objective.kind)}, {"alpha", objective.alpha}, {"clamp", objective.clamp}};
  obj["lo"] = objective.bounds ? nlohmann::json(objective.bounds->lo) : nlohmann::json(nullptr);
  obj["hi"] = objective.bounds ? nlohmann::json(objective.bounds->hi) : nlohmann::json(nullptr);
  write({{"type", "header"},
         {"format", "evonas-log"},
         {"version", 1},
         {"seed", seed},
         {"config", config},
         {"objective", obj},
         {"calibration", calibration}});
}

void EvolutionLog::eval(std::size_t seq, const Member& member, const Member& best) {
  write({{"type", "eval"},
         {"seq", seq},
         {"genome", to_text(member.genome)},
         {"record", to_json(member.record)},
         {"best_genome_id", best.record.genome_id},
         {"best_fitness", fitness_json(best.record.fitness)}});
}

void EvolutionLog::dropped(std::uint64_t genome_id, const std::string& reason) {
  write({{"type", "dropped"}, {"genome_id", genome_id}, {"reason", reason}});
}

void EvolutionLog::summary(std::size_t evaluations, const Member& best, const PoolReport& pool) {
  nlohmann::json workers = nlohmann::json::array();
  for (const auto& w : pool.workers) {
    workers.push_back({{"worker_id", w.worker_id},
                       {"evaluations", w.evaluations_done},
                       {"busy_s", w.busy_time_s},
                       {"idle_s", w.idle_time_s},
                       {"idle_fraction", w.idle_fraction()}});
  }
  write({{"type", "summary"},
         {"evaluations", evaluations},
         {"best_genome_id", best.record.genome_id},
         {"best_fitness", fitness_json(best.record.fitness)},
         {"best_genome", to_text(best.genome)},
         {"wall_s", pool.wall_s},
         {"idle_fraction", pool.aggregate_idle_fraction()},
         {"reissued", pool.reissued},
         {"timeouts", pool.timeouts},
         {"duplicates_dropped", pool.duplicates_dropped},
         {"workers", workers}});
}

// ---- master

EvolutionMaster::EvolutionMaster(GaConfig ga, ObjectiveConfig objective, StopCriteria stop, EvolutionLog* log,
                                 std::uint64_t first_id)
    : ga_(std::move(ga)),
      objective_(std::move(objective)),
      stop_(stop),
      log_(log),
      rng_(ga_.seed),
      ids_(first_id),
      population_(ga_.population, ga_.elites),
      start_(Clock::now()) {
  ga_.validate();
  objective_.validate();
  stop_.validate();
}

const Member& EvolutionMaster::tournament() {
  std::size_t winner = population_.size();
  for (std::size_t i = 0; i < ga_.tournament; ++i) winner = std::min(winner, rng_.index(population_.size()));
  return population_.members()[winner];
}

Genome EvolutionMaster::next_candidate(int worker_id) {
  for (const auto& [id, entry] : pending_) {
    if (entry.first == worker_id) {
      throw std::logic_error("worker " + std::to_string(worker_id) + " already has genome " + std::to_string(id));
    }
  }
  const ThroughputPrior* prior = ga_.prior ? &*ga_.prior : nullptr;
  Genome child;
  if (random_issued_ < ga_.population || population_.empty()) {
    child = random_genome(rng_, ga_.space, ids_, ga_.input, prior);
    ++random_issued_;
  } else {
    const Member& a = tournament();
    const Member& b = tournament();
    if (rng_.bernoulli(ga_.crossover_p)) {
      IdAllocator scratch(0);
      const Genome mixed = crossover(a.genome, b.genome, rng_, scratch, ga_.input, ga_.space.max_feature_layers);
      child = mutate(mixed, rng_, ga_.mutation, ga_.space, ids_, ga_.input, prior);
      child.parent_ids = mixed.parent_ids;
    } else {
      const Member& better = ranks_before(b.record, a.record) ? b : a;
      child = mutate(better.genome, rng_, ga_.mutation, ga_.space, ids_, ga_.input, prior);
    }
  }
  pending_.emplace(child.id, std::make_pair(worker_id, child));
  ++issued_;
  return child;
}

bool EvolutionMaster::receive_result(EvalRecord record) {
  const auto it = pending_.find(record.genome_id);
  if (it == pending_.end()) {
    if (log_) log_->dropped(record.genome_id, "result for a genome that is not pending");
    return false;
  }
  Member member{std::move(record), std::move(it->second.second)};
  pending_.erase(it);
  score(member.record, objective_);
  ++completed_;
  if (!best_ || ranks_before(member.record, best_->record)) best_ = member;
  if (log_) log_->eval(completed_, member, *best_);
  population_.insert(std::move(member));
  return true;
}

std::optional<Task> EvolutionMaster::next_task(int worker_id) {
  if (exhausted()) return std::nullopt;
  Genome g = next_candidate(worker_id);
  const std::uint64_t seed = task_seed(ga_.seed, g.id);
  return Task{std::move(g), seed};
}

void EvolutionMaster::complete(const EvalRecord& record) { receive_result(record); }

bool EvolutionMaster::exhausted() const {
  if (stop_.max_evaluations && issued_ >= *stop_.max_evaluations) return true;
  if (stop_.wall_clock_s) {
    return std::chrono::duration<double>(Clock::now() - start_).count() >= *stop_.wall_clock_s;
  }
  return false;
}

// ---- calibration

Bounds calibration_bounds(const std::vector<EvalRecord>& records, ObjectiveKind kind) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t ok = 0;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    const double raw = raw_objective(r, kind);
    lo = std::min(lo, raw);
    hi = std::max(hi, raw);
    ++ok;
  }
  if (ok == 0) {
    throw CalibrationError("calibration: all " + std::to_string(records.size()) + " genomes failed to evaluate");
  }
  if (!(lo < hi)) {
    throw CalibrationError("calibration: degenerate objective range (every success measured " + std::to_string(lo) +
                           "); widen the search space or set objective.lo/objective.hi");
  }
  return Bounds{0.9 * lo, 1.1 * hi};
}

Calibrator::Calibrator(const GaConfig& ga, std::size_t k, std::uint64_t first_id)
    : ga_(ga), k_(k), rng_(ga.seed ^ kCalibrationStream), ids_(first_id) {
  if (k < 2) throw std::invalid_argument("calibration needs k >= 2");
}

std::optional<Task> Calibrator::next_task(int) {
  if (exhausted()) return std::nullopt;
  ++issued_;
  Genome g = random_genome(rng_, ga_.space, ids_, ga_.input, ga_.prior ? &*ga_.prior : nullptr);
  const std::uint64_t seed = task_seed(ga_.seed, g.id);
  return Task{std::move(g), seed};
}

// ---- run

namespace {

// Calibration then evolution in one pool session, so external workers stay
// connected across the two phases.
class PhasedRun : public Dispatcher {
 public:
  PhasedRun(const EvolutionConfig& config, std::ostream& log_stream, const nlohmann::json& config_echo)
      : config_(config), echo_(config_echo), log_(log_stream), objective_(config.objective) {
    if (objective_.kind != ObjectiveKind::none && !objective_.bounds) {
      calibrator_.emplace(config.ga, config.calibration_k);
    } else {
      start_master(nullptr, 1);
    }
  }

  std::optional<Task> next_task(int worker_id) override {
    if (!master_ && !error_) {
      if (!calibrator_->exhausted()) return calibrator_->next_task(worker_id);
      if (calibrator_->records().size() < config_.calibration_k) return std::nullopt;
      finish_calibration();
    }
    if (error_) return std::nullopt;
    return master_->next_task(worker_id);
  }

  void complete(const EvalRecord& record) override {
    if (master_) {
      master_->complete(record);
    } else {
      calibrator_->complete(record);
    }
  }

  bool exhausted() const override { return error_ || (master_ && master_->exhausted()); }

  const std::optional<std::string>& error() const { return error_; }
  const EvolutionMaster* master() const { return master_ ? &*master_ : nullptr; }
  const std::optional<Calibrator>& calibrator() const { return calibrator_; }
  const ObjectiveConfig& objective() const { return objective_; }

 private:
  void finish_calibration() {
    const auto& records = calibrator_->records();
    try {
      objective_.bounds = calibration_bounds(records, objective_.kind);
    } catch (const CalibrationError& e) {
      error_ = e.what();
      return;
    }
    nlohmann::json raws = nlohmann::json::array();
    for (const auto& r : records) {
      raws.push_back({{"genome_id", r.genome_id},
                      {"raw", r.ok() ? nlohmann::json(raw_objective(r, objective_.kind)) : nlohmann::json(nullptr)},
                      {"failure", r.failure ? nlohmann::json(*r.failure) : nlohmann::json(nullptr)}});
    }
    const nlohmann::json calibration{{"k", config_.calibration_k},
                                     {"lo", objective_.bounds->lo},
                                     {"hi", objective_.bounds->hi},
                                     {"samples", raws}};
    start_master(calibration, calibrator_->next_id());
  }

  void start_master(const nlohmann::json& calibration, std::uint64_t first_id) {
    objective_.validate();
    log_.header(echo_, objective_, calibration, config_.ga.seed);
    master_.emplace(config_.ga, objective_, config_.stop, &log_, first_id);
  }

  const EvolutionConfig& config_;
  const nlohmann::json& echo_;
  EvolutionLog log_;
  ObjectiveConfig objective_;
  std::optional<Calibrator> calibrator_;
  std::optional<EvolutionMaster> master_;
  std::optional<std::string> error_;
};

}  // namespace

RunOutcome run_evolution(const EvolutionConfig& config, const Evaluator& evaluator, std::ostream& log_stream,
                         const nlohmann::json& config_echo) {
  config.ga.validate();
  config.stop.validate();
  config.pool.validate();
  config.objective.validate();
  RunOutcome outcome;
  PhasedRun run(config, log_stream, config_echo);
  outcome.pool = run_pool(run, evaluator, config.pool);
  if (run.error()) throw CalibrationError(*run.error());
  if (run.calibrator()) outcome.calibration = run.calibrator()->records();
  outcome.bounds = run.objective().bounds;
  const EvolutionMaster* master = run.master();
  if (!master || !master->best()) throw std::runtime_error("evolution finished without any evaluated genome");
  outcome.best = *master->best();
  outcome.evaluations = master->evaluations_completed();
  EvolutionLog(log_stream).summary(outcome.evaluations, outcome.best, outcome.pool);
  return outcome;
}

// ---- final model

MetricsReport evaluate_model(const Network<float>& network, const PatchSet& data, std::span<const std::size_t> indices,
                             std::size_t batch_size) {
  if (indices.empty()) throw std::invalid_argument("evaluate_model: empty index set");
  if (!(network.input_shape() == data.dims)) {
    throw ShapeMismatch("model input " + to_string(network.input_shape()) + " does not match patches " +
                        to_string(data.dims));
  }
  const std::size_t warm = std::min(batch_size, indices.size());
  (void)network.forward(data.gather<float>(indices.subspan(0, warm)));
  const auto t0 = Clock::now();
  const auto scores = predict_scores(network, data, indices, batch_size);
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  MetricsReport m;
  const auto labels = data.gather_labels(indices);
  m.confusion = confusion_from(labels, predict_labels(scores));
  const auto f1 = f1_score(m.confusion);
  m.f1 = f1.value;
  m.f1_degenerate = f1.degenerate;
  m.auc = auc_roc(scores, labels);
  m.prediction_rate_patches_per_s = seconds > 0 ? static_cast<double>(indices.size()) / seconds : 0.0;
  m.dataset_id = data.name;
  return m;
}

FinalModel finalize_best(const Genome& genome, const Splits& splits, const TrainBudget& budget, std::uint64_t seed,
                         const std::string& out_dir, std::size_t batch_size) {
  if (!splits.data) throw std::invalid_argument("finalize_best: splits carry no data");
  auto training = train_short<float>(genome, *splits.data, splits.train, budget, seed);
  FinalModel out{training.network, training, {}};
  if (!splits.test.empty()) out.test_metrics = evaluate_model(out.network, *splits.data, splits.test, batch_size);
  out.test_metrics.model_id = "genome:" + std::to_string(genome.id);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    save_model(out.network, dir / "best.mndl");
    std::ofstream(dir / "best.genome") << to_text(genome) << '\n';
    out.test_metrics.model_id = (dir / "best.mndl").string();
  }
  return out;
}

// ---- audit

LogAudit audit_log(std::istream& in) {
  LogAudit audit;
  auto fail = [&](std::size_t line, const std::string& what) {
    audit.ok = false;
    audit.errors.push_back("line " + std::to_string(line) + ": " + what);
  };
  std::string text;
  std::size_t line_no = 0;
  double best = -std::numeric_limits<double>::infinity();
  std::set<std::uint64_t> ids;
  bool seen_header = false;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      fail(line_no, std::string("not JSON: ") + e.what());
      continue;
    }
    const std::string type = j.value("type", "");
    if (!seen_header) {
      if (type != "header" || j.value("format", "") != "evonas-log") fail(line_no, "first line is not a log header");
      for (const char* key : {"version", "seed", "config", "objective", "calibration"}) {
        if (!j.contains(key)) fail(line_no, std::string("header missing '") + key + "'");
      }
      seen_header = true;
      continue;
    }
    if (audit.has_summary) fail(line_no, "line after summary");
    if (type == "eval") {
      for (const char* key : {"seq", "genome", "record", "best_genome_id", "best_fitness"}) {
        if (!j.contains(key)) {
          fail(line_no, std::string("eval missing '") + key + "'");
          return audit;
        }
      }
      ++audit.evaluations;
      if (j["seq"].get<std::size_t>() != audit.evaluations) fail(line_no, "seq is not consecutive");
      try {
        const EvalRecord r = record_from_json(j["record"]);
        if (!ids.insert(r.genome_id).second) fail(line_no, "duplicate genome id " + std::to_string(r.genome_id));
        const Genome g = genome_from_text(j["genome"].get<std::string>());
        if (g.id != r.genome_id) fail(line_no, "genome text id differs from record id");
      } catch (const std::exception& e) {
        fail(line_no, std::string("bad record: ") + e.what());
      }
      const double f = j["best_fitness"].is_null() ? -std::numeric_limits<double>::infinity()
                                                    : j["best_fitness"].get<double>();
      if (f < best) fail(line_no, "best_fitness decreased");
      best = std::max(best, f);
    } else if (type == "dropped") {
      if (!j.contains("genome_id")) fail(line_no, "dropped line without genome_id");
    } else if (type == "summary") {
      audit.has_summary = true;
      if (j.value("evaluations", std::size_t{0}) != audit.evaluations) fail(line_no, "summary count mismatch");
    } else {
      fail(line_no, "unknown line type '" + type + "'");
    }
  }
  if (!seen_header) fail(0, "empty log");
  return audit;
}

}  // namespace evonas
