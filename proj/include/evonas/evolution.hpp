#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evonas/eval_backend.hpp"
#include "evonas/fitness.hpp"
#include "evonas/genome.hpp"
#include "evonas/metrics.hpp"
#include "evonas/worker_pool.hpp"

namespace evonas {

struct GaConfig {
  std::size_t population = 50;
  std::size_t elites = 2;
  std::size_t tournament = 3;
  double crossover_p = 0.5;
  MutationRates mutation;
  SearchSpace space;
  Dims input = kDefaultInputShape;
  std::uint64_t seed = 1;
  std::optional<ThroughputPrior> prior;

  void validate() const;
};

struct StopCriteria {
  std::optional<std::size_t> max_evaluations;
  std::optional<double> wall_clock_s;
  void validate() const;
};

struct Member {
  EvalRecord record;
  Genome genome;
};

// Bounded set of evaluated genomes kept sorted best-first under compare().
// Over capacity, the worst member goes; the top `elites` are never evicted.
class Population {
 public:
  Population(std::size_t capacity, std::size_t elites);

  // Returns the evicted genome id, if any (possibly the inserted one).
  std::optional<std::uint64_t> insert(Member member);

  const std::vector<Member>& members() const { return members_; }
  const Member& best() const { return members_.front(); }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t elites() const { return elites_; }

 private:
  std::size_t capacity_;
  std::size_t elites_;
  std::vector<Member> members_;
};

// Evaluation seed for a genome; independent of which worker runs it.
std::uint64_t task_seed(std::uint64_t run_seed, std::uint64_t genome_id);

// JSON-lines run log. Line 1 is the header; then one "eval" line per
// outcome, "dropped" lines for protocol errors, and a closing "summary".
class EvolutionLog {
 public:
  explicit EvolutionLog(std::ostream& out) : out_(&out) {}
  void header(const nlohmann::json& config, const ObjectiveConfig& objective, const nlohmann::json& calibration,
              std::uint64_t seed);
  void eval(std::size_t seq, const Member& member, const Member& best);
  void dropped(std::uint64_t genome_id, const std::string& reason);
  void summary(std::size_t evaluations, const Member& best, const PoolReport& pool);

 private:
  void write(const nlohmann::json& line);
  std::ostream* out_;
};

// Steady-state GA master. Bootstrap issues random genomes until `population`
// of them are out; afterwards children come from two tournament winners
// (crossover with probability crossover_p, else a clone of the better one),
// then mutation. Incoming records are scored against the objective.
class EvolutionMaster : public Dispatcher {
 public:
  EvolutionMaster(GaConfig ga, ObjectiveConfig objective, StopCriteria stop, EvolutionLog* log = nullptr,
                  std::uint64_t first_id = 1);

  // Throws std::logic_error if `worker_id` already has a pending genome.
  Genome next_candidate(int worker_id);
  // False (and a "dropped" log line) when the genome id is not pending.
  bool receive_result(EvalRecord record);

  std::optional<Task> next_task(int worker_id) override;
  void complete(const EvalRecord& record) override;
  bool exhausted() const override;

  const Population& population() const { return population_; }
  const std::optional<Member>& best() const { return best_; }
  std::size_t evaluations_completed() const { return completed_; }
  std::size_t issued() const { return issued_; }
  std::size_t pending_count() const { return pending_.size(); }
  const ObjectiveConfig& objective() const { return objective_; }

 private:
  const Member& tournament();

  GaConfig ga_;
  ObjectiveConfig objective_;
  StopCriteria stop_;
  EvolutionLog* log_;
  Rng rng_;
  IdAllocator ids_;
  Population population_;
  std::map<std::uint64_t, std::pair<int, Genome>> pending_;  // genome id -> (worker, genome)
  std::optional<Member> best_;
  std::size_t issued_ = 0;
  std::size_t random_issued_ = 0;
  std::size_t completed_ = 0;
  std::chrono::steady_clock::time_point start_;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// (min, max) of the raw secondary objective over successful records,
// widened to (0.9 * min, 1.1 * max). Throws CalibrationError when nothing
// succeeded or the range is degenerate.
Bounds calibration_bounds(const std::vector<EvalRecord>& records, ObjectiveKind kind);

// Issues k random genomes (own RNG stream) and collects their records.
class Calibrator : public Dispatcher {
 public:
  Calibrator(const GaConfig& ga, std::size_t k, std::uint64_t first_id = 1);
  std::optional<Task> next_task(int worker_id) override;
  void complete(const EvalRecord& record) override { records_.push_back(record); }
  bool exhausted() const override { return issued_ >= k_; }
  const std::vector<EvalRecord>& records() const { return records_; }
  std::uint64_t next_id() const { return ids_.peek(); }

 private:
  GaConfig ga_;
  std::size_t k_;
  Rng rng_;
  IdAllocator ids_;
  std::size_t issued_ = 0;
  std::vector<EvalRecord> records_;
};

struct EvolutionConfig {
  GaConfig ga;
  ObjectiveConfig objective;
  StopCriteria stop;
  std::size_t calibration_k = 8;  // used when the objective needs bounds and none are given
  PoolConfig pool;
};

struct RunOutcome {
  Member best;
  std::optional<Bounds> bounds;
  std::vector<EvalRecord> calibration;
  PoolReport pool;
  std::size_t evaluations = 0;
};

// Calibrates if needed, writes the log header, drives the pool until the stop
// criterion, and writes the summary. `config_echo` is stored verbatim in the header.
RunOutcome run_evolution(const EvolutionConfig& config, const Evaluator& evaluator, std::ostream& log,
                         const nlohmann::json& config_echo = nlohmann::json::object());

struct FinalModel {
  Network<float> network;
  TrainResult<float> training;
  MetricsReport test_metrics;
};

// Retrains the genome from scratch with `budget` on the train split and
// scores it on the test split. The MNDL file and genome text are written when
// `out_dir` is non-empty (best.mndl, best.genome).
FinalModel finalize_best(const Genome& genome, const Splits& splits, const TrainBudget& budget, std::uint64_t seed,
                         const std::string& out_dir = "", std::size_t batch_size = 128);

// Batched test-set metrics with a timed prediction pass (one warmup batch).
MetricsReport evaluate_model(const Network<float>& network, const PatchSet& data, std::span<const std::size_t> indices,
                             std::size_t batch_size);

struct LogAudit {
  bool ok = true;
  std::vector<std::string> errors;
  std::size_t evaluations = 0;
  bool has_summary = false;
};

// Checks a run log: header first, consecutive seq, required fields, unique
// genome ids, non-decreasing best_fitness, summary count matching.
LogAudit audit_log(std::istream& in);

}  // namespace evonas
