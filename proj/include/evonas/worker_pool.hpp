#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evonas/eval_backend.hpp"
#include "evonas/wire.hpp"

namespace evonas {

struct Task {
  Genome genome;
  std::uint64_t seed = 0;
};

// Master-side policy driven by the pool. All calls come from the single
// master thread.
class Dispatcher {
 public:
  virtual ~Dispatcher() = default;
  // Work for an idle worker, or nullopt if nothing can be issued right now.
  virtual std::optional<Task> next_task(int worker_id) = 0;
  // Called exactly once per issued genome id: success, EvalFailure or timeout.
  virtual void complete(const EvalRecord& record) = 0;
  // True once no further tasks will be issued.
  virtual bool exhausted() const = 0;
};

enum class Transport { in_process, socket };

// async: workers pull freely. lockstep: the master serves workers strictly
// round-robin (request, work, result) so any transport gives the same event
// order. inline_sync: no threads; evaluations run on the calling thread in
// the lockstep order.
enum class Schedule { async, lockstep, inline_sync };

Transport parse_transport(const std::string& text);
Schedule parse_schedule(const std::string& text);
std::string to_string(Transport t);
std::string to_string(Schedule s);

struct PoolConfig {
  int workers = 1;
  Transport transport = Transport::in_process;
  Schedule schedule = Schedule::async;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  // Socket transport: start the workers as threads of this process. When
  // false the pool waits for `workers` external connections.
  bool spawn_local_workers = true;
  double eval_timeout_s = std::numeric_limits<double>::infinity();
  std::function<void(std::uint16_t)> on_listen;  // reports the bound port

  void validate() const;
};

// Timing as seen by the master: a worker is busy from Work sent to Result
// received and idle otherwise until it is shut down.
struct WorkerStats {
  int worker_id = 0;
  std::size_t evaluations_done = 0;
  double busy_time_s = 0.0;
  double idle_time_s = 0.0;
  std::vector<double> durations_s;  // busy span per evaluation
  std::vector<double> cycles_s;     // previous result (or pool start) to this result
  double last_result_s = 0.0;       // since pool start

  double idle_fraction() const;
};

struct PoolReport {
  std::vector<WorkerStats> workers;
  double wall_s = 0.0;
  std::size_t issued = 0;        // distinct genomes handed out
  std::size_t completed = 0;     // outcomes delivered to the dispatcher
  std::size_t reissued = 0;
  std::size_t timeouts = 0;      // genomes that failed by timeout
  std::size_t duplicates_dropped = 0;
  std::size_t unknown_dropped = 0;

  double aggregate_idle_fraction() const;
};

// Runs until the dispatcher is exhausted and every issued genome has an
// outcome. A genome unanswered for eval_timeout_s is reissued once; if it
// times out again it completes as a timeout failure. Later duplicate results
// are dropped (first wins).
PoolReport run_pool(Dispatcher& dispatcher, const Evaluator& evaluator, const PoolConfig& config);

// Worker side of the socket transport: connects, says HELLO, then loops
// request, evaluate, result until SHUTDOWN. Returns evaluations done.
std::size_t run_socket_worker(const std::string& host, std::uint16_t port, int worker_id, const Evaluator& evaluator);

// Evaluates one task the way every worker does: exceptions become failed
// records, and genome_id / worker_id are stamped.
EvalRecord run_task(const Evaluator& evaluator, const Task& task, int worker_id);

}  // namespace evonas
