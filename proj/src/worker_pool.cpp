#include "evonas/worker_pool.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "evonas/format_error.hpp"

namespace evonas {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <typename T>
class BlockingQueue {
 public:
  void push(T value) {
    {
      std::lock_guard lock(mutex_);
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  T pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !items_.empty(); });
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  std::optional<T> pop_for(double seconds) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, std::chrono::duration<double>(seconds), [&] { return !items_.empty(); })) {
      return std::nullopt;
    }
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
};

struct Envelope {
  int slot = 0;
  std::optional<Message> message;  // empty: the worker disconnected
};

// Master's view of the transport.
class Link {
 public:
  virtual ~Link() = default;
  virtual void send(int slot, const Message& m) = 0;
  virtual Envelope receive() = 0;
  virtual std::optional<Envelope> receive_for(double seconds) = 0;
  // Waits for worker threads / connections to wind down.
  virtual void finish() = 0;
};

class WorkerChannel {
 public:
  virtual ~WorkerChannel() = default;
  virtual void send(const Message& m) = 0;
  virtual Message receive() = 0;
};

std::size_t worker_loop(WorkerChannel& channel, int worker_id, const Evaluator& evaluator) {
  std::size_t done = 0;
  for (;;) {
    channel.send(Message::request());
    Message m = channel.receive();
    if (m.type == MessageType::shutdown) return done;
    if (m.type != MessageType::work) throw std::runtime_error("worker: unexpected " + to_string(m.type));
    EvalRecord r = run_task(evaluator, Task{std::move(*m.genome), m.seed}, worker_id);
    channel.send(Message::result(std::move(r)));
    ++done;
  }
}

// ---- in-process transport

class InProcessLink : public Link {
 public:
  InProcessLink(int workers, const Evaluator& evaluator) : outboxes_(workers) {
    for (int w = 0; w < workers; ++w) {
      threads_.emplace_back([this, w, &evaluator] {
        Channel channel(*this, w);
        try {
          worker_loop(channel, w, evaluator);
        } catch (...) {
          inbox_.push(Envelope{w, std::nullopt});
        }
      });
    }
  }
  ~InProcessLink() override { finish(); }

  void send(int slot, const Message& m) override { outboxes_[slot].push(m); }
  Envelope receive() override { return inbox_.pop(); }
  std::optional<Envelope> receive_for(double s) override { return inbox_.pop_for(s); }
  void finish() override {
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

 private:
  class Channel : public WorkerChannel {
   public:
    Channel(InProcessLink& link, int slot) : link_(link), slot_(slot) {}
    void send(const Message& m) override { link_.inbox_.push(Envelope{slot_, m}); }
    Message receive() override { return link_.outboxes_[slot_].pop(); }

   private:
    InProcessLink& link_;
    int slot_;
  };

  BlockingQueue<Envelope> inbox_;
  std::vector<BlockingQueue<Message>> outboxes_;
  std::vector<std::thread> threads_;
};

// ---- socket transport

void write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t at = 0;
  while (at < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + at, bytes.size() - at, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("socket send: ") + std::strerror(errno));
    }
    at += static_cast<std::size_t>(n);
  }
}

// Blocks until a full frame arrives; nullopt on orderly EOF.
std::optional<Message> read_message(int fd, FrameReader& reader) {
  std::uint8_t buf[4096];
  for (;;) {
    if (auto m = reader.next()) return m;
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n == 0) {
      if (reader.buffered() > 0) throw FormatError("connection closed mid-frame", reader.buffered());
      return std::nullopt;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("socket recv: ") + std::strerror(errno));
    }
    reader.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
  }
}

sockaddr_in make_address(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw std::invalid_argument("bad IPv4 address '" + host + "'");
  }
  return addr;
}

class FdGuard {
 public:
  explicit FdGuard(int fd = -1) : fd_(fd) {}
  ~FdGuard() { reset(); }
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;
  int get() const { return fd_; }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_;
};

class SocketChannel : public WorkerChannel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  void send(const Message& m) override { write_all(fd_, encode_frame(m)); }
  Message receive() override {
    auto m = read_message(fd_, reader_);
    if (!m) throw std::runtime_error("worker: master closed the connection");
    return std::move(*m);
  }

 private:
  int fd_;
  FrameReader reader_;
};

class SocketLink : public Link {
 public:
  SocketLink(const PoolConfig& config, const Evaluator& evaluator) : fds_(config.workers, -1) {
    try {
      open(config, evaluator);
    } catch (...) {
      listen_.reset();
      finish();
      throw;
    }
  }

  ~SocketLink() override { finish(); }

  void send(int slot, const Message& m) override { write_all(fds_[slot], encode_frame(m)); }
  Envelope receive() override { return inbox_.pop(); }
  std::optional<Envelope> receive_for(double s) override { return inbox_.pop_for(s); }

  void finish() override {
    for (int fd : fds_) {
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : local_) {
      if (t.joinable()) t.join();
    }
    for (auto& t : readers_) {
      if (t.joinable()) t.join();
    }
    for (int& fd : fds_) {
      if (fd >= 0) ::close(fd);
      fd = -1;
    }
  }

 private:
  void open(const PoolConfig& config, const Evaluator& evaluator) {
    listen_.reset(::socket(AF_INET, SOCK_STREAM, 0));
    if (listen_.get() < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(listen_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_address(config.host, config.port);
    if (::bind(listen_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      throw std::runtime_error("bind " + config.host + ":" + std::to_string(config.port) + ": " + std::strerror(errno));
    }
    if (::listen(listen_.get(), config.workers) != 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listen_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (config.on_listen) config.on_listen(port_);

    if (config.spawn_local_workers) {
      for (int w = 0; w < config.workers; ++w) {
        local_.emplace_back([host = config.host, port = port_, w, &evaluator] {
          try {
            run_socket_worker(host, port, w, evaluator);
          } catch (...) {
            // The master sees the disconnect.
          }
        });
      }
    }

    for (int i = 0; i < config.workers; ++i) {
      const int fd = ::accept(listen_.get(), nullptr, nullptr);
      if (fd < 0) throw std::runtime_error(std::string("accept: ") + std::strerror(errno));
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto reader = std::make_shared<FrameReader>();
      std::optional<Message> hello;
      try {
        hello = read_message(fd, *reader);
      } catch (...) {
        ::close(fd);
        throw;
      }
      if (!hello || hello->type != MessageType::hello) {
        ::close(fd);
        throw std::runtime_error("worker connection did not start with HELLO");
      }
      const int slot = hello->worker_id;
      if (slot < 0 || slot >= config.workers || fds_[slot] >= 0) {
        ::close(fd);
        throw std::runtime_error("worker id " + std::to_string(slot) + " out of range or duplicated");
      }
      fds_[slot] = fd;
      readers_.emplace_back([this, fd, slot, reader] {
        try {
          while (auto m = read_message(fd, *reader)) inbox_.push(Envelope{slot, std::move(*m)});
        } catch (...) {
        }
        inbox_.push(Envelope{slot, std::nullopt});
      });
    }
  }

  FdGuard listen_;
  std::uint16_t port_ = 0;
  std::vector<int> fds_;
  BlockingQueue<Envelope> inbox_;
  std::vector<std::thread> local_;
  std::vector<std::thread> readers_;
};

// ---- master side

struct Slot {
  bool waiting = false;
  bool shut = false;
  bool dead = false;
  std::optional<std::uint64_t> current;
  Clock::time_point free_since;
  Clock::time_point busy_since;
  Clock::time_point cycle_since;
};

struct Pending {
  Task task;
  int worker = -1;
  Clock::time_point issued;
  bool reissued = false;
  bool queued = false;  // waiting in the reissue queue
};

class Master {
 public:
  Master(Dispatcher& dispatcher, const PoolConfig& config)
      : dispatcher_(dispatcher), config_(config), slots_(config.workers), start_(Clock::now()) {
    report_.workers.resize(config.workers);
    for (int w = 0; w < config.workers; ++w) {
      report_.workers[w].worker_id = w;
      slots_[w].free_since = slots_[w].cycle_since = start_;
    }
  }

  PoolReport run_async(Link& link) {
    while (!all_stopped()) {
      check_timeouts();
      for (int w = 0; w < config_.workers; ++w) {
        if (slots_[w].waiting) serve(link, w);
      }
      if (all_stopped()) break;
      std::optional<Envelope> env = link.receive_for(wait_budget());
      if (env) handle(link, *env);
    }
    return finish();
  }

  PoolReport run_lockstep(Link& link) {
    std::vector<std::deque<Message>> buffered(config_.workers);
    auto receive_from = [&](int w) {
      while (buffered[w].empty()) {
        Envelope env = link.receive();
        if (!env.message) throw std::runtime_error("worker " + std::to_string(env.slot) + " disconnected");
        buffered[env.slot].push_back(std::move(*env.message));
      }
      Message m = std::move(buffered[w].front());
      buffered[w].pop_front();
      return m;
    };
    for (int w = 0; !all_stopped(); w = (w + 1) % config_.workers) {
      if (slots_[w].shut) continue;
      if (receive_from(w).type != MessageType::request) throw std::runtime_error("lockstep: expected REQUEST");
      auto task = dispatcher_.next_task(w);
      if (!task) {
        if (!dispatcher_.exhausted()) throw std::logic_error("lockstep: dispatcher idle but not exhausted");
        link.send(w, Message::shutdown());
        stop_slot(w);
        continue;
      }
      issue(w, *task);
      link.send(w, Message::work(task->genome, task->seed));
      Message result = receive_from(w);
      if (result.type != MessageType::result) throw std::runtime_error("lockstep: expected RESULT");
      on_result(w, std::move(*result.record));
    }
    return finish();
  }

  PoolReport run_inline(const Evaluator& evaluator) {
    for (int w = 0; !all_stopped(); w = (w + 1) % config_.workers) {
      if (slots_[w].shut) continue;
      auto task = dispatcher_.next_task(w);
      if (!task) {
        if (!dispatcher_.exhausted()) throw std::logic_error("inline: dispatcher idle but not exhausted");
        stop_slot(w);
        continue;
      }
      issue(w, *task);
      on_result(w, run_task(evaluator, *task, w));
    }
    return finish();
  }

 private:
  bool logical_time() const { return config_.schedule != Schedule::async; }

  double stamp() {
    if (logical_time()) return static_cast<double>(++tick_);
    return seconds_between(start_, Clock::now());
  }

  bool all_stopped() const {
    for (const auto& s : slots_) {
      if (!s.shut && !s.dead) return false;
    }
    return true;
  }

  double wait_budget() const {
    double budget = 0.05;
    bool any_waiting = false;
    for (const auto& s : slots_) any_waiting |= s.waiting;
    if (!any_waiting) budget = 1.0;
    if (std::isfinite(config_.eval_timeout_s)) {
      const auto now = Clock::now();
      for (const auto& [id, p] : pending_) {
        if (p.queued) continue;
        budget = std::min(budget, std::max(0.001, config_.eval_timeout_s - seconds_between(p.issued, now)));
      }
    }
    return budget;
  }

  void issue(int w, const Task& task) {
    const auto now = Clock::now();
    Slot& s = slots_[w];
    s.waiting = false;
    s.current = task.genome.id;
    s.busy_since = now;
    report_.workers[w].idle_time_s += seconds_between(s.free_since, now);
    auto it = pending_.find(task.genome.id);
    if (it == pending_.end()) {
      pending_.emplace(task.genome.id, Pending{task, w, now, false, false});
      ++report_.issued;
      started_[task.genome.id] = stamp();
    } else {
      it->second.worker = w;
      it->second.issued = now;
      it->second.queued = false;
    }
  }

  void serve(Link& link, int w) {
    while (!reissue_.empty()) {
      const std::uint64_t id = reissue_.front();
      reissue_.pop_front();
      auto it = pending_.find(id);
      if (it == pending_.end()) continue;
      const Task task = it->second.task;
      issue(w, task);
      link.send(w, Message::work(task.genome, task.seed));
      return;
    }
    if (auto task = dispatcher_.next_task(w)) {
      issue(w, *task);
      link.send(w, Message::work(task->genome, task->seed));
      return;
    }
    if (dispatcher_.exhausted() && pending_.empty()) {
      link.send(w, Message::shutdown());
      stop_slot(w);
    }
  }

  void stop_slot(int w) {
    Slot& s = slots_[w];
    const auto now = Clock::now();
    if (!s.current) report_.workers[w].idle_time_s += seconds_between(s.free_since, now);
    s.waiting = false;
    s.shut = true;
  }

  void deliver(EvalRecord record) {
    const std::uint64_t id = record.genome_id;
    record.started_s = started_.count(id) ? started_[id] : 0.0;
    record.finished_s = stamp();
    pending_.erase(id);
    done_.insert(id);
    ++report_.completed;
    dispatcher_.complete(record);
  }

  void on_result(int w, EvalRecord record) {
    const auto now = Clock::now();
    Slot& s = slots_[w];
    WorkerStats& ws = report_.workers[w];
    ws.evaluations_done++;
    ws.busy_time_s += seconds_between(s.busy_since, now);
    ws.durations_s.push_back(seconds_between(s.busy_since, now));
    ws.cycles_s.push_back(seconds_between(s.cycle_since, now));
    ws.last_result_s = seconds_between(start_, now);
    s.cycle_since = s.free_since = now;
    s.current.reset();

    record.worker_id = w;
    if (pending_.count(record.genome_id)) {
      deliver(std::move(record));
    } else if (done_.count(record.genome_id)) {
      ++report_.duplicates_dropped;
    } else {
      ++report_.unknown_dropped;
    }
  }

  void expire(std::uint64_t id, Pending& p, const std::string& why) {
    if (!p.reissued) {
      p.reissued = true;
      p.queued = true;
      reissue_.push_back(id);
      ++report_.reissued;
      return;
    }
    ++report_.timeouts;
    EvalRecord r = failed_record(id, why);
    r.worker_id = p.worker;
    deliver(std::move(r));
  }

  void check_timeouts() {
    if (!std::isfinite(config_.eval_timeout_s)) return;
    const auto now = Clock::now();
    std::vector<std::uint64_t> expired;
    for (const auto& [id, p] : pending_) {
      if (!p.queued && seconds_between(p.issued, now) > config_.eval_timeout_s) expired.push_back(id);
    }
    for (auto id : expired) expire(id, pending_.at(id), "timeout after " + std::to_string(config_.eval_timeout_s) + " s");
  }

  void handle(Link& link, Envelope& env) {
    const int w = env.slot;
    if (!env.message) {
      Slot& s = slots_[w];
      if (s.dead || s.shut) return;
      s.dead = true;
      s.waiting = false;
      if (s.current) {
        auto it = pending_.find(*s.current);
        if (it != pending_.end() && it->second.worker == w && !it->second.queued) {
          expire(it->first, it->second, "worker " + std::to_string(w) + " disconnected");
        }
      }
      bool any_alive = false;
      for (const auto& other : slots_) any_alive |= !other.dead && !other.shut;
      if (!any_alive && !(dispatcher_.exhausted() && pending_.empty())) {
        throw std::runtime_error("all workers disconnected before the run finished");
      }
      return;
    }
    Message& m = *env.message;
    switch (m.type) {
      case MessageType::request:
        slots_[w].waiting = true;
        serve(link, w);
        break;
      case MessageType::result:
        on_result(w, std::move(*m.record));
        break;
      default:
        throw std::runtime_error("master: unexpected " + to_string(m.type) + " from worker " + std::to_string(w));
    }
  }

  PoolReport finish() {
    report_.wall_s = seconds_between(start_, Clock::now());
    return report_;
  }

  Dispatcher& dispatcher_;
  const PoolConfig& config_;
  std::vector<Slot> slots_;
  Clock::time_point start_;
  std::map<std::uint64_t, Pending> pending_;
  std::map<std::uint64_t, double> started_;
  std::set<std::uint64_t> done_;
  std::deque<std::uint64_t> reissue_;
  std::uint64_t tick_ = 0;
  PoolReport report_;
};

}  // namespace

Transport parse_transport(const std::string& text) {
  if (text == "in_process") return Transport::in_process;
  if (text == "socket") return Transport::socket;
  throw std::invalid_argument("unknown transport '" + text + "' (expected in_process or socket)");
}

Schedule parse_schedule(const std::string& text) {
  if (text == "async") return Schedule::async;
  if (text == "lockstep") return Schedule::lockstep;
  if (text == "inline") return Schedule::inline_sync;
  throw std::invalid_argument("unknown schedule '" + text + "' (expected async, lockstep or inline)");
}

std::string to_string(Transport t) { return t == Transport::socket ? "socket" : "in_process"; }

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::async: return "async";
    case Schedule::lockstep: return "lockstep";
    case Schedule::inline_sync: return "inline";
  }
  return "?";
}

void PoolConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1, got " + std::to_string(workers));
  if (!(eval_timeout_s > 0)) throw std::invalid_argument("eval_timeout_s must be > 0");
}

double WorkerStats::idle_fraction() const {
  const double total = busy_time_s + idle_time_s;
  return total > 0 ? idle_time_s / total : 0.0;
}

double PoolReport::aggregate_idle_fraction() const {
  double busy = 0, idle = 0;
  for (const auto& w : workers) {
    busy += w.busy_time_s;
    idle += w.idle_time_s;
  }
  return busy + idle > 0 ? idle / (busy + idle) : 0.0;
}

EvalRecord run_task(const Evaluator& evaluator, const Task& task, int worker_id) {
  EvalRecord r;
  try {
    r = evaluator.evaluate(task.genome, task.seed);
  } catch (const std::exception& e) {
    r = failed_record(task.genome.id, e.what());
  }
  r.genome_id = task.genome.id;
  r.worker_id = worker_id;
  return r;
}

PoolReport run_pool(Dispatcher& dispatcher, const Evaluator& evaluator, const PoolConfig& config) {
  config.validate();
  Master master(dispatcher, config);
  if (config.schedule == Schedule::inline_sync) return master.run_inline(evaluator);

  std::unique_ptr<Link> link;
  if (config.transport == Transport::socket) {
    link = std::make_unique<SocketLink>(config, evaluator);
  } else {
    link = std::make_unique<InProcessLink>(config.workers, evaluator);
  }
  PoolReport report =
      config.schedule == Schedule::lockstep ? master.run_lockstep(*link) : master.run_async(*link);
  link->finish();
  return report;
}

std::size_t run_socket_worker(const std::string& host, std::uint16_t port, int worker_id, const Evaluator& evaluator) {
  FdGuard fd;
  sockaddr_in addr = make_address(host, port);
  for (int attempt = 0;; ++attempt) {
    fd.reset(::socket(AF_INET, SOCK_STREAM, 0));
    if (fd.get() < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) break;
    if (attempt >= 50) {
      throw std::runtime_error("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  const int one = 1;
  ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  SocketChannel channel(fd.get());
  channel.send(Message::hello(worker_id));
  return worker_loop(channel, worker_id, evaluator);
}

}  // namespace evonas
