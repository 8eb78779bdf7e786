#include "evonas/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "evonas/evaluator.hpp"
#include "evonas/evolution.hpp"
#include "evonas/layers.hpp"

namespace evonas {

namespace {

using Clock = std::chrono::steady_clock;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(s);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::size_t parse_count(const std::string& text, const std::string& key) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || v < 1) {
    throw std::invalid_argument("grid key '" + key + "': '" + text + "' is not a positive integer");
  }
  return static_cast<std::size_t>(v);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename T>
Tensor4<T> random_fill(Rng& rng, Shape4 shape) {
  Tensor4<T> t(shape);
  for (auto& x : t.values()) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t;
}

Categorical top_k_weights(const std::vector<SweepRow>& top, std::size_t SweepRow::*field, double smoothing) {
  std::map<int, double> counts;
  for (const auto& r : top) counts[static_cast<int>(r.*field)] += 1.0;
  Categorical c;
  double total = 0.0;
  for (const auto& [value, n] : counts) {
    c.values.push_back(value);
    c.weights.push_back(n + smoothing);
    total += n + smoothing;
  }
  for (auto& w : c.weights) w /= total;
  return c;
}

}  // namespace

std::size_t ConvGrid::size() const {
  return in_channels.size() * out_channels.size() * kernel.size() * stride.size() * batch_size.size();
}

void ConvGrid::validate() const {
  auto check = [](const std::vector<std::size_t>& v, const char* key) {
    if (v.empty()) throw std::invalid_argument(std::string("grid key '") + key + "' has no values");
    for (auto x : v) {
      if (x == 0) throw std::invalid_argument(std::string("grid key '") + key + "' must be positive");
    }
  };
  check(in_channels, "in_channels");
  check(out_channels, "out_channels");
  check(kernel, "kernel");
  check(stride, "stride");
  check(batch_size, "batch_size");
  if (height == 0 || width == 0) throw std::invalid_argument("grid height and width must be positive");
}

ConvGrid parse_grid(std::istream& in) {
  ConvGrid g;
  const std::map<std::string, std::vector<std::size_t>*> lists{{"in_channels", &g.in_channels},
                                                               {"out_channels", &g.out_channels},
                                                               {"kernel", &g.kernel},
                                                               {"stride", &g.stride},
                                                               {"batch_size", &g.batch_size}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("grid line " + std::to_string(line_no) + ": expected key = values");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "height" || key == "width") {
      (key == "height" ? g.height : g.width) = parse_count(value, key);
    } else if (auto it = lists.find(key); it != lists.end()) {
      it->second->clear();
      for (const auto& item : split(value, ',')) it->second->push_back(parse_count(item, key));
    } else {
      throw std::invalid_argument("unknown grid key '" + key + "'");
    }
  }
  g.validate();
  return g;
}

ConvGrid load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read grid file " + path);
  return parse_grid(in);
}

SweepResult sweep_conv(const ConvGrid& grid, std::size_t reps, std::uint64_t seed) {
  grid.validate();
  if (reps < 3) throw std::invalid_argument("sweep needs reps >= 3");
  SweepResult result;
  Rng rng(seed);
  for (auto cin : grid.in_channels) {
    for (auto cout : grid.out_channels) {
      for (auto k : grid.kernel) {
        for (auto s : grid.stride) {
          const Architecture arch{Dims{cin, grid.height, grid.width}, {ConvSpec{cin, cout, k, s}}};
          if (k > grid.height || k > grid.width) {
            for (auto b : grid.batch_size) {
              result.skipped.push_back("in=" + std::to_string(cin) + " out=" + std::to_string(cout) +
                                       " k=" + std::to_string(k) + " s=" + std::to_string(s) +
                                       " batch=" + std::to_string(b) + ": kernel exceeds " +
                                       std::to_string(grid.height) + "x" + std::to_string(grid.width) + " input");
            }
            continue;
          }
          const std::uint64_t flops = layer_flops(arch).at(0);
          Conv2d<float> layer = Conv2d<float>::zeros(cin, cout, k, s);
          for (auto& w : layer.weights.values()) w = static_cast<float>(rng.uniform(-0.1, 0.1));
          const std::size_t ho = (grid.height - k) / s + 1, wo = (grid.width - k) / s + 1;
          for (auto b : grid.batch_size) {
            const auto x = random_fill<float>(rng, {b, cin, grid.height, grid.width});
            const auto g = random_fill<float>(rng, {b, cout, ho, wo});
            std::vector<double> times;
            times.reserve(reps);
            for (std::size_t r = 0; r < reps; ++r) {
              const auto t0 = Clock::now();
              const auto y = conv2d_forward(x, layer);
              const auto grads = conv2d_backward(x, layer, g);
              times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
              if (y.empty() || grads.weights.empty()) throw std::logic_error("sweep: empty conv output");
            }
            SweepRow row{cin, cout, k, s, b, grid.height, grid.width};
            row.median_s = std::max(median(times), 1e-9);
            row.flops_per_layer = flops;
            row.flops_per_s = static_cast<double>(flops) * static_cast<double>(b) / row.median_s;
            result.rows.push_back(row);
          }
        }
      }
    }
  }
  return result;
}

const char* const kSweepCsvHeader =
    "in_channels,out_channels,kernel,stride,batch_size,height,width,median_s,flops_per_layer,flops_per_s";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepCsvHeader << '\n';
  out.precision(9);
  for (const auto& r : rows) {
    out << r.in_channels << ',' << r.out_channels << ',' << r.kernel << ',' << r.stride << ',' << r.batch_size << ','
        << r.height << ',' << r.width << ',' << r.median_s << ',' << r.flops_per_layer << ',' << r.flops_per_s
        << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kSweepCsvHeader) {
    throw std::invalid_argument("sweep CSV: header must be '" + std::string(kSweepCsvHeader) + "'");
  }
  std::vector<SweepRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 10) throw std::invalid_argument("sweep CSV line " + std::to_string(line_no) + ": expected 10 fields");
    try {
      SweepRow r;
      r.in_channels = std::stoull(f[0]);
      r.out_channels = std::stoull(f[1]);
      r.kernel = std::stoull(f[2]);
      r.stride = std::stoull(f[3]);
      r.batch_size = std::stoull(f[4]);
      r.height = std::stoull(f[5]);
      r.width = std::stoull(f[6]);
      r.median_s = std::stod(f[7]);
      r.flops_per_layer = std::stoull(f[8]);
      r.flops_per_s = std::stod(f[9]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("sweep CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

std::vector<SweepRow> top_k_by_throughput(const std::vector<SweepRow>& rows, std::size_t k) {
  if (k > rows.size()) throw std::invalid_argument("top-k: k exceeds the number of rows");
  std::vector<SweepRow> sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.flops_per_s > b.flops_per_s; });
  sorted.resize(k);
  return sorted;
}

ThroughputPrior build_prior(const std::vector<SweepRow>& rows, std::size_t k, double beta, double smoothing) {
  if (k == 0) throw std::invalid_argument("build_prior: k must be >= 1");
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("build_prior: beta must be in [0, 1]");
  if (smoothing < 0.0) throw std::invalid_argument("build_prior: smoothing must be >= 0");
  const auto top = top_k_by_throughput(rows, k);
  ThroughputPrior prior;
  prior.out_channels = top_k_weights(top, &SweepRow::out_channels, smoothing);
  prior.kernel = top_k_weights(top, &SweepRow::kernel, smoothing);
  prior.stride = top_k_weights(top, &SweepRow::stride, smoothing);
  prior.beta = beta;
  return prior;
}

TimingAnalysis timing_distribution(std::vector<double> samples, std::size_t bins) {
  if (samples.size() < 30) throw std::invalid_argument("timing distribution needs at least 30 samples");
  if (bins == 0) throw std::invalid_argument("timing distribution needs at least one bin");
  for (double x : samples) {
    if (!std::isfinite(x)) throw std::invalid_argument("timing distribution: non-finite sample");
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();

  TimingAnalysis out;
  out.histogram.lo = samples.front();
  out.histogram.bin_width = (samples.back() - samples.front()) / static_cast<double>(bins);
  out.histogram.counts.assign(bins, 0);
  for (double x : samples) {
    std::size_t b = out.histogram.bin_width > 0.0
                        ? static_cast<std::size_t>((x - out.histogram.lo) / out.histogram.bin_width)
                        : 0;
    ++out.histogram.counts[std::min(b, bins - 1)];
  }

  // Exact 2-means on sorted data: the optimum is a contiguous split.
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + samples[i];
    s2[i + 1] = s2[i] + samples[i] * samples[i];
  }
  auto sse = [&](std::size_t a, std::size_t b) {
    const double m = static_cast<double>(b - a);
    const double sum = s1[b] - s1[a];
    return std::max(0.0, (s2[b] - s2[a]) - sum * sum / m);
  };
  std::size_t best_split = 1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < n; ++i) {
    const double cost = sse(0, i) + sse(i, n);
    if (cost < best_cost) {
      best_cost = cost;
      best_split = i;
    }
  }
  const double n1 = static_cast<double>(best_split), n2 = static_cast<double>(n - best_split);
  const double c1 = s1[best_split] / n1, c2 = (s1[n] - s1[best_split]) / n2;
  const double sd1 = std::sqrt(sse(0, best_split) / n1), sd2 = std::sqrt(sse(best_split, n) / n2);
  out.cluster_centers[0] = c1;
  out.cluster_centers[1] = c2;
  out.low_cluster_size = best_split;
  const double spread = sd1 + sd2;
  out.separation_stat = spread > 0.0 ? (c2 - c1) / spread : (c2 > c1 ? std::numeric_limits<double>::infinity() : 0.0);
  if (out.separation_stat > 2.0) {
    out.modes = 2;
    out.mode_centers = {c1, c2};
  } else {
    out.modes = 1;
    out.mode_centers = {s1[n] / static_cast<double>(n)};
  }
  return out;
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_lo,bin_hi,count\n";
  out.precision(9);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double lo = h.lo + h.bin_width * static_cast<double>(i);
    out << lo << ',' << lo + h.bin_width << ',' << h.counts[i] << '\n';
  }
}

void ScalingConfig::validate() const {
  if (worker_counts.empty()) throw std::invalid_argument("weak scaling needs at least one worker count");
  for (std::size_t i = 0; i < worker_counts.size(); ++i) {
    if (worker_counts[i] == 0) throw std::invalid_argument("worker counts must be >= 1");
    if (i > 0 && worker_counts[i] <= worker_counts[i - 1]) {
      throw std::invalid_argument("worker counts must be strictly ascending");
    }
  }
  if (networks_per_worker == 0) throw std::invalid_argument("networks_per_worker must be >= 1");
}

namespace {

// Hands every worker exactly `quota` tasks.
class QuotaDispatcher : public Dispatcher {
 public:
  QuotaDispatcher(const Genome& genome, std::size_t workers, std::size_t quota, std::uint64_t seed)
      : genome_(genome), given_(workers, 0), quota_(quota), seed_(seed) {}

  std::optional<Task> next_task(int worker_id) override {
    auto& given = given_.at(static_cast<std::size_t>(worker_id));
    if (given >= quota_) return std::nullopt;
    ++given;
    ++issued_;
    Genome g = genome_;
    g.id = issued_;
    g.parent_ids.clear();
    return Task{g, task_seed(seed_, g.id)};
  }
  void complete(const EvalRecord& record) override {
    if (!record.ok()) ++failures_;
  }
  bool exhausted() const override { return issued_ >= quota_ * given_.size(); }
  std::size_t failures() const { return failures_; }

 private:
  Genome genome_;
  std::vector<std::size_t> given_;
  std::size_t quota_;
  std::uint64_t seed_;
  std::size_t issued_ = 0;
  std::size_t failures_ = 0;
};

}  // namespace

std::vector<ScalingPoint> weak_scaling(const ScalingConfig& config, const Evaluator& evaluator, const Genome& genome) {
  config.validate();
  std::vector<ScalingPoint> points;
  for (std::size_t workers : config.worker_counts) {
    QuotaDispatcher dispatcher(genome, workers, config.networks_per_worker, config.seed);
    PoolConfig pool;
    pool.workers = workers;
    pool.transport = config.transport;
    pool.schedule = Schedule::async;
    const PoolReport report = run_pool(dispatcher, evaluator, pool);

    ScalingPoint p;
    p.workers = workers;
    p.evaluations = report.completed;
    p.best_eval_s = std::numeric_limits<double>::infinity();
    for (const auto& w : report.workers) {
      p.makespan_s = std::max(p.makespan_s, w.last_result_s);
      for (double c : w.cycles_s) {
        p.best_eval_s = std::min(p.best_eval_s, c);
        p.worst_eval_s = std::max(p.worst_eval_s, c);
      }
    }
    const double w = static_cast<double>(workers);
    p.throughput = p.makespan_s > 0.0 ? static_cast<double>(p.evaluations) / p.makespan_s : 0.0;
    p.upper_bound = p.best_eval_s > 0.0 ? w / p.best_eval_s : 0.0;
    p.lower_bound = p.worst_eval_s > 0.0 ? w / p.worst_eval_s : 0.0;
    p.idle_fraction = report.aggregate_idle_fraction();
    points.push_back(p);
  }
  const double base = points.front().throughput / static_cast<double>(points.front().workers);
  for (auto& p : points) p.efficiency = base > 0.0 ? p.throughput / (static_cast<double>(p.workers) * base) : 0.0;
  return points;
}

const char* const kScalingCsvHeader =
    "workers,evaluations,makespan_s,throughput,efficiency,upper_bound,lower_bound,best_eval_s,worst_eval_s,"
    "idle_fraction";

void write_scaling_csv(std::ostream& out, const std::vector<ScalingPoint>& points) {
  out << kScalingCsvHeader << '\n';
  out.precision(9);
  for (const auto& p : points) {
    out << p.workers << ',' << p.evaluations << ',' << p.makespan_s << ',' << p.throughput << ',' << p.efficiency
        << ',' << p.upper_bound << ',' << p.lower_bound << ',' << p.best_eval_s << ',' << p.worst_eval_s << ','
        << p.idle_fraction << '\n';
  }
}

std::vector<TimingSample> collect_epoch_times(const Genome& genome, const PatchSet& data,
                                              std::span<const std::size_t> train, std::size_t variants, int epochs,
                                              std::size_t workers, const SearchSpace& space, std::uint64_t seed) {
  if (variants == 0 || epochs < 1 || workers == 0) {
    throw std::invalid_argument("epoch timing needs variants, epochs and workers >= 1");
  }
  Rng rng(seed);
  std::vector<LearnParams> learn(variants, genome.learn);
  for (auto& l : learn) {
    l.lr = std::exp(rng.uniform(std::log(space.lr_min), std::log(space.lr_max)));
    l.momentum = rng.uniform(0.0, space.momentum_max);
  }
  std::vector<TimingSample> samples;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t v = w; v < variants; v += workers) {
        Network<float> net = instantiate<float>(genome, data.dims, task_seed(seed, v + 1));
        std::vector<TimingSample> local;
        for (int e = 0; e < epochs; ++e) {
          TrainBudget one{1, std::nullopt};
          auto result = train_network(std::move(net), learn[v], data, train, one,
                                      task_seed(seed, (v + 1) * 1000 + static_cast<std::uint64_t>(e)));
          net = std::move(result.network);
          local.push_back({static_cast<int>(w), genome.id, static_cast<std::size_t>(e), result.train_time_s});
        }
        std::lock_guard lock(mu);
        samples.insert(samples.end(), local.begin(), local.end());
      }
    });
  }
  for (auto& t : threads) t.join();
  std::sort(samples.begin(), samples.end(), [](const TimingSample& a, const TimingSample& b) {
    return std::tie(a.worker_id, a.epoch_time_s) < std::tie(b.worker_id, b.epoch_time_s);
  });
  return samples;
}

void write_timing_csv(std::ostream& out, const std::vector<TimingSample>& samples) {
  out << "worker_id,genome_id,epoch,epoch_time_s\n";
  out.precision(9);
  for (const auto& s : samples) out << s.worker_id << ',' << s.genome_id << ',' << s.epoch << ',' << s.epoch_time_s << '\n';
}

std::vector<TimingSample> read_timing_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "worker_id,genome_id,epoch,epoch_time_s") {
    throw std::invalid_argument("timing CSV: header must be 'worker_id,genome_id,epoch,epoch_time_s'");
  }
  std::vector<TimingSample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw std::invalid_argument("timing CSV line " + std::to_string(line_no) + ": expected 4 fields");
    try {
      out.push_back({std::stoi(f[0]), std::stoull(f[1]), std::stoull(f[2]), std::stod(f[3])});
    } catch (const std::logic_error&) {
      throw std::invalid_argument("timing CSV line " + std::to_string(line_no) + ": bad number");
    }
    if (!(out.back().epoch_time_s > 0.0)) {
      throw std::invalid_argument("timing CSV line " + std::to_string(line_no) + ": epoch_time_s must be > 0");
    }
  }
  return out;
}

void write_parallel_coordinates_csv(std::ostream& out, const std::vector<SweepRow>& rows, std::size_t top_k) {
  const auto top = top_k_by_throughput(rows, std::min(top_k, rows.size()));
  const double cutoff = top.empty() ? std::numeric_limits<double>::infinity() : top.back().flops_per_s;
  std::size_t marked = 0;
  out << "in_channels,out_channels,kernel,stride,batch_size,flops_per_s,top_k\n";
  out.precision(9);
  // Rows tied at the cutoff are marked in input order until k are flagged.
  std::vector<bool> flag(rows.size(), false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].flops_per_s > cutoff) flag[i] = true, ++marked;
  }
  for (std::size_t i = 0; i < rows.size() && marked < top.size(); ++i) {
    if (!flag[i] && rows[i].flops_per_s == cutoff) flag[i] = true, ++marked;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << r.in_channels << ',' << r.out_channels << ',' << r.kernel << ',' << r.stride << ',' << r.batch_size << ','
        << r.flops_per_s << ',' << (flag[i] ? 1 : 0) << '\n';
  }
}

}  // namespace evonas
