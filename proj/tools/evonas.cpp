#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evonas/config.hpp"
#include "evonas/eval_backend.hpp"
#include "evonas/evolution.hpp"
#include "evonas/gradcheck.hpp"
#include "evonas/model_io.hpp"
#include "evonas/patchset.hpp"
#include "evonas/sweep.hpp"

namespace fs = std::filesystem;
using namespace evonas;
using nlohmann::json;

namespace {

// Failure that should exit with a one-line error; `key` names the flag or config key.
struct CommandError : std::runtime_error {
  CommandError(const std::string& what, std::string k = "") : std::runtime_error(what), key(std::move(k)) {}
  std::string key;
};

void fail_line(const std::string& command, const std::string& message, const std::string& key) {
  json j{{"error", message}};
  if (!command.empty()) j["command"] = command;
  if (!key.empty()) j["key"] = key;
  std::cerr << j.dump() << std::endl;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CommandError("cannot create output directory " + dir + ": " + ec.message(), "out");
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw CommandError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::string& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) throw CommandError("cannot read " + path, key);
  return in;
}

std::shared_ptr<const PatchSet> load_data(const std::string& path, const std::string& key) {
  if (!fs::exists(path)) throw CommandError("data file " + path + " does not exist", key);
  return std::make_shared<const PatchSet>(load_patchset(path));
}

// Shared by evolve and worker: config file, --set overrides, then flag overrides.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flag_values;

  RunConfig build() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw CommandError("--set expects key=value, got '" + s + "'", "set");
      auto trim = [](std::string x) {
        x.erase(0, x.find_first_not_of(" \t"));
        x.erase(x.find_last_not_of(" \t") + 1);
        return x;
      };
      set_config_value(c, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    for (const auto& [k, v] : flag_values) set_config_value(c, k, v);
    validate_run_config(c);
    return c;
  }
};

struct Prepared {
  RunConfig config;
  std::shared_ptr<const PatchSet> data;
  Splits splits;
};

Prepared prepare(const ConfigFlags& flags) {
  Prepared p{flags.build(), nullptr, {}};
  p.data = load_data(p.config.data_path, "data.path");
  p.splits = stratified_split(p.data, p.config.split, p.config.split_seed);
  p.config.evolution.ga.input = p.data->dims;
  if (p.config.prior_sweep_csv) {
    auto in = open_in(*p.config.prior_sweep_csv, "prior.sweep_csv");
    const auto rows = read_sweep_csv(in);
    if (rows.empty()) throw CommandError("sweep CSV has no rows", "prior.sweep_csv");
    p.config.evolution.ga.prior = build_prior(rows, std::min(p.config.prior_top_k, rows.size()), p.config.prior_beta);
  }
  return p;
}

void collect(ConfigFlags& flags, const std::string& key, const std::optional<std::string>& v) {
  if (v) flags.flag_values.emplace_back(key, *v);
}

int cmd_evolve(const ConfigFlags& flags) {
  Prepared p = prepare(flags);
  const fs::path out = ensure_dir(p.config.out_dir);
  auto& pool = p.config.evolution.pool;
  if (pool.transport == Transport::socket && !pool.spawn_local_workers) {
    pool.on_listen = [](std::uint16_t port) {
      std::cerr << json{{"listening", port}}.dump() << std::endl;
    };
  }
  const DatasetEvaluator evaluator(p.splits, p.config.eval);
  auto log = open_out(out / "evolution.log");
  const RunOutcome outcome = run_evolution(p.config.evolution, evaluator, log, p.config.echo());
  log.close();
  if (!outcome.best.record.ok()) throw CommandError("every evaluation failed; best record: " + *outcome.best.record.failure);

  const FinalModel fm = finalize_best(outcome.best.genome, p.splits, p.config.final_budget, p.config.evolution.ga.seed,
                                      out.string(), p.config.eval.predict_batch_size);
  const PatchSet test = subset(*p.data, p.splits.test, p.data->name + ":test");
  save_patchset(test, out / "test.pset");

  MetricsReport metrics = fm.test_metrics;
  metrics.model_id = "genome-" + std::to_string(outcome.best.genome.id);
  metrics.dataset_id = test.name;
  json report{{"best_genome", to_text(outcome.best.genome)},
              {"best_record", to_json(outcome.best.record)},
              {"evaluations", outcome.evaluations},
              {"test_metrics", metrics.to_json()},
              {"wall_s", outcome.pool.wall_s},
              {"idle_fraction", outcome.pool.aggregate_idle_fraction()},
              {"test_flops_inference", count_flops_inference(fm.network)}};
  if (outcome.bounds) report["bounds"] = {{"lo", outcome.bounds->lo}, {"hi", outcome.bounds->hi}};
  open_out(out / "report.json") << report.dump(2) << '\n';
  open_out(out / "metrics.txt") << metrics.to_text() << '\n';
  std::cout << metrics.to_text() << '\n';
  std::cout << json{{"evaluations", outcome.evaluations},
                    {"best_genome_id", outcome.best.genome.id},
                    {"best_fitness", outcome.best.record.fitness},
                    {"out", out.string()}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_worker(const ConfigFlags& flags, const std::string& host, int port, int worker_id) {
  if (port <= 0 || port > 65535) throw CommandError("--port must be in 1..65535", "port");
  const Prepared p = prepare(flags);
  const DatasetEvaluator evaluator(p.splits, p.config.eval);
  const std::size_t n = run_socket_worker(host, static_cast<std::uint16_t>(port), worker_id, evaluator);
  std::cout << json{{"worker_id", worker_id}, {"evaluations", n}}.dump() << std::endl;
  return 0;
}

int cmd_sweep(const std::string& grid_file, std::size_t reps, std::uint64_t seed, const std::string& out_dir) {
  const ConvGrid grid = grid_file.empty() ? ConvGrid{} : load_grid_file(grid_file);
  const fs::path out = ensure_dir(out_dir);
  const SweepResult res = sweep_conv(grid, reps, seed);
  auto csv = open_out(out / "sweep.csv");
  write_sweep_csv(csv, res.rows);
  auto skipped = open_out(out / "sweep_skipped.txt");
  for (const auto& s : res.skipped) {
    skipped << s << '\n';
    std::cerr << "skipped " << s << '\n';
  }
  std::cout << json{{"rows", res.rows.size()}, {"skipped", res.skipped.size()}, {"csv", (out / "sweep.csv").string()}}
                   .dump()
            << std::endl;
  return 0;
}

Genome benchmark_genome(const std::string& text) {
  if (!text.empty()) return genome_from_text(text);
  return genome_from_text(
      "id=1 parents= lr=0.01 momentum=0.9 batch=32 features=4 f0=conv(out=16,k=3,s=1,relu=1) f1=pool(size=2,s=2) "
      "f2=conv(out=32,k=3,s=1,relu=1) f3=pool(size=2,s=2) head=1 h0=dense(units=64)");
}

int cmd_bench_scaling(const std::vector<std::size_t>& counts, std::size_t per_worker, double stub_seconds,
                      const std::string& data_path, const std::string& genome_text, int epochs,
                      const std::string& transport, std::uint64_t seed, const std::string& out_dir) {
  ScalingConfig cfg;
  cfg.worker_counts = counts;
  cfg.networks_per_worker = per_worker;
  cfg.transport = parse_transport(transport);
  cfg.seed = seed;
  const Genome genome = benchmark_genome(genome_text);
  std::vector<ScalingPoint> points;
  if (data_path.empty()) {
    if (!(stub_seconds > 0.0)) throw CommandError("--stub-seconds must be > 0", "stub-seconds");
    points = weak_scaling(cfg, sleep_stub(stub_seconds, Dims{3, 100, 100}), genome);
  } else {
    auto data = load_data(data_path, "data");
    EvalConfig ec;
    ec.budget.epochs = epochs;
    ec.objective.kind = ObjectiveKind::flop_proxy;
    const DatasetEvaluator evaluator(stratified_split(data, {0.8, 0.2, 0.0}, seed), ec);
    points = weak_scaling(cfg, evaluator, genome);
  }
  const fs::path out = ensure_dir(out_dir);
  auto csv = open_out(out / "scaling.csv");
  write_scaling_csv(csv, points);
  write_scaling_csv(std::cout, points);
  return 0;
}

int cmd_bench_timing(const std::string& data_path, const std::string& samples_path, const std::string& genome_text,
                     std::size_t variants, int epochs, std::size_t workers, std::size_t bins, std::uint64_t seed,
                     const std::string& out_dir) {
  std::vector<TimingSample> samples;
  if (!samples_path.empty()) {
    auto in = open_in(samples_path, "samples");
    samples = read_timing_csv(in);
  } else if (!data_path.empty()) {
    auto data = load_data(data_path, "data");
    const auto splits = stratified_split(data, {1.0, 0.0, 0.0}, seed);
    samples = collect_epoch_times(benchmark_genome(genome_text), *data, splits.train, variants, epochs, workers,
                                  SearchSpace{}, seed);
  } else {
    throw CommandError("bench-timing needs --data or --samples", "data");
  }
  std::vector<double> times;
  for (const auto& s : samples) times.push_back(s.epoch_time_s);
  const TimingAnalysis a = timing_distribution(times, bins);
  const fs::path out = ensure_dir(out_dir);
  if (samples_path.empty()) {
    auto csv = open_out(out / "timing.csv");
    write_timing_csv(csv, samples);
  }
  auto hist = open_out(out / "timing_histogram.csv");
  write_histogram_csv(hist, a.histogram);
  const json summary{{"samples", times.size()},
                     {"modes", a.modes},
                     {"mode_centers", a.mode_centers},
                     {"separation_stat", a.separation_stat},
                     {"cluster_centers", {a.cluster_centers[0], a.cluster_centers[1]}}};
  open_out(out / "timing_analysis.json") << summary.dump(2) << '\n';
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_gen_data(std::optional<std::size_t> pos, std::optional<std::size_t> neg, std::optional<std::size_t> total,
                 std::size_t h, std::size_t w, std::uint64_t seed, const std::string& out) {
  if (total && (pos || neg)) throw CommandError("use --total or --pos/--neg, not both", "total");
  std::size_t n_pos = 0, n_neg = 0;
  if (total) {
    const auto counts = imbalanced_counts(*total);
    n_pos = counts.positives;
    n_neg = counts.negatives;
  } else {
    if (!pos || !neg) throw CommandError("gen-data needs --pos and --neg (or --total)", pos ? "neg" : "pos");
    n_pos = *pos;
    n_neg = *neg;
  }
  const PatchSet set = generate_synthetic(n_pos, n_neg, h, w, seed);
  const fs::path path(out);
  if (path.has_parent_path()) ensure_dir(path.parent_path().string());
  save_patchset(set, path);
  std::cout << json{{"out", out}, {"positives", n_pos}, {"negatives", n_neg}, {"height", h}, {"width", w}}.dump()
            << std::endl;
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, std::size_t batch, bool as_json,
                const std::string& out_dir) {
  if (!fs::exists(model_path)) throw CommandError("model file " + model_path + " does not exist", "model");
  const Network<float> net = load_model(model_path);
  const auto data = load_data(data_path, "data");
  if (!(net.input_shape() == data->dims)) {
    throw CommandError("model expects " + std::to_string(net.input_shape().c) + "x" +
                           std::to_string(net.input_shape().h) + "x" + std::to_string(net.input_shape().w) +
                           " patches but the data has " + std::to_string(data->dims.c) + "x" +
                           std::to_string(data->dims.h) + "x" + std::to_string(data->dims.w),
                       "data");
  }
  std::vector<std::size_t> all(data->size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  MetricsReport m = evaluate_model(net, *data, all, batch);
  m.model_id = fs::path(model_path).filename().string();
  m.dataset_id = data->name.empty() ? fs::path(data_path).filename().string() : data->name;
  if (!out_dir.empty()) {
    const fs::path out = ensure_dir(out_dir);
    open_out(out / "metrics.json") << m.to_json().dump(2) << '\n';
    open_out(out / "metrics.txt") << m.to_text() << '\n';
  }
  std::cout << (as_json ? m.to_json().dump() : m.to_text()) << std::endl;
  return 0;
}

int cmd_gradcheck(std::size_t networks, std::uint64_t seed, double epsilon, double threshold) {
  const GradCheckSummary s = gradcheck_random_genomes(networks, seed, epsilon);
  std::cout << json{{"networks", s.cases.size()},
                    {"max_rel_error", s.max_rel_error},
                    {"threshold", threshold},
                    {"seconds", s.seconds}}
                   .dump()
            << std::endl;
  if (!(s.max_rel_error < threshold)) {
    std::ostringstream msg;
    msg << "gradcheck: max relative error " << s.max_rel_error << " exceeds threshold " << threshold;
    throw CommandError(msg.str(), "threshold");
  }
  return 0;
}

int cmd_plot_data(const std::string& sweep_path, std::size_t top_k, const std::string& timing_path, std::size_t bins,
                  const std::string& out_dir) {
  if (sweep_path.empty() && timing_path.empty()) throw CommandError("plot-data needs --sweep and/or --timing", "sweep");
  const fs::path out = ensure_dir(out_dir);
  json written = json::array();
  if (!sweep_path.empty()) {
    auto in = open_in(sweep_path, "sweep");
    const auto rows = read_sweep_csv(in);
    auto csv = open_out(out / "parallel_coordinates.csv");
    write_parallel_coordinates_csv(csv, rows, top_k);
    written.push_back((out / "parallel_coordinates.csv").string());
  }
  if (!timing_path.empty()) {
    auto in = open_in(timing_path, "timing");
    std::vector<double> times;
    for (const auto& s : read_timing_csv(in)) times.push_back(s.epoch_time_s);
    auto csv = open_out(out / "histogram.csv");
    write_histogram_csv(csv, timing_distribution(times, bins).histogram);
    written.push_back((out / "histogram.csv").string());
  }
  std::cout << json{{"written", written}}.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary search for small patch classifiers"};
  app.require_subcommand(1);
  std::string command;

  ConfigFlags evolve_flags;
  std::optional<std::string> ev_data, ev_workers, ev_transport, ev_schedule, ev_port, ev_timeout, ev_max, ev_seed,
      ev_out;
  auto* evolve = app.add_subcommand("evolve", "Run the evolutionary search and finalize the best network");
  evolve->add_option("--config", evolve_flags.config_path, "key = value run configuration")->check(CLI::ExistingFile);
  evolve->add_option("--set", evolve_flags.sets, "Override one config entry (key=value); repeatable");
  evolve->add_option("--data", ev_data, "PSET data file (data.path)");
  evolve->add_option("--workers", ev_workers, "Worker count (pool.workers)");
  evolve->add_option("--transport", ev_transport, "in_process or socket (pool.transport)");
  evolve->add_option("--schedule", ev_schedule, "async, lockstep or inline_sync (pool.schedule)");
  evolve->add_option("--port", ev_port, "Socket port, 0 for ephemeral (pool.port)");
  evolve->add_option("--eval-timeout", ev_timeout, "Seconds before an evaluation is reissued (pool.eval_timeout_s)");
  evolve->add_option("--max-evals", ev_max, "Stop after this many evaluations (stop.max_evaluations)");
  evolve->add_option("--seed", ev_seed, "Run seed (seed)");
  evolve->add_option("--out", ev_out, "Output directory (out.dir)");

  ConfigFlags worker_flags;
  std::optional<std::string> wk_data;
  std::string wk_host = "127.0.0.1";
  int wk_port = 0, wk_id = 0;
  auto* worker = app.add_subcommand("worker", "Connect to a socket master and evaluate genomes");
  worker->add_option("--config", worker_flags.config_path, "Same run configuration as the master")
      ->check(CLI::ExistingFile);
  worker->add_option("--set", worker_flags.sets, "Override one config entry (key=value); repeatable");
  worker->add_option("--data", wk_data, "PSET data file (data.path)");
  worker->add_option("--host", wk_host, "Master host");
  worker->add_option("--port", wk_port, "Master port")->required();
  worker->add_option("--worker-id", wk_id, "Worker id reported in HELLO")->check(CLI::NonNegativeNumber);

  std::string sw_grid, sw_out = "out";
  std::size_t sw_reps = 3;
  std::uint64_t sw_seed = 1;
  auto* sweep = app.add_subcommand("sweep", "Time conv layer forward+backward over a hyperparameter grid");
  sweep->add_option("--grid-file", sw_grid, "key = comma,list grid file")->check(CLI::ExistingFile);
  sweep->add_option("--reps", sw_reps, "Timed repetitions per config (>= 3)");
  sweep->add_option("--seed", sw_seed, "Random data seed");
  sweep->add_option("--out", sw_out, "Output directory");

  std::vector<std::size_t> bs_counts{1, 2, 4};
  std::size_t bs_per = 8;
  double bs_stub = 0.2;
  std::string bs_data, bs_genome, bs_transport = "in_process", bs_out = "out";
  int bs_epochs = 1;
  std::uint64_t bs_seed = 1;
  auto* scaling = app.add_subcommand("bench-scaling", "Weak-scaling benchmark with best/worst-case bounds");
  scaling->add_option("--worker-counts", bs_counts, "Ascending worker counts")->delimiter(',');
  scaling->add_option("--per-worker", bs_per, "Evaluations per worker");
  scaling->add_option("--stub-seconds", bs_stub, "Sleep per evaluation for the stub evaluator");
  scaling->add_option("--data", bs_data, "Use the real evaluator on this PSET file");
  scaling->add_option("--genome", bs_genome, "Benchmark genome text");
  scaling->add_option("--epochs", bs_epochs, "Training epochs per real evaluation");
  scaling->add_option("--transport", bs_transport, "in_process or socket");
  scaling->add_option("--seed", bs_seed, "Seed");
  scaling->add_option("--out", bs_out, "Output directory");

  std::string bt_data, bt_samples, bt_genome, bt_out = "out";
  std::size_t bt_variants = 40, bt_workers = 1, bt_bins = 20;
  int bt_epochs = 3;
  std::uint64_t bt_seed = 1;
  auto* timing = app.add_subcommand("bench-timing", "Per-epoch training time distribution of a fixed genome");
  timing->add_option("--data", bt_data, "PSET data file to train on");
  timing->add_option("--samples", bt_samples, "Analyze an existing timing CSV instead");
  timing->add_option("--genome", bt_genome, "Fixed genome text");
  timing->add_option("--variants", bt_variants, "Learning-parameter variants");
  timing->add_option("--epochs", bt_epochs, "Epochs per variant");
  timing->add_option("--workers", bt_workers, "Threads");
  timing->add_option("--bins", bt_bins, "Histogram bins");
  timing->add_option("--seed", bt_seed, "Seed");
  timing->add_option("--out", bt_out, "Output directory");

  std::optional<std::size_t> gd_pos, gd_neg, gd_total;
  std::size_t gd_h = 100, gd_w = 100;
  std::uint64_t gd_seed = 1;
  std::string gd_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic PSET patch set");
  gen->set_help_flag("--help", "Print this help message and exit");
  gen->add_option("--pos", gd_pos, "Positive patches");
  gen->add_option("--neg", gd_neg, "Negative patches");
  gen->add_option("--total", gd_total, "Total patches at the default class imbalance");
  gen->add_option("--h", gd_h, "Patch height");
  gen->add_option("--w", gd_w, "Patch width");
  gen->add_option("--seed", gd_seed, "Seed");
  gen->add_option("--out", gd_out, "Output PSET file")->required();

  std::string pr_model, pr_data, pr_out;
  std::size_t pr_batch = 128;
  bool pr_json = false;
  auto* predict = app.add_subcommand("predict", "Score a saved model on a PSET file");
  predict->add_option("--model", pr_model, "MNDL model file")->required();
  predict->add_option("--data", pr_data, "PSET data file")->required();
  predict->add_option("--batch", pr_batch, "Batch size")->check(CLI::PositiveNumber);
  predict->add_flag("--json", pr_json, "Print the report as JSON");
  predict->add_option("--out", pr_out, "Also write metrics.json and metrics.txt here");

  std::size_t gc_networks = 50;
  std::uint64_t gc_seed = 1;
  double gc_epsilon = 1e-5, gc_threshold = 1e-6;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of random networks");
  gradcheck->add_option("--networks", gc_networks, "Random networks to check");
  gradcheck->add_option("--seed", gc_seed, "Seed");
  gradcheck->add_option("--epsilon", gc_epsilon, "Central-difference step");
  gradcheck->add_option("--threshold", gc_threshold, "Largest accepted relative error");

  std::string pd_sweep, pd_timing, pd_out = "out";
  std::size_t pd_top = 10, pd_bins = 20;
  auto* plot = app.add_subcommand("plot-data", "Parallel-coordinates and histogram CSVs for plotting");
  plot->add_option("--sweep", pd_sweep, "Sweep CSV")->check(CLI::ExistingFile);
  plot->add_option("--top-k", pd_top, "Rows flagged as top configurations");
  plot->add_option("--timing", pd_timing, "Timing CSV")->check(CLI::ExistingFile);
  plot->add_option("--bins", pd_bins, "Histogram bins");
  plot->add_option("--out", pd_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), e.what(), "");
    return 2;
  }

  command = app.get_subcommands().front()->get_name();
  try {
    if (*evolve) {
      collect(evolve_flags, "data.path", ev_data);
      collect(evolve_flags, "pool.workers", ev_workers);
      collect(evolve_flags, "pool.transport", ev_transport);
      collect(evolve_flags, "pool.schedule", ev_schedule);
      collect(evolve_flags, "pool.port", ev_port);
      collect(evolve_flags, "pool.eval_timeout_s", ev_timeout);
      collect(evolve_flags, "stop.max_evaluations", ev_max);
      collect(evolve_flags, "seed", ev_seed);
      collect(evolve_flags, "out.dir", ev_out);
      return cmd_evolve(evolve_flags);
    }
    if (*worker) {
      collect(worker_flags, "data.path", wk_data);
      // Workers only evaluate; the stop criterion is the master's.
      if (worker_flags.config_path.empty()) worker_flags.flag_values.emplace_back("stop.max_evaluations", "1");
      return cmd_worker(worker_flags, wk_host, wk_port, wk_id);
    }
    if (*sweep) return cmd_sweep(sw_grid, sw_reps, sw_seed, sw_out);
    if (*scaling) {
      return cmd_bench_scaling(bs_counts, bs_per, bs_stub, bs_data, bs_genome, bs_epochs, bs_transport, bs_seed,
                               bs_out);
    }
    if (*timing) {
      return cmd_bench_timing(bt_data, bt_samples, bt_genome, bt_variants, bt_epochs, bt_workers, bt_bins, bt_seed,
                              bt_out);
    }
    if (*gen) return cmd_gen_data(gd_pos, gd_neg, gd_total, gd_h, gd_w, gd_seed, gd_out);
    if (*predict) return cmd_predict(pr_model, pr_data, pr_batch, pr_json, pr_out);
    if (*gradcheck) return cmd_gradcheck(gc_networks, gc_seed, gc_epsilon, gc_threshold);
    if (*plot) return cmd_plot_data(pd_sweep, pd_top, pd_timing, pd_bins, pd_out);
  } catch (const ConfigError& e) {
    fail_line(command, e.what(), e.key());
    return 1;
  } catch (const CommandError& e) {
    fail_line(command, e.what(), e.key);
    return 1;
  } catch (const std::exception& e) {
    fail_line(command, e.what(), "");
    return 1;
  }
  return 1;
}
