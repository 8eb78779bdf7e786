// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; exit status is non-zero if any selected
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "evonas/evaluator.hpp"
#include "evonas/evolution.hpp"
#include "evonas/gradcheck.hpp"
#include "evonas/model_io.hpp"
#include "evonas/patchset.hpp"
#include "evonas/sweep.hpp"

using namespace evonas;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Every run log produced here, audited by criterion 7.
std::vector<std::pair<std::string, std::string>> g_logs;

void keep_log(std::string name, std::string text) { g_logs.emplace_back(std::move(name), std::move(text)); }

int first_conv_kernel(const Genome& g) {
  for (const auto& f : g.features) {
    if (const auto* c = std::get_if<ConvGene>(&f)) return c->kernel;
  }
  return 0;
}

// Deterministic stand-in for training: FLOPs/params from the architecture,
// v from `score`.
FunctionEvaluator structural(Dims input, std::function<double(const Genome&)> score) {
  return FunctionEvaluator([input, score](const Genome& g, std::uint64_t) {
    EvalRecord r;
    r.genome_id = g.id;
    try {
      const auto arch = genome_architecture(g, input);
      r.flops_inference = count_flops_inference(arch);
      r.params = count_params(arch);
    } catch (const std::exception& e) {
      return failed_record(g.id, e.what());
    }
    r.val_f1 = score(g);
    return r;
  });
}

// ---- 1

Verdict gradient_correctness() {
  const auto summary = gradcheck_random_genomes(50, 1, 1e-5);
  const bool pass = summary.cases.size() >= 50 && summary.max_rel_error < 1e-6 && summary.seconds < 120.0;
  return {pass, std::to_string(summary.cases.size()) + " networks (double), max rel error " +
                    fmt("%.3g", summary.max_rel_error) + " (< 1e-6), " + fmt("%.1f", summary.seconds) +
                    " s (< 120 s)"};
}

// ---- 2

double oracle_f1(const std::vector<int>& labels, const std::vector<int>& preds) {
  double tp = 0, predicted = 0, actual = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    predicted += preds[i];
    actual += labels[i];
    tp += labels[i] * preds[i];
  }
  if (predicted == 0 || actual == 0 || tp == 0) return 0.0;
  const double p = tp / predicted, r = tp / actual;
  return 2 * p * r / (p + r);
}

// Area under the ROC polyline built by sweeping the threshold over distinct scores.
double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1;
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    }
    const double tpr = tp / pos, fpr = fp / neg;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return area;
}

Verdict metric_oracles() {
  std::size_t f1_sets = 0, f1_bad = 0;
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::uint32_t lm = 0; lm < (1u << n); ++lm) {
      for (std::uint32_t pm = 0; pm < (1u << n); ++pm) {
        std::vector<int> labels(n), preds(n);
        for (std::size_t i = 0; i < n; ++i) {
          labels[i] = (lm >> i) & 1;
          preds[i] = (pm >> i) & 1;
        }
        const double got = f1_score(confusion_from(labels, preds)).value;
        if (std::abs(got - oracle_f1(labels, preds)) > 1e-12) ++f1_bad;
        ++f1_sets;
      }
    }
  }

  // Scores range over `levels` distinct values (all rank patterns with ties
  // for n <= 4; 4 levels up to n = 7, 3 at n = 8).
  std::size_t auc_sets = 0, auc_bad = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    const std::size_t levels = n <= 4 ? n : (n <= 7 ? 4 : 3);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= levels;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::uint32_t lm = 1; lm + 1 < (1u << n); ++lm) {
      for (std::size_t i = 0; i < n; ++i) labels[i] = (lm >> i) & 1;
      for (std::size_t code = 0; code < combos; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i, c /= levels) scores[i] = static_cast<double>(c % levels) / 4.0;
        if (std::abs(auc_roc(scores, labels) - oracle_auc(scores, labels)) > 1e-12) ++auc_bad;
        ++auc_sets;
      }
    }
  }

  const double f1_example = f1_score(Confusion{8, 2, 2, 0}).value;
  const std::vector<double> s{0.9, 0.4, 0.6, 0.1};
  const std::vector<int> l{1, 1, 0, 0};
  const double auc_example = auc_roc(s, l);
  const bool pass = f1_bad == 0 && auc_bad == 0 && f1_example == 0.8 && auc_example == 0.75;
  return {pass, "f1 " + std::to_string(f1_sets - f1_bad) + "/" + std::to_string(f1_sets) + ", auc " +
                    std::to_string(auc_sets - auc_bad) + "/" + std::to_string(auc_sets) +
                    " sets match; f1(8,2,2)=" + fmt("%.17g", f1_example) + ", auc 2x2=" + fmt("%.17g", auc_example)};
}

// ---- 3

// Walks every window position and multiply-add explicitly.
std::uint64_t loop_count_flops(const Architecture& arch) {
  std::size_t c = arch.input.c, h = arch.input.h, w = arch.input.w;
  std::uint64_t total = 0;
  for (const auto& layer : arch.layers) {
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
      std::size_t ho = 0, wo = 0;
      for (std::size_t y = 0; y + conv->kernel <= h; y += conv->stride) ++ho;
      for (std::size_t x = 0; x + conv->kernel <= w; x += conv->stride) ++wo;
      for (std::size_t co = 0; co < conv->out_channels; ++co)
        for (std::size_t y = 0; y < ho; ++y)
          for (std::size_t x = 0; x < wo; ++x)
            for (std::size_t ci = 0; ci < c; ++ci)
              for (std::size_t ky = 0; ky < conv->kernel; ++ky)
                for (std::size_t kx = 0; kx < conv->kernel; ++kx) total += 2;
      c = conv->out_channels;
      h = ho;
      w = wo;
    } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
      std::size_t ho = 0, wo = 0;
      for (std::size_t y = 0; y + pool->size <= h; y += pool->stride) ++ho;
      for (std::size_t x = 0; x + pool->size <= w; x += pool->stride) ++wo;
      for (std::size_t i = 0; i < c * ho * wo; ++i) total += 1;
      h = ho;
      w = wo;
    } else if (std::holds_alternative<ReluSpec>(layer)) {
      for (std::size_t i = 0; i < c * h * w; ++i) total += 1;
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      c = c * h * w;
      h = w = 1;
    } else {
      const auto& dense = std::get<DenseSpec>(layer);
      for (std::size_t o = 0; o < dense.out_units; ++o)
        for (std::size_t i = 0; i < c; ++i) total += 2;
      c = dense.out_units;
    }
  }
  return total;
}

Verdict flop_accounting() {
  SearchSpace space;
  space.out_channels = {2, 4, 8};
  space.kernel_max = 5;
  space.dense_min = 4;
  space.dense_max = 32;
  space.max_feature_layers = 5;
  space.max_head_layers = 2;
  const Dims input{3, 16, 16};
  Rng rng(33);
  IdAllocator ids;
  std::size_t nets = 0, matched = 0, convs = 0;
  while (nets < 30) {
    const Genome g = random_genome(rng, space, ids, input);
    const auto arch = genome_architecture(g, input);
    ++nets;
    for (const auto& l : arch.layers) convs += std::holds_alternative<ConvSpec>(l);
    if (count_flops_inference(arch) == loop_count_flops(arch)) ++matched;
  }
  return {matched == nets && convs > 0,
          std::to_string(matched) + "/" + std::to_string(nets) + " random networks exact (" + std::to_string(convs) +
              " conv layers)"};
}

// ---- 4

Verdict fitness_behavior() {
  Rng rng(4);
  bool ok = true;
  std::size_t checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.index(20);
    std::vector<std::uint64_t> costs(n), idv(n);
    for (std::size_t i = 0; i < n; ++i) {
      costs[i] = 1000 + 37 * i;
      idv[i] = i + 1;
    }
    rng.shuffle(costs);
    rng.shuffle(idv);
    const double v = 0.25 + 0.5 * rng.uniform01();
    ObjectiveConfig zero{ObjectiveKind::flop_proxy, 0.0, Bounds{900.0, 1100.0 + 37.0 * n}, true};
    ObjectiveConfig neg = zero;
    neg.alpha = -(0.05 + rng.uniform01());

    auto make = [&](const ObjectiveConfig& cfg, bool vary_v) {
      std::vector<EvalRecord> rs(n);
      for (std::size_t i = 0; i < n; ++i) {
        rs[i].genome_id = idv[i];
        rs[i].flops_inference = costs[i];
        rs[i].val_f1 = vary_v ? static_cast<double>(rng.index(4)) / 4.0 : v;
        score(rs[i], cfg);
      }
      return rs;
    };

    // alpha = 0, constant v: fitness is exactly v and the order is compare's tie-break.
    auto flat = make(zero, false);
    for (const auto& r : flat) ok &= r.fitness == v;
    std::sort(flat.begin(), flat.end(), ranks_before);
    for (std::size_t i = 1; i < n; ++i) ok &= flat[i - 1].flops_inference < flat[i].flops_inference;

    // alpha = 0, varying v: order is v descending, ties per compare.
    auto varied = make(zero, true);
    std::sort(varied.begin(), varied.end(), ranks_before);
    for (std::size_t i = 1; i < n; ++i) {
      const auto& a = varied[i - 1];
      const auto& b = varied[i];
      ok &= a.fitness == a.val_f1;
      ok &= a.val_f1 > b.val_f1 || (a.val_f1 == b.val_f1 && a.flops_inference < b.flops_inference);
    }

    // alpha < 0, constant v: strictly cost-ascending, best is the cheapest.
    auto costed = make(neg, false);
    Population pop(n, 1);
    for (const auto& r : costed) pop.insert(Member{r, Genome{}});
    std::sort(costed.begin(), costed.end(), ranks_before);
    for (std::size_t i = 1; i < n; ++i) {
      ok &= costed[i - 1].flops_inference < costed[i].flops_inference;
      ok &= costed[i - 1].fitness > costed[i].fitness;
    }
    ok &= pop.best().record.flops_inference == *std::min_element(costs.begin(), costs.end());
    ++checked;
  }
  return {ok, std::to_string(checked) + " record sets: alpha=0 orders by v then compare, alpha<0 strictly by cost"};
}

// ---- 5

struct SearchResult {
  std::uint64_t best_flops = 0;
  double test_f1 = 0.0;
  double val_f1 = 0.0;
  std::string genome;
};

SearchSpace desk_space() {
  SearchSpace s;
  s.out_channels = {4, 8, 16, 32};
  s.kernel_max = 5;
  s.stride_max = 2;
  s.pool_sizes = {2, 3};
  s.pool_stride_max = 2;
  s.dense_min = 8;
  s.dense_max = 64;
  s.max_feature_layers = 5;
  s.max_head_layers = 1;
  s.batch_sizes = {16, 32};
  s.lr_min = 1e-3;
  s.lr_max = 0.01;
  s.momentum_max = 0.9;
  return s;
}

SearchResult objective_search(const Splits& splits, std::uint64_t seed, double alpha) {
  EvolutionConfig cfg;
  cfg.ga.population = 20;
  cfg.ga.space = desk_space();
  cfg.ga.input = splits.data->dims;
  cfg.ga.seed = seed;
  cfg.objective = {ObjectiveKind::flop_proxy, alpha, std::nullopt, true};
  cfg.calibration_k = 8;
  cfg.stop.max_evaluations = 300;
  cfg.pool.workers = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 4u));

  EvalConfig eval;
  eval.budget = {1, 12};
  eval.objective = cfg.objective;
  eval.max_params = 200000;
  DatasetEvaluator evaluator(splits, eval);

  std::ostringstream log;
  const auto out = run_evolution(cfg, evaluator, log);
  keep_log("objective seed " + std::to_string(seed) + " alpha " + fmt("%g", alpha), log.str());

  const auto final_model = finalize_best(out.best.genome, splits, TrainBudget{3, std::nullopt}, seed);
  return {out.best.record.flops_inference, final_model.test_metrics.f1, out.best.record.val_f1,
          to_text(out.best.genome)};
}

Verdict multi_objective_effect() {
  const auto start = Clock::now();
  const auto counts = imbalanced_counts(1500);
  auto data = std::make_shared<const PatchSet>(generate_synthetic(counts.positives, counts.negatives, 32, 32, 2024));
  const Splits splits = stratified_split(data, {0.6, 0.2, 0.2}, 7);

  int good = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto plain = objective_search(splits, seed, 0.0);
    const auto cheap = objective_search(splits, seed, -0.3);
    const double ratio = static_cast<double>(plain.best_flops) / static_cast<double>(std::max<std::uint64_t>(1, cheap.best_flops));
    const double df1 = std::abs(plain.test_f1 - cheap.test_f1);
    const bool ok = ratio >= 2.0 && df1 <= 0.05;
    good += ok;
    detail << " s" << seed << ":x" << fmt("%.1f", ratio) << ",dF1=" << fmt("%.3f", df1) << (ok ? "" : "(miss)");
    std::fprintf(stderr, "  [5] seed %llu alpha 0: flops %llu test f1 %.3f | alpha -0.3: flops %llu test f1 %.3f\n",
                 static_cast<unsigned long long>(seed), static_cast<unsigned long long>(plain.best_flops),
                 plain.test_f1, static_cast<unsigned long long>(cheap.best_flops), cheap.test_f1);
  }
  const double secs = seconds_since(start);
  return {good >= 4, std::to_string(good) + "/5 seeds with >=2x fewer FLOPs and |dF1|<=0.05;" + detail.str() + "; " +
                         fmt("%.0f", secs) + " s on " + std::to_string(std::thread::hardware_concurrency()) +
                         " core(s)"};
}

// ---- 6

Verdict ga_convergence() {
  const auto start = Clock::now();
  const auto stub = structural(kDefaultInputShape, [](const Genome& g) {
    const int k = first_conv_kernel(g);
    return k == 0 ? -10.0 : -std::abs(k - 4.0);
  });
  int reached = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    EvolutionConfig cfg;
    cfg.ga.seed = seed;
    cfg.stop.max_evaluations = 200;
    cfg.pool.schedule = Schedule::inline_sync;
    std::ostringstream log;
    const auto out = run_evolution(cfg, stub, log);
    keep_log("convergence seed " + std::to_string(seed), log.str());
    reached += out.evaluations <= 200 && first_conv_kernel(out.best.genome) == 4;
  }
  const double secs = seconds_since(start);
  return {reached >= 38 && secs < 60.0,
          std::to_string(reached) + "/40 seeds reach kernel 4 within 200 evaluations (>= 38), " + fmt("%.1f", secs) +
              " s"};
}

// ---- 7 (runs last so it sees every log)

Verdict elitism_monotonicity() {
  // Two async runs of its own so the audit never sees an empty corpus.
  for (int workers : {1, 3}) {
    EvolutionConfig cfg;
    cfg.ga.population = 8;
    cfg.ga.seed = 70 + workers;
    cfg.objective = {ObjectiveKind::flop_proxy, -0.2, std::nullopt, true};
    cfg.calibration_k = 4;
    cfg.stop.max_evaluations = 40;
    cfg.pool.workers = workers;
    std::ostringstream log;
    run_evolution(cfg, sleep_stub(0.002), log);
    keep_log("async workers " + std::to_string(workers), log.str());
  }
  std::size_t bad = 0, evals = 0;
  std::string first_error;
  for (const auto& [name, text] : g_logs) {
    std::istringstream in(text);
    const auto audit = audit_log(in);
    evals += audit.evaluations;
    if (!audit.ok || !audit.has_summary) {
      ++bad;
      if (first_error.empty()) first_error = name + ": " + (audit.errors.empty() ? "no summary" : audit.errors.front());
    }
  }
  return {bad == 0, std::to_string(g_logs.size() - bad) + "/" + std::to_string(g_logs.size()) + " logs clean, " +
                        std::to_string(evals) + " evaluations audited" +
                        (first_error.empty() ? "" : "; first error: " + first_error)};
}

// ---- 8

class CountingDispatcher : public Dispatcher {
 public:
  CountingDispatcher(Genome prototype, std::size_t n) : prototype_(std::move(prototype)), n_(n), seen_(n + 1, 0) {}
  std::optional<Task> next_task(int) override {
    if (issued_ >= n_) return std::nullopt;
    Genome g = prototype_;
    g.id = ++issued_;
    return Task{g, g.id};
  }
  void complete(const EvalRecord& r) override {
    if (r.genome_id >= 1 && r.genome_id <= n_) ++seen_[r.genome_id];
    order_.push_back(r.genome_id);
  }
  bool exhausted() const override { return issued_ >= n_; }
  bool exactly_once() const {
    for (std::size_t id = 1; id <= n_; ++id) {
      if (seen_[id] != 1) return false;
    }
    return order_.size() == n_;
  }
  const std::vector<std::uint64_t>& order() const { return order_; }

 private:
  Genome prototype_;
  std::size_t n_;
  std::size_t issued_ = 0;
  std::vector<int> seen_;
  std::vector<std::uint64_t> order_;
};

FunctionEvaluator duration_stub(const std::vector<double>* durations) {
  return FunctionEvaluator([durations](const Genome& g, std::uint64_t) {
    EvalRecord r;
    r.genome_id = g.id;
    r.val_f1 = 0.5;
    sleep_seconds((*durations)[g.id - 1]);
    return r;
  });
}

std::vector<double> uniform_durations(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> d(n);
  for (auto& x : d) x = dist(gen);
  return d;
}

Verdict async_scheduler() {
  const auto start = Clock::now();
  Genome proto;
  proto.features = {ConvGene{4, 3, 1, true}};
  PoolConfig pool;
  pool.workers = 8;

  const auto durations = uniform_durations(400, 0.1, 0.5, 8);
  CountingDispatcher full(proto, 400);
  const auto report = run_pool(full, duration_stub(&durations), pool);
  const double idle = report.aggregate_idle_fraction();
  bool once = full.exactly_once() && report.completed == 400 && report.issued == 400 && report.reissued == 0 &&
              report.duplicates_dropped == 0;

  // Same workload at 1/100 time scale so 100 completion orders fit the budget.
  std::set<std::vector<std::uint64_t>> orders;
  std::size_t clean = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto scaled = uniform_durations(400, 0.001, 0.005, 1000 + seed);
    CountingDispatcher d(proto, 400);
    const auto r = run_pool(d, duration_stub(&scaled), pool);
    clean += d.exactly_once() && r.completed == 400 && r.duplicates_dropped == 0 && r.unknown_dropped == 0;
    orders.insert(d.order());
  }
  const double secs = seconds_since(start);
  const bool pass = idle < 0.05 && once && clean == 100 && secs < 300.0;
  return {pass, "idle fraction " + fmt("%.4f", idle) + " (< 0.05) over 400 tasks in " + fmt("%.1f", report.wall_s) +
                    " s; exactly-once " + std::to_string(clean + 0) + "/100 runs, " + std::to_string(orders.size()) +
                    " distinct completion orders; " + fmt("%.0f", secs) + " s"};
}

// ---- 9

Verdict weak_scaling_check() {
  ScalingConfig cfg;
  cfg.worker_counts = {1, 2, 4};
  cfg.networks_per_worker = 8;
  Genome g;
  g.features = {ConvGene{8, 3, 1, true}};
  const auto points = weak_scaling(cfg, sleep_stub(0.2, Dims{3, 32, 32}), g);
  bool ok = points.size() == 3;
  std::ostringstream detail;
  for (const auto& p : points) {
    ok &= p.efficiency >= 0.9 && p.lower_bound <= p.throughput && p.throughput <= p.upper_bound;
    detail << " W=" << p.workers << ":eff " << fmt("%.3f", p.efficiency) << " [" << fmt("%.2f", p.lower_bound) << " <= "
           << fmt("%.2f", p.throughput) << " <= " << fmt("%.2f", p.upper_bound) << "]";
  }
  return {ok, "stub (sleep 0.2 s), " + std::to_string(std::thread::hardware_concurrency()) + " core(s):" +
                  detail.str()};
}

// ---- 10

Verdict bimodality() {
  int bimodal_ok = 0;
  double worst_center_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> a(6.35, 0.05), b(6.7, 0.05);
    std::vector<double> xs(500);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = i % 2 ? a(gen) : b(gen);
    const auto t = timing_distribution(xs);
    if (t.modes != 2 || t.mode_centers.size() != 2) continue;
    auto c = t.mode_centers;
    std::sort(c.begin(), c.end());
    const double err = std::max(std::abs(c[0] - 6.35), std::abs(c[1] - 6.7));
    worst_center_err = std::max(worst_center_err, err);
    bimodal_ok += err <= 0.05;
  }
  int unimodal_ok = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 gen(5000 + seed);
    std::normal_distribution<double> u(6.5, 0.05);
    std::vector<double> xs(500);
    for (auto& x : xs) x = u(gen);
    unimodal_ok += timing_distribution(xs).modes == 1;
  }
  return {bimodal_ok == 20 && unimodal_ok >= 99,
          "mixtures: " + std::to_string(bimodal_ok) + "/20 two modes, worst center error " +
              fmt("%.4f", worst_center_err) + " (<= 0.05); unimodal: " + std::to_string(unimodal_ok) +
              "/100 one mode (>= 99)"};
}

// ---- 11

Verdict throughput_prior() {
  std::vector<SweepRow> rows;
  for (std::size_t in : {3, 16, 32})
    for (std::size_t out : {8, 16, 32, 64, 128, 256})
      for (std::size_t k = 1; k <= 7; ++k)
        for (std::size_t s = 1; s <= 3; ++s)
          for (std::size_t batch : {1, 4, 16}) {
            SweepRow r{in, out, k, s, batch, 32, 32, 0.0, 0, 0.0};
            const double peak = (out == 256 && k == 4 && s == 1) ? 2.0 : 1.0;
            r.flops_per_s = 1e9 * peak * (static_cast<double>(out) / 256.0) / (1.0 + std::abs(static_cast<double>(k) - 4.0)) /
                            static_cast<double>(s) * (1.0 + 0.01 * static_cast<double>(in + batch));
            rows.push_back(r);
          }
  const std::size_t top = 9;  // the nine (256, 4, 1) rows
  const auto prior = build_prior(rows, top, 1.0);
  bool ok = prior.valid() && prior.out_channels.mode() == 256 && prior.kernel.mode() == 4 && prior.stride.mode() == 1;

  const Dims input{3, 32, 32};
  Rng rng(11);
  IdAllocator ids;
  std::size_t convs = 0, off = 0;
  for (int i = 0; i < 500; ++i) {
    const Genome g = random_genome(rng, SearchSpace{}, ids, input, &prior);
    for (const auto& f : g.features) {
      if (const auto* c = std::get_if<ConvGene>(&f)) {
        ++convs;
        off += !(c->out_channels == 256 && c->kernel == 4 && c->stride == 1);
      }
    }
  }
  ok &= convs > 0 && off == 0;
  return {ok, "mode (" + std::to_string(prior.out_channels.mode()) + ", " + std::to_string(prior.kernel.mode()) + ", " +
                  std::to_string(prior.stride.mode()) + "); beta=1: " + std::to_string(convs - off) + "/" +
                  std::to_string(convs) + " conv genes on (256, 4, 1)"};
}

// ---- 12

std::string type_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

// Checks `obj` against schema[section]: exact key set, each value of an allowed type.
bool matches(const json& obj, const json& schema, const std::string& section, std::string& why) {
  const auto& spec = schema.at(section);
  if (!obj.is_object()) {
    why = section + ": not an object";
    return false;
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!spec.contains(it.key())) {
      why = section + ": unexpected key " + it.key();
      return false;
    }
    const auto& allowed = spec.at(it.key());
    if (std::find(allowed.begin(), allowed.end(), type_name(it.value())) == allowed.end()) {
      why = section + "." + it.key() + ": type " + type_name(it.value());
      return false;
    }
  }
  for (auto it = spec.begin(); it != spec.end(); ++it) {
    if (!obj.contains(it.key())) {
      why = section + ": missing key " + it.key();
      return false;
    }
  }
  return true;
}

bool log_matches_schema(const std::string& text, const json& schema, std::string& why) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const json j = json::parse(line);
    const std::string type = j.value("type", "");
    if (!schema.contains(type)) {
      why = "unknown line type '" + type + "'";
      return false;
    }
    if (!matches(j, schema, type, why)) return false;
    if (type == "header" && !matches(j.at("objective"), schema, "header.objective", why)) return false;
    if (type == "eval" && !matches(j.at("record"), schema, "eval.record", why)) return false;
    if (type == "eval" && j.at("record").at("latency").is_object() &&
        !matches(j.at("record").at("latency"), schema, "eval.record.latency", why)) {
      return false;
    }
    if (type == "summary") {
      for (const auto& w : j.at("workers")) {
        if (!matches(w, schema, "summary.workers", why)) return false;
      }
    }
  }
  return true;
}

// The log without the summary's wall-clock measurements.
std::string without_timing(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    if (j.value("type", "") == "summary") {
      j.erase("wall_s");
      j.erase("idle_fraction");
      for (auto& w : j["workers"]) {
        w.erase("busy_s");
        w.erase("idle_s");
        w.erase("idle_fraction");
      }
    }
    out << j.dump() << '\n';
  }
  return out.str();
}

Verdict formats() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("evonas_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::ostringstream detail;
  bool ok = true;

  // PSET: bytes -> set -> bytes, and through a file.
  const PatchSet set = generate_synthetic(7, 13, 24, 20, 12);
  const auto bytes = encode_patchset(set);
  const PatchSet back = decode_patchset(bytes);
  save_patchset(set, dir / "set.pset");
  const PatchSet from_file = load_patchset(dir / "set.pset");
  const bool pset_ok = encode_patchset(back) == bytes && back.pixels == set.pixels && back.labels == set.labels &&
                       back.dims == set.dims && encode_patchset(from_file) == bytes;
  ok &= pset_ok;
  detail << "PSET " << (pset_ok ? "bit-exact" : "MISMATCH");

  // MNDL: bytes -> network -> bytes, identical weights and outputs.
  const Dims input{3, 24, 24};
  Rng rng(12);
  IdAllocator ids;
  std::size_t mndl_ok = 0;
  for (int i = 0; i < 10; ++i) {
    SearchSpace space;
    space.out_channels = {4, 8};
    space.max_feature_layers = 4;
    space.dense_max = 32;
    const Genome g = random_genome(rng, space, ids, input);
    const auto net = instantiate<float>(g, input, 100 + i);
    const auto mbytes = encode_model(net);
    const auto restored = decode_model(mbytes);
    save_model(net, dir / "m.mndl");
    std::ifstream f(dir / "m.mndl", std::ios::binary);
    const std::vector<std::uint8_t> on_disk((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Tensor4<float> probe(Shape4{2, 3, 24, 24});
    for (std::size_t j = 0; j < probe.size(); ++j) probe.data()[j] = static_cast<float>(j % 17) / 17.0f;
    const auto ya = net.forward(probe), yb = restored.forward(probe);
    const bool same_out = std::memcmp(ya.data(), yb.data(), ya.size() * sizeof(float)) == 0;
    mndl_ok += encode_model(restored) == mbytes && on_disk == mbytes && same_out;
  }
  ok &= mndl_ok == 10;
  detail << ", MNDL " << mndl_ok << "/10 bit-exact";

  // Transport equivalence under the lockstep schedule, then the log schema.
  const auto stub = structural(Dims{3, 32, 32}, [](const Genome& g) {
    return 0.5 + 0.05 * static_cast<double>(g.features.size()) - 0.01 * first_conv_kernel(g);
  });
  EvolutionConfig cfg;
  cfg.ga.population = 8;
  cfg.ga.input = Dims{3, 32, 32};
  cfg.ga.seed = 12;
  cfg.objective = {ObjectiveKind::flop_proxy, -0.2, std::nullopt, true};
  cfg.calibration_k = 4;
  cfg.stop.max_evaluations = 40;
  cfg.pool.workers = 3;
  cfg.pool.schedule = Schedule::lockstep;
  std::ostringstream in_process, socket;
  run_evolution(cfg, stub, in_process);
  cfg.pool.transport = Transport::socket;
  run_evolution(cfg, stub, socket);
  keep_log("lockstep in_process", in_process.str());
  keep_log("lockstep socket", socket.str());
  const bool same = without_timing(in_process.str()) == without_timing(socket.str());
  ok &= same;
  detail << ", transports " << (same ? "identical" : "DIFFER");

  std::ifstream schema_file(std::string(EVONAS_FIXTURE_DIR) + "/log_schema.json");
  const json schema = json::parse(schema_file);
  std::size_t conform = 0;
  std::string why;
  for (const auto& [name, text] : g_logs) {
    std::string w;
    if (log_matches_schema(text, schema, w)) {
      ++conform;
    } else if (why.empty()) {
      why = name + ": " + w;
    }
  }
  ok &= conform == g_logs.size();
  detail << ", schema " << conform << "/" << g_logs.size() << " logs" << (why.empty() ? "" : " (" + why + ")");
  fs::remove_all(dir);
  return {ok, detail.str()};
}

struct Criterion {
  int number;
  const char* name;
  Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient-correctness", gradient_correctness}, {2, "metric-oracles", metric_oracles},
      {3, "flop-accounting", flop_accounting},           {4, "fitness-behavior", fitness_behavior},
      {5, "multi-objective-effect", multi_objective_effect}, {6, "ga-convergence", ga_convergence},
      {8, "async-scheduler", async_scheduler},           {9, "weak-scaling", weak_scaling_check},
      {10, "bimodality-detector", bimodality},           {11, "throughput-prior", throughput_prior},
      {12, "formats", formats},                          {7, "elitism-monotonicity", elitism_monotonicity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", c.number, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
