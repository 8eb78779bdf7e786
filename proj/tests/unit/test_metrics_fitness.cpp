#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "evonas/eval_record.hpp"
#include "evonas/fitness.hpp"
#include "evonas/metrics.hpp"
#include "evonas/rng.hpp"

using namespace evonas;

TEST_CASE("f1: worked examples and the zero-tp convention") {
  CHECK(f1_score({10, 0, 0, 5}).value == 1.0);
  const auto r = f1_score({8, 2, 2, 0});
  CHECK(r.value == 0.8);
  CHECK_FALSE(r.degenerate);
  const auto none = f1_score({0, 0, 5, 3});
  CHECK(none.value == 0.0);
  CHECK(none.degenerate);
  const auto wrong = f1_score({0, 3, 2, 1});
  CHECK(wrong.value == 0.0);
  CHECK_FALSE(wrong.degenerate);
  CHECK(f1_score({0, 0, 0, 9}).degenerate);
}

TEST_CASE("f1: exhaustive agreement with precision/recall counting for n <= 8") {
  for (int n = 1; n <= 8; ++n) {
    for (int lm = 0; lm < (1 << n); ++lm) {
      for (int pm = 0; pm < (1 << n); ++pm) {
        std::vector<int> y(n), p(n);
        double tp = 0, pred = 0, act = 0;
        for (int i = 0; i < n; ++i) {
          y[i] = (lm >> i) & 1;
          p[i] = (pm >> i) & 1;
          tp += y[i] && p[i];
          pred += p[i];
          act += y[i];
        }
        const auto c = confusion_from(y, p);
        REQUIRE(c.total() == static_cast<std::size_t>(n));
        const double expect = (pred == 0 || act == 0 || tp == 0) ? 0.0 : 2 * tp / (pred + act);
        REQUIRE(f1_score(c).value == doctest::Approx(expect).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("auc: worked examples, ties, single-class error") {
  const std::vector<double> s{0.9, 0.4, 0.5, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  CHECK(auc_roc(s, y) == 0.75);
  CHECK(auc_roc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}) == 1.0);
  CHECK(auc_roc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0}) == 0.5);
  CHECK_THROWS_AS(auc_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auc_roc(std::vector<double>{NAN, 0.2}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST_CASE("auc: exhaustive agreement with pairwise counting for n <= 8 on a tied score grid") {
  const double grid[3] = {0.0, 0.5, 1.0};
  for (int n = 2; n <= 8; ++n) {
    int combos = 1;
    for (int i = 0; i < n; ++i) combos *= 3;
    for (int lm = 1; lm < (1 << n) - 1; ++lm) {
      for (int sm = 0; sm < combos; ++sm) {
        std::vector<int> y(n);
        std::vector<double> s(n);
        int code = sm;
        for (int i = 0; i < n; ++i) {
          y[i] = (lm >> i) & 1;
          s[i] = grid[code % 3];
          code /= 3;
        }
        double wins = 0, pairs = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (y[i] == 1 && y[j] == 0) {
              pairs += 1;
              wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        REQUIRE(auc_roc(s, y) == doctest::Approx(wins / pairs).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("metrics report: slide time and serialization") {
  CHECK(slide_time_s(4000.0) == 50.0);
  MetricsReport m;
  m.f1 = 0.5;
  m.auc = 0.75;
  m.confusion = {1, 2, 3, 4};
  m.prediction_rate_patches_per_s = 2000.0;
  m.model_id = "best.mndl";
  m.dataset_id = "test.pset";
  const auto j = m.to_json();
  CHECK(j.at("slide_time_s").get<double>() == 100.0);
  CHECK(j.at("confusion").at("tn").get<int>() == 4);
  CHECK(m.to_text().find("F1") != std::string::npos);
}

TEST_CASE("normalize_objective: endpoints, clamp, interpolation") {
  const Bounds b{0.001, 0.1};
  CHECK(normalize_objective(0.001, b) == 0.0);
  CHECK(normalize_objective(0.1, b) == 1.0);
  CHECK(normalize_objective(0.0, b) == 0.0);
  CHECK(normalize_objective(0.5, b) == 1.0);
  CHECK(normalize_objective(0.5, b, false) > 1.0);
  CHECK(normalize_objective(0.0505, b) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fitness: f = v + alpha*m exactly") {
  CHECK(fitness(0.8, 0.5, 0.0) == 0.8);
  CHECK(fitness(0.8, 0.5, -0.2) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(fitness(0.8, 0.5, -0.2) == 0.8 + -0.2 * 0.5);
  for (double a : {-3.0, -0.3, 0.0, 0.4, 7.0}) CHECK(fitness(0.61, 0.0, a) == 0.61);
}

namespace {

EvalRecord rec(std::uint64_t id, double f, std::uint64_t flops) {
  EvalRecord r;
  r.genome_id = id;
  r.fitness = f;
  r.flops_inference = flops;
  return r;
}

}  // namespace

TEST_CASE("compare: failures last, flops then id break ties") {
  const auto fail = failed_record(1, "shape");
  const auto ok = rec(9, -100.0, 5);
  CHECK(ranks_before(ok, fail));
  CHECK_FALSE(ranks_before(fail, ok));
  CHECK(ranks_before(rec(5, 0.5, 10), rec(4, 0.5, 20)));
  CHECK(ranks_before(rec(4, 0.5, 10), rec(5, 0.5, 10)));
  CHECK(compare(rec(4, 0.5, 10), rec(4, 0.5, 10)) == 0);
}

TEST_CASE("compare: sorting a shuffled fixture list is deterministic") {
  std::vector<EvalRecord> list{rec(1, 0.9, 100), rec(2, 0.9, 50),     rec(3, 0.7, 10),   failed_record(4, "x"),
                               rec(5, 0.95, 400), rec(6, 0.9, 50),    failed_record(7, "y"), rec(8, -0.1, 1)};
  const std::vector<std::uint64_t> expected{5, 2, 6, 1, 3, 8, 4, 7};
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    rng.shuffle(list);
    auto sorted = list;
    std::sort(sorted.begin(), sorted.end(), ranks_before);
    std::vector<std::uint64_t> ids;
    for (const auto& r : sorted) ids.push_back(r.genome_id);
    CHECK(ids == expected);
  }
}

TEST_CASE("fitness properties: argmax invariance under matched rescaling; monotone in cost for alpha<0") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = -rng.uniform(0.05, 1.0), c = rng.uniform(0.2, 5.0);
    const Bounds b{rng.uniform(0, 10), 0};
    const Bounds base{b.lo, b.lo + rng.uniform(1, 10)};
    // alpha -> c*alpha together with (hi - lo) -> c*(hi - lo) keeps alpha*m fixed
    const Bounds scaled{base.lo, base.lo + c * (base.hi - base.lo)};
    std::vector<EvalRecord> a, s;
    for (std::uint64_t id = 1; id <= 12; ++id) {
      EvalRecord r = rec(id, 0, rng.uniform_int(1, 1000));
      r.val_f1 = rng.uniform(0, 1);
      EvalRecord r2 = r;
      score(r, {ObjectiveKind::flop_proxy, alpha, base, false});
      score(r2, {ObjectiveKind::flop_proxy, c * alpha, scaled, false});
      a.push_back(r);
      s.push_back(r2);
    }
    CHECK(std::min_element(a.begin(), a.end(), ranks_before)->genome_id ==
          std::min_element(s.begin(), s.end(), ranks_before)->genome_id);

    double prev = std::numeric_limits<double>::infinity();
    const double v = rng.uniform(0, 1);
    for (double raw = base.lo - 1; raw <= base.hi + 1; raw += 0.25) {
      const double f = fitness(v, normalize_objective(raw, base), alpha);
      CHECK(f <= prev);
      prev = f;
    }
  }
}

TEST_CASE("score: objective none gives f = val_f1; failures get -inf") {
  EvalRecord r = rec(3, 0, 1234);
  r.val_f1 = 0.66;
  score(r, {ObjectiveKind::none, -0.5, std::nullopt, true});
  CHECK(r.fitness == 0.66);
  EvalRecord p = rec(4, 0, 50);
  p.val_f1 = 0.5;
  score(p, {ObjectiveKind::flop_proxy, -0.2, Bounds{0, 100}, true});
  CHECK(p.objective_raw == 50.0);
  CHECK(p.objective_norm == 0.5);
  CHECK(p.fitness == 0.5 - 0.2 * 0.5);
  EvalRecord f = failed_record(5, "non-finite loss");
  score(f, {ObjectiveKind::flop_proxy, -0.2, Bounds{0, 100}, true});
  CHECK(f.fitness == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS((ObjectiveConfig{ObjectiveKind::flop_proxy, -0.2, Bounds{5, 5}, true}).validate(), std::invalid_argument);
  CHECK(parse_objective_kind("measured_latency") == ObjectiveKind::measured_latency);
  CHECK_THROWS_AS(parse_objective_kind("latency"), std::invalid_argument);
}

TEST_CASE("EvalRecord JSON: stable field names, exact round trip, null fitness for failures") {
  EvalRecord r = rec(42, 0.123456789012345678, 7228896);
  r.val_f1 = 0.8;
  r.val_auc = 0.91;
  r.params = 22;
  r.latency = LatencyStats{0.01, 0.009, 0.02, 5, 32, 3200.0};
  r.worker_id = 3;
  r.started_s = 1.5;
  r.finished_s = 2.25;
  const auto j = to_json(r);
  const std::vector<std::string> keys{"genome_id", "ok",        "failure",   "val_f1",        "val_f1_degenerate",
                                      "val_auc",   "train_time_s", "latency", "flops_inference", "params",
                                      "objective_raw", "objective_norm", "fitness", "worker_id", "started_s",
                                      "finished_s"};
  CHECK(j.size() == keys.size());
  for (const auto& k : keys) CHECK(j.contains(k));
  CHECK(record_from_json(nlohmann::json::parse(j.dump())) == r);

  const auto f = failed_record(7, "timeout");
  const auto jf = to_json(f);
  CHECK(jf.at("fitness").is_null());
  CHECK(jf.at("ok") == false);
  CHECK(record_from_json(nlohmann::json::parse(jf.dump())) == f);
}
