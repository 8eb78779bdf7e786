#include <doctest.h>

#include <cmath>
#include <map>

#include "evonas/evaluator.hpp"
#include "evonas/genome.hpp"
#include "fixtures.hpp"

using namespace evonas;

namespace {

Genome conv_chain(std::initializer_list<ConvGene> convs) {
  Genome g;
  for (const auto& c : convs) g.features.emplace_back(c);
  g.id = 1;
  return g;
}

}  // namespace

TEST_CASE("validate_shapes: formula, collapse detection, empty feature list") {
  auto single = conv_chain({{16, 4, 1, false}});
  const auto tr = validate_shapes(single, kDefaultInputShape);
  REQUIRE(tr.ok());
  CHECK(tr.steps.front().dims.h == 97);
  CHECK(tr.steps.front().dims.w == 97);

  const auto bad = validate_shapes(conv_chain({{8, 101, 1, true}}), kDefaultInputShape);
  REQUIRE_FALSE(bad.ok());
  CHECK(bad.error->layer == 0);
  CHECK(bad.error->dimension == "height");

  const auto empty = validate_shapes(Genome{}, kDefaultInputShape);
  REQUIRE(empty.ok());
  REQUIRE(empty.steps.size() == 2);
  CHECK(empty.steps[0].kind == "flatten");
  CHECK(empty.steps[0].dims.c == 3u * 100 * 100);
  CHECK(empty.steps[1].kind == "dense");
  CHECK(empty.steps[1].dims.c == 2);
}

TEST_CASE("validate_shapes: extents follow floor((d-k)/s)+1 against stepwise enumeration") {
  Rng rng(1);
  SearchSpace space;
  IdAllocator ids;
  for (int trial = 0; trial < 300; ++trial) {
    const Dims in{3, static_cast<std::size_t>(rng.uniform_int(8, 64)), static_cast<std::size_t>(rng.uniform_int(8, 64))};
    const auto g = random_genome(rng, space, ids, in);
    const auto tr = validate_shapes(g, in);
    REQUIRE(tr.ok());
    // enumerate window positions directly
    std::size_t h = in.h, w = in.w, step = 0;
    for (const auto& gene : g.features) {
      int k, s;
      if (const auto* c = std::get_if<ConvGene>(&gene)) {
        k = c->kernel;
        s = c->stride;
      } else {
        k = std::get<PoolGene>(gene).size;
        s = std::get<PoolGene>(gene).stride;
      }
      std::size_t nh = 0, nw = 0;
      for (std::size_t p = 0; p + k <= h; p += s) ++nh;
      for (std::size_t p = 0; p + k <= w; p += s) ++nw;
      h = nh;
      w = nw;
      CHECK(tr.steps[step].dims.h == h);
      CHECK(tr.steps[step].dims.w == w);
      step += (std::holds_alternative<ConvGene>(gene) && std::get<ConvGene>(gene).relu) ? 2 : 1;
    }
  }
}

TEST_CASE("repair: valid genome unchanged; stacked k=7 s=3 on 8x8; all-invalid genome") {
  auto ok = conv_chain({{16, 3, 1, true}, {8, 2, 2, false}});
  CHECK(repair(ok, kDefaultInputShape) == ok);

  // 8x8 -> k7 s3 -> 1x1; the second k7 cannot fit a 1x1 map and shrinks to k1.
  const Dims small{3, 8, 8};
  const auto fixed = repair(conv_chain({{16, 7, 3, true}, {16, 7, 3, true}}), small);
  REQUIRE(validate_shapes(fixed, small).ok());
  REQUIRE(fixed.features.size() == 2);
  CHECK(std::get<ConvGene>(fixed.features[0]).kernel == 7);
  CHECK(std::get<ConvGene>(fixed.features[1]).kernel == 1);

  Genome pools;
  for (int i = 0; i < 4; ++i) pools.features.emplace_back(PoolGene{3, 1});
  const Dims tiny{3, 1, 1};
  const auto emptied = repair(pools, tiny);
  CHECK(emptied.features.empty());
  CHECK(validate_shapes(emptied, tiny).ok());
}

TEST_CASE("repair is idempotent and mutate/crossover are closed over valid genomes (1000 trials)") {
  Rng rng(2);
  SearchSpace space;
  IdAllocator ids;
  const MutationRates heavy{0.9, 0.9, 0.9, 0.9};
  for (int trial = 0; trial < 1000; ++trial) {
    const Dims in{3, static_cast<std::size_t>(rng.uniform_int(4, 40)), static_cast<std::size_t>(rng.uniform_int(4, 40))};
    const auto a = random_genome(rng, space, ids, in);
    const auto b = random_genome(rng, space, ids, in);
    const auto m = mutate(a, rng, heavy, space, ids, in);
    const auto x = crossover(a, b, rng, ids, in);
    CHECK(validate_shapes(m, in).ok());
    CHECK(validate_shapes(x, in).ok());
    CHECK(m.features.size() <= space.max_feature_layers);
    CHECK(x.features.size() <= space.max_feature_layers);
    CHECK(m.head.size() <= space.max_head_layers);

    // arbitrary raw genes, possibly collapsing
    Genome raw;
    const auto n = rng.uniform_int(0, 12);
    for (int i = 0; i < n; ++i) {
      if (rng.bernoulli(0.6)) {
        raw.features.emplace_back(ConvGene{8, static_cast<int>(rng.uniform_int(1, 7)), static_cast<int>(rng.uniform_int(1, 3)), true});
      } else {
        raw.features.emplace_back(PoolGene{static_cast<int>(rng.uniform_int(2, 3)), static_cast<int>(rng.uniform_int(1, 3))});
      }
    }
    const auto once = repair(raw, in);
    CHECK(validate_shapes(once, in).ok());
    CHECK(repair(once, in) == once);
  }
}

TEST_CASE("random_genome: deterministic per seed") {
  SearchSpace space;
  IdAllocator ids1, ids2;
  Rng r1(7), r2(7);
  CHECK(random_genome(r1, space, ids1, kDefaultInputShape) == random_genome(r2, space, ids2, kDefaultInputShape));
}

TEST_CASE("random_genome: beta=1 delta prior pins every conv gene") {
  SearchSpace space;
  IdAllocator ids;
  Rng rng(8);
  const auto prior = ThroughputPrior::delta(256, 4, 1, 1.0);
  std::size_t convs = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = random_genome(rng, space, ids, kDefaultInputShape, &prior);
    for (const auto& gene : g.features) {
      if (const auto* c = std::get_if<ConvGene>(&gene)) {
        ++convs;
        CHECK(c->out_channels == 256);
        CHECK(c->kernel == 4);
        CHECK(c->stride == 1);
      }
    }
  }
  CHECK(convs > 1000);
}

TEST_CASE("random_genome: beta=0 kernel marginal is uniform (10,000 draws, 3 sigma)") {
  SearchSpace space;
  IdAllocator ids;
  Rng rng(9);
  // A non-uniform prior that beta=0 must ignore.
  const auto prior = ThroughputPrior::delta(256, 4, 1, 0.0);
  std::map<int, int> counts;
  int draws = 0;
  while (draws < 10000) {
    const auto g = random_genome(rng, space, ids, kDefaultInputShape, &prior);
    // The first layer always fits a 100x100 input, so repair never alters it.
    if (const auto* c = std::get_if<ConvGene>(&g.features.front())) {
      ++counts[c->kernel];
      ++draws;
    }
  }
  const double p = 1.0 / 7.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0.0;
  for (int k = 1; k <= 7; ++k) {
    CHECK(std::abs(counts[k] - draws * p) < 3 * sigma);
    chi2 += std::pow(counts[k] - draws * p, 2) / (draws * p);
  }
  // 99.9th percentile of chi-square with 6 degrees of freedom
  CHECK(chi2 < 22.458);
}

TEST_CASE("mutate: zero rates copy the genes; floor guard; parent untouched; golden child") {
  SearchSpace space;
  IdAllocator ids(100);
  Rng rng(10);
  const auto parent = random_genome(rng, space, ids, kDefaultInputShape);
  const auto before = parent;
  const auto child = mutate(parent, rng, MutationRates{0, 0, 0, 0}, space, ids, kDefaultInputShape);
  CHECK(child.same_structure(parent));
  CHECK(child.id != parent.id);
  CHECK(child.parent_ids == std::vector<std::uint64_t>{parent.id});
  CHECK(parent == before);

  auto single = conv_chain({{16, 3, 1, true}});
  for (int i = 0; i < 50; ++i) {
    const auto c = mutate(single, rng, MutationRates{0, 0, 1, 0}, space, ids, kDefaultInputShape);
    CHECK(c.features == single.features);
  }

  const auto golden = testing::load_keyed_fixture("genome_golden.txt");
  IdAllocator gids;
  Rng grng(2024);
  const auto gp = random_genome(grng, space, gids, kDefaultInputShape);
  CHECK(to_text(gp) == golden.at("mutate.parent"));
  CHECK(to_text(mutate(gp, grng, MutationRates{1, 1, 1, 1}, space, gids, kDefaultInputShape)) ==
        golden.at("mutate.child"));
}

TEST_CASE("crossover: self-crossover, boundary cut, golden child") {
  SearchSpace space;
  IdAllocator ids(500);
  Rng rng(11);
  const auto a = random_genome(rng, space, ids, kDefaultInputShape);
  const auto b = random_genome(rng, space, ids, kDefaultInputShape);
  for (int i = 0; i < 20; ++i) {
    const auto self = crossover(a, a, rng, ids, kDefaultInputShape);
    CHECK(self.features == a.features);
    CHECK(self.head == a.head);
    CHECK(self.parent_ids == std::vector<std::uint64_t>{a.id, a.id});
  }
  const auto at0 = crossover_at(a, b, 0, rng, ids, kDefaultInputShape);
  CHECK(at0.features == b.features);

  const auto golden = testing::load_keyed_fixture("genome_golden.txt");
  IdAllocator gids;
  Rng grng(2024);
  const auto gp = random_genome(grng, space, gids, kDefaultInputShape);
  mutate(gp, grng, MutationRates{1, 1, 1, 1}, space, gids, kDefaultInputShape);
  const auto ga = random_genome(grng, space, gids, kDefaultInputShape);
  const auto gb = random_genome(grng, space, gids, kDefaultInputShape);
  CHECK(to_text(ga) == golden.at("crossover.a"));
  CHECK(to_text(gb) == golden.at("crossover.b"));
  CHECK(to_text(crossover(ga, gb, grng, gids, kDefaultInputShape)) == golden.at("crossover.child"));
}

TEST_CASE("instantiate: deterministic weights, structural layer count, params match count_params") {
  SearchSpace space;
  IdAllocator ids;
  Rng rng(12);
  const Dims in{3, 24, 24};
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_genome(rng, space, ids, in);
    const auto n1 = instantiate<float>(g, in, 99);
    const auto n2 = instantiate<float>(g, in, 99);
    CHECK(n1.checksum() == n2.checksum());

    std::size_t relus = 0;
    for (const auto& gene : g.features) {
      if (const auto* c = std::get_if<ConvGene>(&gene); c && c->relu) ++relus;
    }
    relus += g.head.size();
    CHECK(n1.layers().size() == g.features.size() + relus + 1 + g.head.size() + 1);
    CHECK(n1.parameter_count() == count_params(n1));
    CHECK(count_params(genome_architecture(g, in)) == n1.parameter_count());
  }
}

TEST_CASE("genome text: exact round trip and strict parsing") {
  SearchSpace space;
  IdAllocator ids;
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = random_genome(rng, space, ids, kDefaultInputShape);
    g.parent_ids = {static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(trial + 7)};
    const auto back = genome_from_text(to_text(g));
    CHECK(back == g);
    CHECK(to_text(back) == to_text(g));
  }
  CHECK_THROWS_AS(genome_from_text("id=1 parents= lr=0.1 momentum=0.5 batch=32 features=0 head=0 color=red"),
                  std::invalid_argument);
  CHECK_THROWS_AS(genome_from_text("id=1 parents= lr=abc momentum=0.5 batch=32 features=0 head=0"),
                  std::invalid_argument);
  CHECK_THROWS_AS(genome_from_text("id=1 parents= lr=0.1 momentum=0.5 batch=32 features=1 head=0"),
                  std::invalid_argument);
}
