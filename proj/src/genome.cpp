#include "evonas/genome.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace evonas {

namespace {

std::vector<int> int_range(int lo, int hi) {
  std::vector<int> v;
  for (int x = lo; x <= hi; ++x) v.push_back(x);
  return v;
}

int uniform_pick(Rng& rng, const std::vector<int>& values) { return values[rng.index(values.size())]; }

// beta * prior + (1 - beta) * uniform over `domain`.
int mixed_pick(Rng& rng, const std::vector<int>& domain, const Categorical* prior, double beta) {
  if (prior == nullptr) return uniform_pick(rng, domain);
  std::vector<double> w(domain.size());
  const double u = 1.0 / static_cast<double>(domain.size());
  double total = 0.0;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    w[i] = beta * prior->weight_of(domain[i]) + (1.0 - beta) * u;
    total += w[i];
  }
  // A prior with no mass inside the domain degrades to uniform.
  if (!(total > 0.0)) return uniform_pick(rng, domain);
  return domain[rng.categorical(w)];
}

int log_uniform_int(Rng& rng, int lo, int hi) {
  const double x = std::exp(rng.uniform(std::log(static_cast<double>(lo)), std::log(static_cast<double>(hi) + 1.0)));
  return std::clamp(static_cast<int>(std::floor(x)), lo, hi);
}

ConvGene random_conv(Rng& rng, const SearchSpace& space, const ThroughputPrior* prior) {
  ConvGene g;
  const double beta = prior ? prior->beta : 0.0;
  g.out_channels = mixed_pick(rng, space.out_channels, prior ? &prior->out_channels : nullptr, beta);
  g.kernel = mixed_pick(rng, space.kernels(), prior ? &prior->kernel : nullptr, beta);
  g.stride = mixed_pick(rng, space.strides(), prior ? &prior->stride : nullptr, beta);
  g.relu = rng.bernoulli(0.8);
  return g;
}

PoolGene random_pool(Rng& rng, const SearchSpace& space) {
  PoolGene g;
  g.size = uniform_pick(rng, space.pool_sizes);
  g.stride = static_cast<int>(rng.uniform_int(space.pool_stride_min, space.pool_stride_max));
  return g;
}

FeatureGene random_feature(Rng& rng, const SearchSpace& space, const ThroughputPrior* prior) {
  if (rng.bernoulli(space.conv_probability)) return random_conv(rng, space, prior);
  return random_pool(rng, space);
}

DenseGene random_dense(Rng& rng, const SearchSpace& space) { return {log_uniform_int(rng, space.dense_min, space.dense_max)}; }

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

std::string fmt_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("genome record: bad number '" + s + "' for " + key);
  }
  return x;
}

long long parse_int(const std::string& s, const std::string& key) {
  long long x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("genome record: bad integer '" + s + "' for " + key);
  }
  return x;
}

// Parses "name(k1=v1,k2=v2)" into name and field map.
std::pair<std::string, std::map<std::string, std::string>> parse_call(const std::string& s, const std::string& key) {
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')') {
    throw std::invalid_argument("genome record: malformed layer '" + s + "' for " + key);
  }
  std::map<std::string, std::string> fields;
  std::stringstream ss(s.substr(open + 1, s.size() - open - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("genome record: malformed field '" + item + "'");
    fields[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return {s.substr(0, open), fields};
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& k, const std::string& ctx) {
  auto it = m.find(k);
  if (it == m.end()) throw std::invalid_argument("genome record: missing '" + k + "' in " + ctx);
  return it->second;
}

}  // namespace

bool Genome::same_structure(const Genome& other) const {
  return features == other.features && head == other.head && learn == other.learn;
}

void SearchSpace::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("search space: " + what); };
  if (out_channels.empty()) fail("out_channels is empty");
  for (int c : out_channels) {
    if (c < 1) fail("out_channels must be >= 1");
  }
  if (kernel_min < 1 || kernel_max < kernel_min) fail("kernel range is empty");
  if (stride_min < 1 || stride_max < stride_min) fail("stride range is empty");
  if (pool_sizes.empty()) fail("pool_sizes is empty");
  if (pool_stride_min < 1 || pool_stride_max < pool_stride_min) fail("pool stride range is empty");
  if (dense_min < 1 || dense_max < dense_min) fail("dense range is empty");
  if (max_feature_layers < min_feature_layers) fail("feature layer range is empty");
  if (batch_sizes.empty()) fail("batch_sizes is empty");
  if (!(lr_min > 0.0) || lr_max < lr_min) fail("lr range is empty");
  if (momentum_max < 0.0 || momentum_max >= 1.0) fail("momentum_max must be in [0, 1)");
  if (conv_probability < 0.0 || conv_probability > 1.0) fail("conv_probability must be in [0, 1]");
}

std::vector<int> SearchSpace::kernels() const { return int_range(kernel_min, kernel_max); }
std::vector<int> SearchSpace::strides() const { return int_range(stride_min, stride_max); }

double Categorical::weight_of(int value) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == value) return weights[i];
  }
  return 0.0;
}

int Categorical::mode() const {
  if (values.empty()) throw std::logic_error("Categorical::mode on empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (weights[i] > weights[best]) best = i;
  }
  return values[best];
}

bool ThroughputPrior::valid(double tolerance) const {
  if (beta < 0.0 || beta > 1.0) return false;
  for (const Categorical* c : {&out_channels, &kernel, &stride}) {
    if (c->values.size() != c->weights.size() || c->values.empty()) return false;
    double sum = 0.0;
    for (double w : c->weights) {
      if (w < 0.0) return false;
      sum += w;
    }
    if (std::abs(sum - 1.0) > tolerance) return false;
  }
  return true;
}

ThroughputPrior ThroughputPrior::delta(int out_channels, int kernel, int stride, double beta) {
  return {{{out_channels}, {1.0}}, {{kernel}, {1.0}}, {{stride}, {1.0}}, beta};
}

std::string ShapeError::message() const {
  return "feature layer " + std::to_string(layer) + ": window " + std::to_string(window) + " exceeds input " +
         dimension + " " + std::to_string(extent);
}

ShapeTrace validate_shapes(const Genome& genome, const Dims& input_shape) {
  ShapeTrace tr;
  Dims cur = input_shape;
  auto window_check = [&](std::size_t i, int window) -> bool {
    const auto win = static_cast<std::size_t>(window);
    if (win > cur.h || win > cur.w) {
      tr.error = ShapeError{i, win > cur.h ? "height" : "width", win > cur.h ? cur.h : cur.w, win};
      return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < genome.features.size(); ++i) {
    if (const auto* c = std::get_if<ConvGene>(&genome.features[i])) {
      if (!window_check(i, c->kernel)) return tr;
      cur = {static_cast<std::size_t>(c->out_channels), window_output_extent(cur.h, c->kernel, c->stride),
             window_output_extent(cur.w, c->kernel, c->stride)};
      tr.steps.push_back({"conv", cur});
      if (c->relu) tr.steps.push_back({"relu", cur});
    } else {
      const auto& p = std::get<PoolGene>(genome.features[i]);
      if (!window_check(i, p.size)) return tr;
      cur = {cur.c, window_output_extent(cur.h, p.size, p.stride), window_output_extent(cur.w, p.size, p.stride)};
      tr.steps.push_back({"pool", cur});
    }
  }
  cur = {cur.size(), 1, 1};
  tr.steps.push_back({"flatten", cur});
  for (const auto& d : genome.head) {
    cur = {static_cast<std::size_t>(d.units), 1, 1};
    tr.steps.push_back({"dense", cur});
    tr.steps.push_back({"relu", cur});
  }
  tr.steps.push_back({"dense", {kClassCount, 1, 1}});
  return tr;
}

Genome repair(Genome genome, const Dims& input_shape) {
  for (;;) {
    const ShapeTrace tr = validate_shapes(genome, input_shape);
    if (tr.ok()) return genome;
    const ShapeError& e = *tr.error;
    // smallest incoming extent bounds the window that fits
    Dims in = input_shape;
    for (std::size_t i = 0; i < e.layer; ++i) {
      if (const auto* c = std::get_if<ConvGene>(&genome.features[i])) {
        in = {static_cast<std::size_t>(c->out_channels), window_output_extent(in.h, c->kernel, c->stride),
              window_output_extent(in.w, c->kernel, c->stride)};
      } else {
        const auto& p = std::get<PoolGene>(genome.features[i]);
        in = {in.c, window_output_extent(in.h, p.size, p.stride), window_output_extent(in.w, p.size, p.stride)};
      }
    }
    const int fit = static_cast<int>(std::min(in.h, in.w));
    auto& gene = genome.features[e.layer];
    if (auto* c = std::get_if<ConvGene>(&gene)) {
      c->kernel = std::max(1, fit);
    } else if (auto* p = std::get_if<PoolGene>(&gene); p != nullptr && fit >= 2) {
      p->size = fit;
    } else {
      genome.features.erase(genome.features.begin() + static_cast<std::ptrdiff_t>(e.layer));
    }
  }
}

Genome random_genome(Rng& rng, const SearchSpace& space, IdAllocator& ids, const Dims& input_shape,
                     const ThroughputPrior* prior) {
  space.validate();
  Genome g;
  const auto n_features = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(space.min_feature_layers), static_cast<std::int64_t>(space.max_feature_layers)));
  // Layers are drawn against the running map size so sampled values are kept
  // as drawn; a layer that does not fit is redrawn a few times, then the chain ends.
  Dims cur = input_shape;
  for (std::size_t i = 0; i < n_features; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
      FeatureGene gene = random_feature(rng, space, prior);
      const auto [window, stride] = std::visit(
          [](const auto& x) -> std::pair<int, int> {
            if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ConvGene>) {
              return {x.kernel, x.stride};
            } else {
              return {x.size, x.stride};
            }
          },
          gene);
      const auto win = static_cast<std::size_t>(window);
      if (win > cur.h || win > cur.w) continue;
      cur = {cur.c, window_output_extent(cur.h, win, static_cast<std::size_t>(stride)),
             window_output_extent(cur.w, win, static_cast<std::size_t>(stride))};
      g.features.push_back(gene);
      placed = true;
    }
    if (!placed) break;
  }
  const auto n_head = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(space.max_head_layers)));
  for (std::size_t i = 0; i < n_head; ++i) g.head.push_back(random_dense(rng, space));
  g.learn.lr = log_uniform(rng, space.lr_min, space.lr_max);
  g.learn.momentum = rng.uniform(0.0, space.momentum_max);
  g.learn.batch_size = uniform_pick(rng, space.batch_sizes);
  g.id = ids.next();
  return repair(std::move(g), input_shape);
}

Genome mutate(const Genome& parent, Rng& rng, const MutationRates& rates, const SearchSpace& space, IdAllocator& ids,
              const Dims& input_shape, const ThroughputPrior* prior) {
  Genome child = parent;
  child.id = ids.next();
  child.parent_ids = {parent.id};

  const bool do_perturb = rng.bernoulli(rates.perturb_hparam);
  const bool do_add = rng.bernoulli(rates.add_layer);
  const bool do_remove = rng.bernoulli(rates.remove_layer);
  const bool do_lr = rng.bernoulli(rates.perturb_lr);
  const double beta = prior ? prior->beta : 0.0;

  if (do_perturb) {
    const std::size_t total = child.features.size() + child.head.size();
    if (total > 0) {
      const std::size_t pick = rng.index(total);
      if (pick < child.features.size()) {
        auto& gene = child.features[pick];
        if (auto* c = std::get_if<ConvGene>(&gene)) {
          switch (rng.index(4)) {
            case 0:
              c->out_channels = mixed_pick(rng, space.out_channels, prior ? &prior->out_channels : nullptr, beta);
              break;
            case 1:
              c->kernel = mixed_pick(rng, space.kernels(), prior ? &prior->kernel : nullptr, beta);
              break;
            case 2:
              c->stride = mixed_pick(rng, space.strides(), prior ? &prior->stride : nullptr, beta);
              break;
            default:
              c->relu = !c->relu;
          }
        } else {
          auto& p = std::get<PoolGene>(gene);
          if (rng.bernoulli(0.5)) {
            p.size = uniform_pick(rng, space.pool_sizes);
          } else {
            p.stride = static_cast<int>(rng.uniform_int(space.pool_stride_min, space.pool_stride_max));
          }
        }
      } else {
        child.head[pick - child.features.size()] = random_dense(rng, space);
      }
    }
  }

  if (do_add) {
    if (child.head.size() < space.max_head_layers && rng.bernoulli(0.25)) {
      const std::size_t at = rng.index(child.head.size() + 1);
      child.head.insert(child.head.begin() + static_cast<std::ptrdiff_t>(at), random_dense(rng, space));
    } else if (child.features.size() < space.max_feature_layers) {
      const std::size_t at = rng.index(child.features.size() + 1);
      child.features.insert(child.features.begin() + static_cast<std::ptrdiff_t>(at),
                            random_feature(rng, space, prior));
    }
  }

  if (do_remove) {
    if (!child.head.empty() && rng.bernoulli(0.25)) {
      child.head.erase(child.head.begin() + static_cast<std::ptrdiff_t>(rng.index(child.head.size())));
    } else if (child.features.size() > std::max<std::size_t>(1, space.min_feature_layers)) {
      child.features.erase(child.features.begin() + static_cast<std::ptrdiff_t>(rng.index(child.features.size())));
    }
  }

  if (do_lr) {
    // multiplicative log-uniform factor in [1/3, 3]
    child.learn.lr = std::clamp(child.learn.lr * std::exp(rng.uniform(-std::log(3.0), std::log(3.0))), 1e-5, 1.0);
    child.learn.momentum = std::clamp(child.learn.momentum + rng.uniform(-0.05, 0.05), 0.0, space.momentum_max);
    if (rng.bernoulli(1.0 / 3.0)) child.learn.batch_size = uniform_pick(rng, space.batch_sizes);
  }

  return repair(std::move(child), input_shape);
}

Genome crossover_at(const Genome& a, const Genome& b, std::size_t cut, Rng& rng, IdAllocator& ids,
                    const Dims& input_shape, std::size_t max_feature_layers) {
  cut = std::min({cut, a.features.size(), b.features.size()});
  Genome child;
  child.features.assign(a.features.begin(), a.features.begin() + static_cast<std::ptrdiff_t>(cut));
  child.features.insert(child.features.end(), b.features.begin() + static_cast<std::ptrdiff_t>(cut),
                        b.features.end());
  if (child.features.size() > max_feature_layers) child.features.resize(max_feature_layers);
  child.head = b.head;
  child.learn.lr = rng.bernoulli(0.5) ? a.learn.lr : b.learn.lr;
  child.learn.momentum = rng.bernoulli(0.5) ? a.learn.momentum : b.learn.momentum;
  child.learn.batch_size = rng.bernoulli(0.5) ? a.learn.batch_size : b.learn.batch_size;
  child.id = ids.next();
  child.parent_ids = {a.id, b.id};
  return repair(std::move(child), input_shape);
}

Genome crossover(const Genome& a, const Genome& b, Rng& rng, IdAllocator& ids, const Dims& input_shape,
                 std::size_t max_feature_layers) {
  const std::size_t shorter = std::min(a.features.size(), b.features.size());
  const std::size_t cut = rng.index(shorter + 1);
  return crossover_at(a, b, cut, rng, ids, input_shape, max_feature_layers);
}

Architecture genome_architecture(const Genome& genome, const Dims& input_shape) {
  Architecture arch{input_shape, {}};
  Dims cur = input_shape;
  auto push = [&](LayerSpec spec) {
    try {
      cur = output_dims(spec, cur);
    } catch (const ShapeMismatch& e) {
      throw ShapeMismatch("genome " + std::to_string(genome.id) + " layer " + std::to_string(arch.layers.size()) +
                          ": " + e.what());
    }
    arch.layers.push_back(std::move(spec));
  };
  for (const auto& gene : genome.features) {
    if (const auto* c = std::get_if<ConvGene>(&gene)) {
      push(ConvSpec{cur.c, static_cast<std::size_t>(c->out_channels), static_cast<std::size_t>(c->kernel),
                    static_cast<std::size_t>(c->stride)});
      if (c->relu) push(ReluSpec{});
    } else {
      const auto& p = std::get<PoolGene>(gene);
      push(PoolSpec{static_cast<std::size_t>(p.size), static_cast<std::size_t>(p.stride)});
    }
  }
  push(FlattenSpec{});
  for (const auto& d : genome.head) {
    push(DenseSpec{cur.c, static_cast<std::size_t>(d.units)});
    push(ReluSpec{});
  }
  push(DenseSpec{cur.c, kClassCount});
  return arch;
}

template <typename T>
Network<T> instantiate(const Genome& genome, const Dims& input_shape, std::uint64_t seed) {
  const Architecture arch = genome_architecture(genome, input_shape);
  std::vector<Layer<T>> layers;
  layers.reserve(arch.layers.size());
  for (const auto& spec : arch.layers) {
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      layers.emplace_back(Conv2d<T>::zeros(c->in_channels, c->out_channels, c->kernel, c->stride));
    } else if (const auto* p = std::get_if<PoolSpec>(&spec)) {
      layers.emplace_back(MaxPool{p->size, p->stride});
    } else if (std::holds_alternative<ReluSpec>(spec)) {
      layers.emplace_back(ReLU{});
    } else if (std::holds_alternative<FlattenSpec>(spec)) {
      layers.emplace_back(Flatten{});
    } else {
      const auto& d = std::get<DenseSpec>(spec);
      layers.emplace_back(Dense<T>::zeros(d.in_units, d.out_units));
    }
  }
  Network<T> net(input_shape, std::move(layers));
  net.initialize(seed);
  return net;
}

template Network<float> instantiate<float>(const Genome&, const Dims&, std::uint64_t);
template Network<double> instantiate<double>(const Genome&, const Dims&, std::uint64_t);

std::string to_text(const Genome& genome) {
  std::ostringstream os;
  os << "id=" << genome.id << " parents=";
  for (std::size_t i = 0; i < genome.parent_ids.size(); ++i) os << (i ? "," : "") << genome.parent_ids[i];
  os << " lr=" << fmt_double(genome.learn.lr) << " momentum=" << fmt_double(genome.learn.momentum)
     << " batch=" << genome.learn.batch_size << " features=" << genome.features.size();
  for (std::size_t i = 0; i < genome.features.size(); ++i) {
    os << " f" << i << "=";
    if (const auto* c = std::get_if<ConvGene>(&genome.features[i])) {
      os << "conv(out=" << c->out_channels << ",k=" << c->kernel << ",s=" << c->stride << ",relu=" << (c->relu ? 1 : 0)
         << ")";
    } else {
      const auto& p = std::get<PoolGene>(genome.features[i]);
      os << "pool(size=" << p.size << ",s=" << p.stride << ")";
    }
  }
  os << " head=" << genome.head.size();
  for (std::size_t i = 0; i < genome.head.size(); ++i) os << " h" << i << "=dense(units=" << genome.head[i].units << ")";
  return os.str();
}

Genome genome_from_text(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("genome record: token without '=': " + tok);
    if (!kv.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
      throw std::invalid_argument("genome record: duplicate key " + tok.substr(0, eq));
    }
  }
  Genome g;
  g.id = static_cast<std::uint64_t>(parse_int(need(kv, "id", "genome"), "id"));
  const std::string& parents = need(kv, "parents", "genome");
  if (!parents.empty()) {
    std::stringstream ps(parents);
    std::string p;
    while (std::getline(ps, p, ',')) g.parent_ids.push_back(static_cast<std::uint64_t>(parse_int(p, "parents")));
  }
  g.learn.lr = parse_double(need(kv, "lr", "genome"), "lr");
  g.learn.momentum = parse_double(need(kv, "momentum", "genome"), "momentum");
  g.learn.batch_size = static_cast<int>(parse_int(need(kv, "batch", "genome"), "batch"));
  const auto n_features = parse_int(need(kv, "features", "genome"), "features");
  std::size_t expected_keys = 6 + static_cast<std::size_t>(n_features);
  for (long long i = 0; i < n_features; ++i) {
    const std::string key = "f" + std::to_string(i);
    auto [name, fields] = parse_call(need(kv, key, "genome"), key);
    if (name == "conv") {
      g.features.emplace_back(ConvGene{static_cast<int>(parse_int(need(fields, "out", key), key)),
                                       static_cast<int>(parse_int(need(fields, "k", key), key)),
                                       static_cast<int>(parse_int(need(fields, "s", key), key)),
                                       parse_int(need(fields, "relu", key), key) != 0});
    } else if (name == "pool") {
      g.features.emplace_back(PoolGene{static_cast<int>(parse_int(need(fields, "size", key), key)),
                                       static_cast<int>(parse_int(need(fields, "s", key), key))});
    } else {
      throw std::invalid_argument("genome record: unknown feature layer '" + name + "'");
    }
  }
  const auto n_head = parse_int(need(kv, "head", "genome"), "head");
  expected_keys += 1 + static_cast<std::size_t>(n_head);
  for (long long i = 0; i < n_head; ++i) {
    const std::string key = "h" + std::to_string(i);
    auto [name, fields] = parse_call(need(kv, key, "genome"), key);
    if (name != "dense") throw std::invalid_argument("genome record: unknown head layer '" + name + "'");
    g.head.push_back({static_cast<int>(parse_int(need(fields, "units", key), key))});
  }
  if (kv.size() != expected_keys) throw std::invalid_argument("genome record: unexpected extra keys");
  return g;
}

}  // namespace evonas
