#include "evonas/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

namespace evonas {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct BadValue {
  std::string message;
};

long long to_int(const std::string& v, long long min) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw BadValue{"'" + v + "' is not an integer"};
  }
  if (used != v.size()) throw BadValue{"'" + v + "' is not an integer"};
  if (x < min) throw BadValue{"must be >= " + std::to_string(min)};
  return x;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw BadValue{"'" + v + "' is not a number"};
  }
  if (used != v.size() || std::isnan(x)) throw BadValue{"'" + v + "' is not a number"};
  return x;
}

double to_probability(const std::string& v) {
  const double x = to_double(v);
  if (x < 0.0 || x > 1.0) throw BadValue{"must be in [0, 1]"};
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw BadValue{"'" + v + "' is not a boolean"};
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(static_cast<int>(to_int(trim(item), 1)));
  if (out.empty()) throw BadValue{"empty list"};
  return out;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto ga = [](RunConfig& c) -> GaConfig& { return c.evolution.ga; };
    auto space = [](RunConfig& c) -> SearchSpace& { return c.evolution.ga.space; };

    t["seed"] = [=](RunConfig& c, const std::string& v) {
      ga(c).seed = static_cast<std::uint64_t>(to_int(v, 0));
    };
    t["data.path"] = [](RunConfig& c, const std::string& v) {
      if (v.empty()) throw BadValue{"empty path"};
      c.data_path = v;
    };
    t["split.train"] = [](RunConfig& c, const std::string& v) { c.split.train = to_probability(v); };
    t["split.val"] = [](RunConfig& c, const std::string& v) { c.split.val = to_probability(v); };
    t["split.test"] = [](RunConfig& c, const std::string& v) { c.split.test = to_probability(v); };
    t["split.seed"] = [](RunConfig& c, const std::string& v) { c.split_seed = static_cast<std::uint64_t>(to_int(v, 0)); };

    t["ga.population"] = [=](RunConfig& c, const std::string& v) {
      ga(c).population = static_cast<std::size_t>(to_int(v, 2));
    };
    t["ga.elites"] = [=](RunConfig& c, const std::string& v) { ga(c).elites = static_cast<std::size_t>(to_int(v, 0)); };
    t["ga.tournament"] = [=](RunConfig& c, const std::string& v) {
      ga(c).tournament = static_cast<std::size_t>(to_int(v, 1));
    };
    t["ga.crossover_p"] = [=](RunConfig& c, const std::string& v) { ga(c).crossover_p = to_probability(v); };
    t["mutation.perturb_hparam"] = [=](RunConfig& c, const std::string& v) {
      ga(c).mutation.perturb_hparam = to_probability(v);
    };
    t["mutation.add_layer"] = [=](RunConfig& c, const std::string& v) { ga(c).mutation.add_layer = to_probability(v); };
    t["mutation.remove_layer"] = [=](RunConfig& c, const std::string& v) {
      ga(c).mutation.remove_layer = to_probability(v);
    };
    t["mutation.perturb_lr"] = [=](RunConfig& c, const std::string& v) { ga(c).mutation.perturb_lr = to_probability(v); };

    t["space.out_channels"] = [=](RunConfig& c, const std::string& v) { space(c).out_channels = to_int_list(v); };
    t["space.kernel_min"] = [=](RunConfig& c, const std::string& v) { space(c).kernel_min = static_cast<int>(to_int(v, 1)); };
    t["space.kernel_max"] = [=](RunConfig& c, const std::string& v) { space(c).kernel_max = static_cast<int>(to_int(v, 1)); };
    t["space.stride_min"] = [=](RunConfig& c, const std::string& v) { space(c).stride_min = static_cast<int>(to_int(v, 1)); };
    t["space.stride_max"] = [=](RunConfig& c, const std::string& v) { space(c).stride_max = static_cast<int>(to_int(v, 1)); };
    t["space.pool_sizes"] = [=](RunConfig& c, const std::string& v) { space(c).pool_sizes = to_int_list(v); };
    t["space.pool_stride_min"] = [=](RunConfig& c, const std::string& v) {
      space(c).pool_stride_min = static_cast<int>(to_int(v, 1));
    };
    t["space.pool_stride_max"] = [=](RunConfig& c, const std::string& v) {
      space(c).pool_stride_max = static_cast<int>(to_int(v, 1));
    };
    t["space.dense_min"] = [=](RunConfig& c, const std::string& v) { space(c).dense_min = static_cast<int>(to_int(v, 1)); };
    t["space.dense_max"] = [=](RunConfig& c, const std::string& v) { space(c).dense_max = static_cast<int>(to_int(v, 1)); };
    t["space.min_feature_layers"] = [=](RunConfig& c, const std::string& v) {
      space(c).min_feature_layers = static_cast<std::size_t>(to_int(v, 0));
    };
    t["space.max_feature_layers"] = [=](RunConfig& c, const std::string& v) {
      space(c).max_feature_layers = static_cast<std::size_t>(to_int(v, 0));
    };
    t["space.max_head_layers"] = [=](RunConfig& c, const std::string& v) {
      space(c).max_head_layers = static_cast<std::size_t>(to_int(v, 0));
    };
    t["space.conv_probability"] = [=](RunConfig& c, const std::string& v) { space(c).conv_probability = to_probability(v); };
    t["space.batch_sizes"] = [=](RunConfig& c, const std::string& v) { space(c).batch_sizes = to_int_list(v); };
    t["space.lr_min"] = [=](RunConfig& c, const std::string& v) { space(c).lr_min = to_double(v); };
    t["space.lr_max"] = [=](RunConfig& c, const std::string& v) { space(c).lr_max = to_double(v); };
    t["space.momentum_max"] = [=](RunConfig& c, const std::string& v) { space(c).momentum_max = to_double(v); };

    t["prior.sweep_csv"] = [](RunConfig& c, const std::string& v) {
      if (v.empty()) throw BadValue{"empty path"};
      c.prior_sweep_csv = v;
    };
    t["prior.top_k"] = [](RunConfig& c, const std::string& v) { c.prior_top_k = static_cast<std::size_t>(to_int(v, 1)); };
    t["prior.beta"] = [](RunConfig& c, const std::string& v) { c.prior_beta = to_probability(v); };

    t["objective.kind"] = [](RunConfig& c, const std::string& v) {
      try {
        c.evolution.objective.kind = parse_objective_kind(v);
      } catch (const std::exception& e) {
        throw BadValue{e.what()};
      }
    };
    t["objective.alpha"] = [](RunConfig& c, const std::string& v) { c.evolution.objective.alpha = to_double(v); };
    t["objective.lo"] = [](RunConfig& c, const std::string& v) {
      auto b = c.evolution.objective.bounds.value_or(Bounds{});
      b.lo = to_double(v);
      c.evolution.objective.bounds = b;
    };
    t["objective.hi"] = [](RunConfig& c, const std::string& v) {
      auto b = c.evolution.objective.bounds.value_or(Bounds{});
      b.hi = to_double(v);
      c.evolution.objective.bounds = b;
    };
    t["objective.clamp"] = [](RunConfig& c, const std::string& v) { c.evolution.objective.clamp = to_bool(v); };
    t["calibration.k"] = [](RunConfig& c, const std::string& v) {
      c.evolution.calibration_k = static_cast<std::size_t>(to_int(v, 2));
    };

    t["budget.epochs"] = [](RunConfig& c, const std::string& v) { c.eval.budget.epochs = static_cast<int>(to_int(v, 1)); };
    t["budget.max_batches"] = [](RunConfig& c, const std::string& v) {
      c.eval.budget.max_batches_per_epoch = static_cast<std::size_t>(to_int(v, 1));
    };
    t["final.epochs"] = [](RunConfig& c, const std::string& v) { c.final_budget.epochs = static_cast<int>(to_int(v, 1)); };
    t["final.max_batches"] = [](RunConfig& c, const std::string& v) {
      c.final_budget.max_batches_per_epoch = static_cast<std::size_t>(to_int(v, 1));
    };
    t["eval.precision"] = [](RunConfig& c, const std::string& v) {
      try {
        c.eval.precision = parse_precision(v);
      } catch (const std::exception& e) {
        throw BadValue{e.what()};
      }
    };
    t["eval.max_params"] = [](RunConfig& c, const std::string& v) {
      c.eval.max_params = static_cast<std::uint64_t>(to_int(v, 1));
    };
    t["eval.latency_batch"] = [](RunConfig& c, const std::string& v) {
      c.eval.latency.batch_size = static_cast<std::size_t>(to_int(v, 1));
    };
    t["eval.latency_reps"] = [](RunConfig& c, const std::string& v) { c.eval.latency.reps = static_cast<int>(to_int(v, 1)); };
    t["eval.predict_batch"] = [](RunConfig& c, const std::string& v) {
      c.eval.predict_batch_size = static_cast<std::size_t>(to_int(v, 1));
    };

    t["stop.max_evaluations"] = [](RunConfig& c, const std::string& v) {
      c.evolution.stop.max_evaluations = static_cast<std::size_t>(to_int(v, 1));
    };
    t["stop.wall_clock_s"] = [](RunConfig& c, const std::string& v) {
      const double x = to_double(v);
      if (!(x > 0.0)) throw BadValue{"must be > 0"};
      c.evolution.stop.wall_clock_s = x;
    };

    t["pool.workers"] = [](RunConfig& c, const std::string& v) { c.evolution.pool.workers = static_cast<int>(to_int(v, 1)); };
    t["pool.transport"] = [](RunConfig& c, const std::string& v) {
      try {
        c.evolution.pool.transport = parse_transport(v);
      } catch (const std::exception& e) {
        throw BadValue{e.what()};
      }
    };
    t["pool.schedule"] = [](RunConfig& c, const std::string& v) {
      try {
        c.evolution.pool.schedule = parse_schedule(v);
      } catch (const std::exception& e) {
        throw BadValue{e.what()};
      }
    };
    t["pool.host"] = [](RunConfig& c, const std::string& v) {
      if (v.empty()) throw BadValue{"empty host"};
      c.evolution.pool.host = v;
    };
    t["pool.port"] = [](RunConfig& c, const std::string& v) {
      const long long p = to_int(v, 0);
      if (p > 65535) throw BadValue{"must be <= 65535"};
      c.evolution.pool.port = static_cast<std::uint16_t>(p);
    };
    t["pool.spawn_local_workers"] = [](RunConfig& c, const std::string& v) {
      c.evolution.pool.spawn_local_workers = to_bool(v);
    };
    t["pool.eval_timeout_s"] = [](RunConfig& c, const std::string& v) {
      const double x = to_double(v);
      if (!(x > 0.0)) throw BadValue{"must be > 0"};
      c.evolution.pool.eval_timeout_s = x;
    };
    t["out.dir"] = [](RunConfig& c, const std::string& v) {
      if (v.empty()) throw BadValue{"empty path"};
      c.out_dir = v;
    };
    return t;
  }();
  return table;
}

template <typename F>
void as_config_error(const std::string& key, F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

nlohmann::json RunConfig::echo() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries) j[k] = v;
  return j;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError(key, "unknown key");
  try {
    it->second(config, value);
  } catch (const BadValue& e) {
    throw ConfigError(key, e.message);
  }
  for (auto& [k, v] : config.entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  config.entries.emplace_back(key, value);
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(line_no) + " is not 'key = value'");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path);
  return parse_run_config(in);
}

void validate_run_config(RunConfig& config) {
  if (config.data_path.empty()) throw ConfigError("data.path", "required");
  const double total = config.split.train + config.split.val + config.split.test;
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split.train", "split fractions must sum to 1");
  if (config.split.val <= 0.0) throw ConfigError("split.val", "validation split must be non-empty");
  if (config.split.test <= 0.0) throw ConfigError("split.test", "test split must be non-empty");

  auto& ev = config.evolution;
  if (ev.ga.elites >= ev.ga.population) throw ConfigError("ga.elites", "must be smaller than ga.population");
  if (!ev.stop.max_evaluations && !ev.stop.wall_clock_s) {
    throw ConfigError("stop.max_evaluations", "set stop.max_evaluations or stop.wall_clock_s");
  }
  auto has = [&](const std::string& key) {
    for (const auto& [k, _] : config.entries) {
      if (k == key) return true;
    }
    return false;
  };
  if (has("objective.lo") != has("objective.hi")) {
    throw ConfigError(has("objective.lo") ? "objective.hi" : "objective.lo", "objective.lo and objective.hi go together");
  }
  if (ev.objective.bounds && !(ev.objective.bounds->lo < ev.objective.bounds->hi)) {
    throw ConfigError("objective.lo", "objective.lo must be below objective.hi");
  }
  as_config_error("space", [&] { ev.ga.space.validate(); });
  as_config_error("ga", [&] { ev.ga.validate(); });
  as_config_error("stop", [&] { ev.stop.validate(); });
  as_config_error("objective", [&] { ev.objective.validate(); });
  as_config_error("pool", [&] { ev.pool.validate(); });
  as_config_error("budget", [&] { config.eval.budget.validate(); });
  as_config_error("final", [&] { config.final_budget.validate(); });
  config.eval.objective = ev.objective;
}

}  // namespace evonas
