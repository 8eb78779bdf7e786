#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evonas/evaluator.hpp"
#include "evonas/evolution.hpp"
#include "evonas/patchset.hpp"

namespace evonas {

// Bad or unknown configuration entry; key() names it.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Everything `evolve` needs. Built from flat "key = value" lines.
struct RunConfig {
  EvolutionConfig evolution;
  EvalConfig eval;
  std::string data_path;
  SplitFractions split{0.7, 0.15, 0.15};
  std::uint64_t split_seed = 1;
  TrainBudget final_budget{4, std::nullopt};
  std::string out_dir = "out";
  std::optional<std::string> prior_sweep_csv;
  std::size_t prior_top_k = 10;
  double prior_beta = 1.0;

  // Accepted entries in the order they were set; a later set of the same key
  // replaces the value in place.
  std::vector<std::pair<std::string, std::string>> entries;

  // Entries as a JSON object of strings, for the run-log header.
  nlohmann::json echo() const;
};

// Every accepted key, sorted.
std::vector<std::string> config_keys();

// Sets one key; throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Parses "key = value" lines; '#' starts a comment. Does not validate.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// Cross-field checks and required keys (data.path). Throws ConfigError naming
// the offending key. Copies the objective into the evaluator settings.
void validate_run_config(RunConfig& config);

}  // namespace evonas
