#pragma once
#ifndef NLMFM_CONFIG_HPP
#define NLMFM_CONFIG_HPP

// Run configuration: one YAML file with nested sections. Every key is listed
// in config_schema(); unknown keys are errors. Command-line overrides use
// the dotted key, e.g. `--chain.seed 7`.

#include "nlmfm/sampler.hpp"
#include "nlmfm/simgen.hpp"

#include "json.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nlmfm {

/// Raised for malformed or invalid configuration; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  ChainConfig chain;
  SimConfig simulation;
  std::filesystem::path data;  // dataset directory for fit
  std::filesystem::path out;   // output directory
  std::vector<std::string> periods;  // period labels to fit; empty means all

  void validate() const;
};

struct ConfigKey {
  std::string name;  // "section.key"
  std::string type;  // int, uint, double, bool, string, optional-double, list, matrix, string-list
  std::string help;
};
const std::vector<ConfigKey>& config_schema();

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses YAML text; `origin` names the source in error messages, which
/// carry the 1-based line of the offending node.
RunConfig parse_run_config(const std::string& text, const std::string& origin, const Overrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});
/// Defaults plus overrides, for commands run without a config file.
RunConfig default_run_config(const Overrides& overrides = {});

/// Nested JSON echo of every key (sections as objects).
nlohmann::json run_config_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& tree);
/// YAML text that parse_run_config reads back to the same configuration.
std::string run_config_yaml(const RunConfig& config);

nlohmann::json chain_config_json(const ChainConfig& config);
ChainConfig chain_config_from_json(const nlohmann::json& tree);

}  // namespace nlmfm

#endif  // NLMFM_CONFIG_HPP
