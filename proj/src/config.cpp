#include "nlmfm/config.hpp"

#include "nlmfm/csv.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace nlmfm {

namespace {

using json = nlohmann::json;

struct Field {
  ConfigKey key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const json& v) {
  if (!v.is_array() || v.empty()) throw std::invalid_argument("expected a non-empty list of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!v[r].is_array() || static_cast<Eigen::Index>(v[r].size()) != cols)
      throw std::invalid_argument("matrix rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[r][c].get<double>();
  }
  return m;
}

#define NLMFM_FIELD(NAME, TYPE, HELP, EXPR, CAST)                                                    \
  Field {                                                                                            \
    ConfigKey{NAME, TYPE, HELP}, [](const RunConfig& c) { return json(c.EXPR); },                    \
        [](RunConfig& c, const json& v) { c.EXPR = v.get<CAST>(); }                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      NLMFM_FIELD("chain.iterations", "int", "total iterations N", chain.iterations, long),
      NLMFM_FIELD("chain.burn_in", "int", "burn-in iterations N_b (adaptation only here)", chain.burn_in, long),
      NLMFM_FIELD("chain.thinning", "int", "store every k-th post-burn-in draw", chain.thinning, long),
      NLMFM_FIELD("chain.initial_factors", "int", "starting number of factors H", chain.initial_factors, int),
      NLMFM_FIELD("chain.max_factors", "int", "births are skipped at this many factors", chain.max_factors, int),
      NLMFM_FIELD("chain.atoms", "int", "truncation level K of the gamma process", chain.atoms, int),
      NLMFM_FIELD("chain.alpha", "double", "gamma-process mass; J_k ~ Gamma(alpha/K, 1)", chain.alpha, double),
      NLMFM_FIELD("chain.beta0", "double", "redundancy angle threshold (radians)", chain.beta0, double),
      NLMFM_FIELD("chain.adapt_b0", "double", "p_adapt = exp(-b0 - b1 iter)", chain.adapt_b0, double),
      NLMFM_FIELD("chain.adapt_b1", "double", "p_adapt = exp(-b0 - b1 iter)", chain.adapt_b1, double),
      NLMFM_FIELD("chain.adaptive", "bool", "birth/death of factors during burn-in", chain.adaptive, bool),
      NLMFM_FIELD("chain.seed", "uint", "random seed", chain.seed, std::uint64_t),
      NLMFM_FIELD("chain.rho", "double", "CAR dependence rho in (0, 1)", chain.rho, double),
      NLMFM_FIELD("chain.store_loglik", "bool", "keep per-observation log-likelihoods", chain.store_loglik, bool),
      NLMFM_FIELD("chain.invariance_moves", "bool", "moves along likelihood-invariant directions",
                  chain.invariance_moves, bool),
      Field{ConfigKey{"base.mu0", "optional-double", "atom location prior mean (null: pooled data mean)"},
            [](const RunConfig& c) { return c.chain.base.mu0 ? json(*c.chain.base.mu0) : json(nullptr); },
            [](RunConfig& c, const json& v) {
              if (v.is_null())
                c.chain.base.mu0.reset();
              else
                c.chain.base.mu0 = v.get<double>();
            }},
      NLMFM_FIELD("base.kappa0", "double", "mu | s2 ~ N(mu0, s2 / kappa0)", chain.base.kappa0, double),
      NLMFM_FIELD("base.a0", "double", "s2 ~ InvGamma(a0, b0)", chain.base.a0, double),
      NLMFM_FIELD("base.b0", "double", "s2 ~ InvGamma(a0, b0)", chain.base.b0, double),
      NLMFM_FIELD("scores.shape", "double", "m_hk ~ Gamma(shape, rate)", chain.score_shape, double),
      NLMFM_FIELD("scores.rate", "double", "m_hk ~ Gamma(shape, rate)", chain.score_rate, double),
      NLMFM_FIELD("regression.psi_mean", "double", "psi prior mean", chain.regression.psi_mean, double),
      NLMFM_FIELD("regression.psi_var", "double", "psi prior variance (0 pins psi)", chain.regression.psi_var, double),
      NLMFM_FIELD("regression.zeta_mean", "double", "zeta prior mean", chain.regression.zeta_mean, double),
      NLMFM_FIELD("regression.zeta_var", "double", "zeta prior variance (0 pins zeta)", chain.regression.zeta_var,
                  double),
      NLMFM_FIELD("regression.tau_shape", "double", "tau ~ Gamma(shape, rate)", chain.regression.tau_shape, double),
      NLMFM_FIELD("regression.tau_rate", "double", "tau ~ Gamma(shape, rate)", chain.regression.tau_rate, double),
      NLMFM_FIELD("regression.tau_gamma_shape", "double", "tau_gamma ~ Gamma(shape, rate)",
                  chain.regression.tau_gamma_shape, double),
      NLMFM_FIELD("regression.tau_gamma_rate", "double", "tau_gamma ~ Gamma(shape, rate)",
                  chain.regression.tau_gamma_rate, double),
      NLMFM_FIELD("mh.initial_step", "double", "initial random-walk sd on log lambda", chain.mh_initial_step, double),
      NLMFM_FIELD("mh.target_acceptance", "double", "burn-in step tuning target", chain.mh_target_acceptance, double),
      NLMFM_FIELD("mh.batch", "int", "iterations per tuning batch", chain.mh_batch, long),
      NLMFM_FIELD("grid.points", "int", "evaluation grid size", chain.grid.points, long),
      Field{ConfigKey{"grid.lo", "optional-double", "grid lower end (null: data min - padding)"},
            [](const RunConfig& c) { return c.chain.grid.lo ? json(*c.chain.grid.lo) : json(nullptr); },
            [](RunConfig& c, const json& v) {
              if (v.is_null())
                c.chain.grid.lo.reset();
              else
                c.chain.grid.lo = v.get<double>();
            }},
      Field{ConfigKey{"grid.hi", "optional-double", "grid upper end (null: data max + padding)"},
            [](const RunConfig& c) { return c.chain.grid.hi ? json(*c.chain.grid.hi) : json(nullptr); },
            [](RunConfig& c, const json& v) {
              if (v.is_null())
                c.chain.grid.hi.reset();
              else
                c.chain.grid.hi = v.get<double>();
            }},
      NLMFM_FIELD("grid.padding", "double", "widening of the data range", chain.grid.padding, double),
      NLMFM_FIELD("simulation.areas", "int", "number of areas g", simulation.areas, long),
      NLMFM_FIELD("simulation.per_area", "int", "observations per area n_j", simulation.per_area, long),
      NLMFM_FIELD("simulation.covariates", "int", "number of covariates p", simulation.covariates, long),
      Field{ConfigKey{"simulation.means", "list", "component means"},
            [](const RunConfig& c) {
              return json(std::vector<double>(c.simulation.means.data(),
                                              c.simulation.means.data() + c.simulation.means.size()));
            },
            [](RunConfig& c, const json& v) {
              const auto xs = v.get<std::vector<double>>();
              c.simulation.means = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
            }},
      NLMFM_FIELD("simulation.sd", "double", "component standard deviation", simulation.sd, double),
      Field{ConfigKey{"simulation.zeta", "matrix", "main effects, one row per component"},
            [](const RunConfig& c) { return matrix_json(c.simulation.zeta); },
            [](RunConfig& c, const json& v) { c.simulation.zeta = json_matrix(v); }},
      NLMFM_FIELD("simulation.interaction_sd", "double", "sd of the area interactions", simulation.interaction_sd,
                  double),
      NLMFM_FIELD("simulation.beta_a", "double", "covariates ~ Beta(a, b)", simulation.beta_a, double),
      NLMFM_FIELD("simulation.beta_b", "double", "covariates ~ Beta(a, b)", simulation.beta_b, double),
      NLMFM_FIELD("simulation.seed", "uint", "simulation seed", simulation.seed, std::uint64_t),
      Field{ConfigKey{"paths.data", "string", "dataset directory"},
            [](const RunConfig& c) { return json(c.data.string()); },
            [](RunConfig& c, const json& v) { c.data = v.get<std::string>(); }},
      Field{ConfigKey{"paths.out", "string", "output directory"},
            [](const RunConfig& c) { return json(c.out.string()); },
            [](RunConfig& c, const json& v) { c.out = v.get<std::string>(); }},
      Field{ConfigKey{"paths.periods", "string-list", "period labels to fit (empty: all)"},
            [](const RunConfig& c) { return json(c.periods); },
            [](RunConfig& c, const json& v) { c.periods = v.get<std::vector<std::string>>(); }},
  };
  return table;
}

#undef NLMFM_FIELD

const Field* find_field(const std::string& name) {
  for (const auto& f : fields())
    if (f.key.name == name) return &f;
  return nullptr;
}

// Converts a YAML node to JSON according to the declared key type.
json yaml_value(const YAML::Node& node, const std::string& type) {
  if (type == "optional-double") {
    if (node.IsNull()) return nullptr;
    return node.as<double>();
  }
  if (type == "int") return node.as<long>();
  if (type == "uint") {
    if (node.Scalar().starts_with('-')) throw std::invalid_argument("must be non-negative");
    return node.as<std::uint64_t>();
  }
  if (type == "double") return node.as<double>();
  if (type == "bool") return node.as<bool>();
  if (type == "string") return node.as<std::string>();
  if (type == "list") return node.as<std::vector<double>>();
  if (type == "string-list") return node.as<std::vector<std::string>>();
  if (type == "matrix") return node.as<std::vector<std::vector<double>>>();
  throw std::logic_error("unknown config type " + type);
}

std::string where(const std::string& origin, const YAML::Mark& mark) {
  if (mark.is_null()) return origin;
  return origin + ":" + std::to_string(mark.line + 1);
}

void apply_yaml(RunConfig& config, const YAML::Node& root, const std::string& origin) {
  if (root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError(where(origin, root.Mark()) + ": top level must be a mapping of sections");
  for (const auto& section : root) {
    const auto sname = section.first.as<std::string>();
    if (!section.second.IsMap()) {
      if (section.second.IsNull()) continue;
      throw ConfigError(where(origin, section.first.Mark()) + ": section '" + sname + "' must be a mapping");
    }
    for (const auto& entry : section.second) {
      const auto name = sname + "." + entry.first.as<std::string>();
      const Field* field = find_field(name);
      if (!field) throw ConfigError(where(origin, entry.first.Mark()) + ": unknown key '" + name + "'");
      try {
        field->set(config, yaml_value(entry.second, field->key.type));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception&) {
        throw ConfigError(where(origin, entry.second.Mark()) + ": '" + name + "' expects a value of type " +
                          field->key.type);
      }
    }
  }
}

void apply_overrides(RunConfig& config, const Overrides& overrides) {
  for (const auto& [name, text] : overrides) {
    const Field* field = find_field(name);
    if (!field) throw ConfigError("override --" + name + ": unknown key");
    try {
      field->set(config, yaml_value(YAML::Load(text), field->key.type));
    } catch (const std::exception&) {
      throw ConfigError("override --" + name + ": '" + text + "' is not a valid " + field->key.type);
    }
  }
}

void checked(RunConfig& config) {
  try {
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  chain.validate();
  simulation.validate();
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin, const Overrides& overrides) {
  RunConfig config;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(where(origin, e.mark) + ": " + e.msg);
  }
  apply_yaml(config, root, origin);
  apply_overrides(config, overrides);
  checked(config);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::string text;
  try {
    text = csv::read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, path.string(), overrides);
}

RunConfig default_run_config(const Overrides& overrides) {
  RunConfig config;
  apply_overrides(config, overrides);
  checked(config);
  return config;
}

nlohmann::json run_config_json(const RunConfig& config) {
  json tree = json::object();
  for (const auto& f : fields()) {
    const auto dot = f.key.name.find('.');
    tree[f.key.name.substr(0, dot)][f.key.name.substr(dot + 1)] = f.get(config);
  }
  return tree;
}

RunConfig run_config_from_json(const nlohmann::json& tree) {
  RunConfig config;
  for (const auto& [section, entries] : tree.items()) {
    for (const auto& [key, value] : entries.items()) {
      const Field* field = find_field(section + "." + key);
      if (!field) throw ConfigError("unknown key '" + section + "." + key + "' in JSON configuration");
      try {
        field->set(config, value);
      } catch (const std::exception&) {
        throw ConfigError("'" + section + "." + key + "' has the wrong type in JSON configuration");
      }
    }
  }
  checked(config);
  return config;
}

std::string run_config_yaml(const RunConfig& config) {
  // JSON scalars and arrays are valid YAML flow syntax; doubles are printed
  // with enough digits to round-trip.
  const json tree = run_config_json(config);
  std::string out;
  for (const auto& [section, entries] : tree.items()) {
    out += section + ":\n";
    for (const auto& [key, value] : entries.items()) out += "  " + key + ": " + value.dump() + "\n";
  }
  return out;
}

nlohmann::json chain_config_json(const ChainConfig& config) {
  RunConfig run;
  run.chain = config;
  json tree = run_config_json(run);
  tree.erase("simulation");
  tree.erase("paths");
  return tree;
}

ChainConfig chain_config_from_json(const nlohmann::json& tree) { return run_config_from_json(tree).chain; }

}  // namespace nlmfm
