#pragma once

// Experiment configuration: the JSON schema read by the CLI and its
// resolution into concrete models, policies and functionals.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tdboot/bootstrap.hpp"
#include "tdboot/env.hpp"
#include "tdboot/errors.hpp"
#include "tdboot/features.hpp"
#include "tdboot/lsa.hpp"

namespace tdboot {

enum class EnvKind { gridworld, random_mdp, two_state, external };

struct EnvSpec {
  EnvKind kind = EnvKind::two_state;
  // gridworld: either a named map or an explicit layout
  std::string map;
  std::optional<GridLayout> layout;
  double slip = 0.0;
  // random_mdp
  std::size_t n_states = 20;
  std::size_t n_actions = 5;
  std::size_t d = 5;
  std::uint64_t seed = 0;
  // external
  std::string path;
};

enum class FeatureSource { one_hot, env, random, csv };

struct FeatureSpec {
  FeatureSource source = FeatureSource::one_hot;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  std::string path;
};

struct EvalSpec {
  std::optional<std::size_t> state;
  std::optional<Vector> nu;
};

struct ExperimentConfig {
  EnvSpec env;
  Task task = Task::td;
  std::optional<FeatureSpec> features;
  std::optional<double> gamma;
  double alpha0 = 1.0;
  double eta = 0.75;
  std::size_t B = 200;
  WeightKind weight_kind = WeightKind::uniform_mv1;
  std::optional<std::uint64_t> n_steps;
  std::optional<std::uint64_t> n_episodes;
  double target_epsilon = 0.0;
  std::optional<double> behavior_epsilon;
  double ci_level = 0.95;
  EvalSpec eval;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::vector<std::uint64_t> checkpoints;
  std::vector<double> alpha0_grid;
  std::vector<double> eta_grid;

  std::uint64_t budget() const { return n_steps ? *n_steps : n_episodes.value_or(0); }
  bool episode_budget() const { return n_episodes.has_value(); }
};

inline std::string to_string(Task t) {
  switch (t) {
    case Task::td: return "td_onpolicy";
    case Task::gtd_neu: return "gtd_neu";
    case Task::gtd_mspbe: return "gtd_mspbe";
  }
  return "?";
}

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigInvalid("unknown field '" + key + "' in " + where);
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigInvalid(where + "." + key + ": " + e.what());
  }
}

inline Task parse_task(const std::string& s) {
  if (s == "td_onpolicy") return Task::td;
  if (s == "gtd_neu") return Task::gtd_neu;
  if (s == "gtd_mspbe") return Task::gtd_mspbe;
  throw ConfigInvalid("unknown task '" + s + "'");
}

inline WeightKind parse_weight_kind(const std::string& s) {
  if (s == "uniform_mv1") return WeightKind::uniform_mv1;
  if (s == "two_point") return WeightKind::two_point;
  if (s == "uniform_narrow") return WeightKind::uniform_narrow;
  if (s == "unit") return WeightKind::unit;
  throw ConfigInvalid("unknown weight_kind '" + s + "'");
}

inline EnvSpec parse_env(const json& j) {
  EnvSpec e;
  if (!j.is_object()) throw ConfigInvalid("env must be an object");
  const auto kind = get<std::string>(j, "kind", "env");
  if (kind == "gridworld") {
    reject_unknown(j, {"kind", "map", "width", "height", "holes", "goal", "slip"}, "env");
    e.kind = EnvKind::gridworld;
    e.slip = j.value("slip", 0.0);
    if (j.contains("map")) {
      e.map = get<std::string>(j, "map", "env");
    } else {
      GridLayout g;
      g.width = get<std::size_t>(j, "width", "env");
      g.height = get<std::size_t>(j, "height", "env");
      g.goal = j.value("goal", g.width * g.height - 1);
      for (auto h : j.value("holes", std::vector<std::size_t>{})) g.holes.insert(h);
      e.layout = g;
    }
  } else if (kind == "random_mdp") {
    reject_unknown(j, {"kind", "n_states", "n_actions", "d", "seed"}, "env");
    e.kind = EnvKind::random_mdp;
    e.n_states = j.value("n_states", e.n_states);
    e.n_actions = j.value("n_actions", e.n_actions);
    e.d = j.value("d", e.d);
    e.seed = j.value("seed", std::uint64_t{0});
  } else if (kind == "two_state") {
    reject_unknown(j, {"kind"}, "env");
    e.kind = EnvKind::two_state;
  } else if (kind == "external") {
    reject_unknown(j, {"kind", "path"}, "env");
    e.kind = EnvKind::external;
    e.path = get<std::string>(j, "path", "env");
  } else {
    throw ConfigInvalid("unknown env kind '" + kind + "'");
  }
  return e;
}

inline FeatureSpec parse_features(const json& j) {
  FeatureSpec f;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "one_hot") f.source = FeatureSource::one_hot;
    else if (s == "env") f.source = FeatureSource::env;
    else throw ConfigInvalid("unknown features '" + s + "'");
    return f;
  }
  if (!j.is_object()) throw ConfigInvalid("features must be a string or object");
  const auto kind = get<std::string>(j, "kind", "features");
  if (kind == "random") {
    reject_unknown(j, {"kind", "d", "seed"}, "features");
    f.source = FeatureSource::random;
    f.d = get<std::size_t>(j, "d", "features");
    f.seed = j.value("seed", std::uint64_t{0});
  } else if (kind == "csv") {
    reject_unknown(j, {"kind", "path"}, "features");
    f.source = FeatureSource::csv;
    f.path = get<std::string>(j, "path", "features");
  } else if (kind == "one_hot" || kind == "env") {
    reject_unknown(j, {"kind"}, "features");
    f.source = kind == "one_hot" ? FeatureSource::one_hot : FeatureSource::env;
  } else {
    throw ConfigInvalid("unknown features kind '" + kind + "'");
  }
  return f;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  StepSchedule{c.alpha0, c.eta}.validate();
  if (!(c.ci_level > 0.0 && c.ci_level < 1.0)) throw ConfigInvalid("ci_level must lie in (0,1)");
  if (c.B < 2) throw ConfigInvalid("B must be at least 2");
  if (c.repeats < 1) throw ConfigInvalid("repeats must be at least 1");
  if (c.n_steps.has_value() == c.n_episodes.has_value()) throw ConfigInvalid("set exactly one of n_steps, n_episodes");
  if (c.budget() == 0) throw ConfigInvalid("run budget must be positive");
  if (is_gtd(c.task) && !c.behavior_epsilon) throw ConfigInvalid("GTD tasks need behavior_epsilon");
  if (!(c.target_epsilon >= 0.0 && c.target_epsilon <= 1.0)) throw ConfigInvalid("target_epsilon outside [0,1]");
  if (c.behavior_epsilon && !(*c.behavior_epsilon >= 0.0 && *c.behavior_epsilon <= 1.0)) {
    throw ConfigInvalid("behavior_epsilon outside [0,1]");
  }
  if (c.eval.state && c.eval.nu) throw ConfigInvalid("eval takes either state or nu, not both");
  for (std::size_t i = 1; i < c.checkpoints.size(); ++i)
    if (c.checkpoints[i] <= c.checkpoints[i - 1]) throw ConfigInvalid("checkpoints must be strictly increasing");
  for (auto t : c.checkpoints)
    if (t == 0 || t > c.budget()) throw ConfigInvalid("checkpoint " + std::to_string(t) + " outside run budget");
  for (double a : c.alpha0_grid) StepSchedule{a, c.eta}.validate();
  for (double e : c.eta_grid) StepSchedule{c.alpha0, e}.validate();
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::get;
  if (!j.is_object()) throw ConfigInvalid("config must be a JSON object");
  detail::reject_unknown(j,
                         {"env", "task", "features", "gamma", "alpha0", "eta", "B", "weight_kind", "n_steps",
                          "n_episodes", "target_epsilon", "behavior_epsilon", "ci_level", "eval", "seed", "repeats",
                          "checkpoints", "alpha0_grid", "eta_grid"},
                         "config");
  ExperimentConfig c;
  try {
    if (j.contains("env")) c.env = detail::parse_env(j.at("env"));
    if (j.contains("task")) c.task = detail::parse_task(get<std::string>(j, "task", "config"));
    if (j.contains("features")) c.features = detail::parse_features(j.at("features"));
    if (j.contains("gamma")) c.gamma = get<double>(j, "gamma", "config");
    c.alpha0 = j.value("alpha0", c.alpha0);
    c.eta = j.value("eta", c.eta);
    c.B = j.value("B", c.B);
    if (j.contains("weight_kind")) c.weight_kind = detail::parse_weight_kind(get<std::string>(j, "weight_kind", "config"));
    if (j.contains("n_steps")) c.n_steps = get<std::uint64_t>(j, "n_steps", "config");
    if (j.contains("n_episodes")) c.n_episodes = get<std::uint64_t>(j, "n_episodes", "config");
    c.target_epsilon = j.value("target_epsilon", 0.0);
    if (j.contains("behavior_epsilon")) c.behavior_epsilon = get<double>(j, "behavior_epsilon", "config");
    c.ci_level = j.value("ci_level", c.ci_level);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::reject_unknown(e, {"state", "nu"}, "eval");
      if (e.contains("state")) c.eval.state = get<std::size_t>(e, "state", "eval");
      if (e.contains("nu")) c.eval.nu = get<Vector>(e, "nu", "eval");
    }
    c.seed = j.value("seed", std::uint64_t{0});
    c.repeats = j.value("repeats", c.repeats);
    c.checkpoints = j.value("checkpoints", std::vector<std::uint64_t>{});
    c.alpha0_grid = j.value("alpha0_grid", std::vector<double>{});
    c.eta_grid = j.value("eta_grid", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Reads a model file: {"n_states", "n_actions", "transition": [s][a][s'],
/// "reward": [s][a][s'], "terminal": [bool], "start_state"}.
inline TabularMdp load_mdp_json(const std::string& path, double gamma) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open model file '" + path + "'");
  try {
    nlohmann::json j;
    in >> j;
    const auto ns = j.at("n_states").get<std::size_t>();
    const auto na = j.at("n_actions").get<std::size_t>();
    auto flatten = [&](const nlohmann::json& t) {
      std::vector<double> out;
      out.reserve(ns * na * ns);
      if (t.size() != ns) throw ConfigInvalid("tensor outer size != n_states");
      for (const auto& per_s : t) {
        if (per_s.size() != na) throw ConfigInvalid("tensor action size != n_actions");
        for (const auto& row : per_s) {
          if (row.size() != ns) throw ConfigInvalid("tensor row size != n_states");
          for (const auto& x : row) out.push_back(x.get<double>());
        }
      }
      return out;
    };
    std::vector<char> terminal(ns, 0);
    if (j.contains("terminal")) {
      const auto t = j.at("terminal").get<std::vector<bool>>();
      if (t.size() != ns) throw ConfigInvalid("terminal mask size != n_states");
      for (std::size_t s = 0; s < ns; ++s) terminal[s] = t[s] ? 1 : 0;
    }
    return TabularMdp(ns, na, flatten(j.at("transition")), flatten(j.at("reward")), gamma, std::move(terminal),
                      j.value("start_state", std::size_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid("model file '" + path + "': " + e.what());
  } catch (const InvalidModel& e) {
    throw ConfigInvalid(e.what());
  }
}

/// Everything a run needs, resolved from a config. Immutable and shared by
/// all repeats of a coverage study.
struct Experiment {
  ExperimentConfig config;
  TabularMdp mdp;
  FeatureMap features;
  Policy target;
  Policy behavior;
  /// Functional on the full LSA parameter (padded with zeros for GTD).
  Vector functional;
  std::optional<double> true_value;
  StepSchedule schedule;

  std::size_t param_dim() const { return is_gtd(config.task) ? 2 * features.dim() : features.dim(); }
};

/// Geometric grid {1, 2, 4, ...} up to the budget, with the budget appended.
inline std::vector<std::uint64_t> default_checkpoints(std::uint64_t budget) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t t = 1; t < budget; t *= 2) out.push_back(t);
  out.push_back(budget);
  return out;
}

inline Experiment build_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  Experiment ex;
  ex.config = cfg;
  if (ex.config.checkpoints.empty()) ex.config.checkpoints = default_checkpoints(cfg.budget());
  ex.schedule = {cfg.alpha0, cfg.eta};

  std::optional<FeatureMap> env_features;
  Policy base;
  try {
    switch (cfg.env.kind) {
      case EnvKind::two_state:
        ex.mdp = build_two_state_chain(cfg.gamma.value_or(0.5));
        base = Policy::uniform(2, 2);
        break;
      case EnvKind::gridworld: {
        const GridLayout layout = cfg.env.layout ? *cfg.env.layout : frozen_lake_layout(cfg.env.map);
        ex.mdp = build_gridworld(layout, cfg.env.slip, cfg.gamma.value_or(0.95));
        base = value_iteration(ex.mdp, 1e-12);
        break;
      }
      case EnvKind::random_mdp: {
        auto inst = build_random_mdp(cfg.env.n_states, cfg.env.n_actions, cfg.env.d, cfg.gamma.value_or(0.9),
                                     cfg.env.seed);
        ex.mdp = std::move(inst.mdp);
        env_features = std::move(inst.features);
        base = std::move(inst.target);
        break;
      }
      case EnvKind::external:
        ex.mdp = load_mdp_json(cfg.env.path, cfg.gamma.value_or(0.95));
        base = value_iteration(ex.mdp, 1e-12);
        break;
    }
  } catch (const InvalidLayout& e) {
    throw ConfigInvalid(e.what());
  } catch (const InvalidModel& e) {
    throw ConfigInvalid(e.what());
  }

  if (cfg.episode_budget() && !ex.mdp.episodic()) {
    throw ConfigInvalid("n_episodes needs an environment with terminal states");
  }

  FeatureSpec fs = cfg.features.value_or(
      FeatureSpec{env_features ? FeatureSource::env : FeatureSource::one_hot, 0, 0, {}});
  switch (fs.source) {
    case FeatureSource::one_hot: ex.features = one_hot_features(ex.mdp.nonterminal_mask()); break;
    case FeatureSource::env:
      if (!env_features) throw ConfigInvalid("features 'env' is only available for random_mdp");
      ex.features = *env_features;
      break;
    case FeatureSource::random: ex.features = random_features(ex.mdp.n_states(), fs.d, fs.seed); break;
    case FeatureSource::csv:
      try {
        ex.features = load_feature_csv(fs.path);
      } catch (const InvalidModel& e) {
        throw ConfigInvalid(e.what());
      }
      break;
  }
  if (ex.features.n_states() != ex.mdp.n_states()) throw ConfigInvalid("feature table rows != n_states");

  ex.target = epsilon_greedy(base, cfg.target_epsilon);
  ex.behavior = cfg.task == Task::td ? ex.target : epsilon_greedy(base, *cfg.behavior_epsilon);
  if (is_gtd(cfg.task)) {
    try {
      check_behavior_support(ex.target, ex.behavior);
    } catch (const ZeroBehaviorProbability& e) {
      throw ConfigInvalid(e.what());
    }
  }

  Vector nu = cfg.eval.nu ? *cfg.eval.nu : point_mass(ex.mdp.n_states(), cfg.eval.state.value_or(ex.mdp.start_state()));
  if (nu.size() != ex.mdp.n_states()) throw ConfigInvalid("eval.nu length != n_states");
  try {
    ex.functional = pad_functional(value_functional(ex.features, nu), ex.param_dim());
  } catch (const OutOfRange& e) {
    throw ConfigInvalid(e.what());
  }

  const Vector v = true_value(induce_mrp(ex.mdp, ex.target));
  ex.true_value = dot(nu, v);
  return ex;
}

}  // namespace tdboot
