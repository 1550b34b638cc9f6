#pragma once

// Experiment configuration: JSON with an explicit schema_version, merged
// over per-experiment defaults and validated before anything runs.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evogame/error.hpp"
#include "evogame/game.hpp"
#include "evogame/init.hpp"
#include "evogame/io.hpp"

namespace evogame {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Experiment {
  kTwoStrategies,
  kGrazing,
  kRpsPeriodic,
  kFolkCheck,
  kMeanfieldVsReplicator,
  kMicroFreeRun,
};

struct ExperimentInfo {
  Experiment id;
  const char* name;
  const char* summary;
};

inline const std::vector<ExperimentInfo>& experiment_table() {
  static const std::vector<ExperimentInfo> table{
      {Experiment::kTwoStrategies, "two_strategies",
       "two-strategy transport system; absorption at the vertices"},
      {Experiment::kGrazing, "grazing",
       "agent simulation vs mean-field transport as delta shrinks"},
      {Experiment::kRpsPeriodic, "rps_periodic",
       "periodic mean-field solutions near the cyclic-game equilibrium"},
      {Experiment::kFolkCheck, "folk_check",
       "null vector / rest point / stationary measure / Nash equivalence"},
      {Experiment::kMeanfieldVsReplicator, "meanfield_vs_replicator",
       "ensemble mean on the h-plateau vs the 2c-rescaled replicator equation"},
      {Experiment::kMicroFreeRun, "micro_free_run", "plain agent-based run with snapshots"},
  };
  return table;
}

inline Experiment parse_experiment(const std::string& name) {
  for (const auto& e : experiment_table()) {
    if (name == e.name) return e.id;
  }
  throw Error(Errc::kConfigInvalid, "unknown experiment '" + name + "'");
}

inline const char* experiment_name(Experiment id) {
  for (const auto& e : experiment_table()) {
    if (e.id == id) return e.name;
  }
  return "?";
}

struct Dynamics {
  double delta = 0.0;
  double r = 0.0;
  double c = 0.1;
  double lambda = 0.0;
  double dt = 0.1;
  double t_end = 1.0;
  int n = 0;
  double snapshot_every = 1.0;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::kMicroFreeRun;
  json game;
  Dynamics dyn;
  json init;
  std::uint64_t seed = 0;
  std::string output_dir;
  json params;
  json checks;
  // Fully resolved config, as echoed in summaries.
  json resolved;

  double param(const char* key) const { return params.at(key).get<double>(); }
  double threshold(const char* key) const { return checks.at(key).get<double>(); }
};

inline json default_config(Experiment e) {
  json cfg = {{"schema_version", kSchemaVersion},
              {"experiment", experiment_name(e)},
              {"seed", 1},
              {"output_dir", std::string("runs/") + experiment_name(e)},
              {"params", json::object()},
              {"checks", json::object()}};
  json dyn = {{"delta", 0.0}, {"r", 0.0},    {"c", 0.1}, {"lambda", 0.0},
              {"dt", 0.1},    {"t_end", 1.0}, {"n", 0},   {"snapshot_every", 1.0}};
  switch (e) {
    case Experiment::kTwoStrategies:
      cfg["game"] = {{"name", "two_strategy"}, {"b", 1.0}};
      dyn.update({{"c", 0.1}, {"dt", 0.1}, {"t_end", 400.0}, {"n", 1000}, {"snapshot_every", 10.0}});
      cfg["init"] = {{"kind", "atom_plus_interval"}, {"atom", 0.0}, {"atom_mass", 0.3},
                     {"lo", 0.0},  {"hi", 0.3}};
      cfg["params"] = {{"bins", 60}};
      cfg["checks"] = {{"eps_source", 1e-3}, {"eps_target", 1e-2}, {"absorption_slack", 0.01}};
      break;
    case Experiment::kGrazing:
      cfg["game"] = {{"name", "two_strategy"}, {"b", 1.0}};
      dyn.update({{"c", 0.1}, {"dt", 0.01}, {"t_end", 5.0}, {"n", 5000}, {"snapshot_every", 1.0}});
      cfg["init"] = {{"kind", "interval"}, {"lo", 0.1}, {"hi", 0.9}};
      cfg["params"] = {{"deltas", {0.2, 0.1, 0.05}}, {"n_values", json::array()},
                       {"n_seeds", 8},  {"n_proj", 64}, {"workers", 0}};
      cfg["checks"] = {{"stderr_factor", 2.0}};
      break;
    case Experiment::kRpsPeriodic:
      cfg["game"] = {{"name", "cyclic"}, {"d", 3}};
      dyn.update({{"c", 0.01}, {"dt", 0.05}, {"t_end", 0.0}, {"n", 200}, {"snapshot_every", 0.0}});
      cfg["init"] = {{"kind", "ball"},
                     {"center", {1.0 / 3 + 0.03, 1.0 / 3 - 0.015, 1.0 / 3 - 0.015}},
                     {"radius", 0.05},
                     {"antithetic", true}};
      cfg["params"] = {{"period_horizon", 2500.0}, {"n_proj", 64}, {"bins", 60}};
      cfg["checks"] = {{"w1_tol", 1e-3}, {"rotation_tol", 1e-3}, {"temporal_mean_tol", 1e-3}};
      break;
    case Experiment::kFolkCheck:
      cfg["game"] = {{"name", "cyclic"}, {"d", 3}};
      dyn.update({{"c", 0.1}, {"dt", 0.01}, {"t_end", 10.0}});
      cfg["init"] = nullptr;
      cfg["params"] = {{"control_vertex", 0}, {"control_weight", 0.25}, {"n_proj", 64}};
      cfg["checks"] = {{"tol", 1e-8}};
      break;
    case Experiment::kMeanfieldVsReplicator:
      cfg["game"] = {{"name", "cyclic"}, {"d", 3}};
      dyn.update({{"c", 0.01}, {"dt", 1e-3}, {"t_end", 10.0}, {"n", 100}, {"snapshot_every", 0.1}});
      cfg["init"] = {{"kind", "ball"},
                     {"center", {0.36, 0.33, 0.31}},
                     {"radius", 0.03},
                     {"antithetic", false}};
      cfg["checks"] = {{"gap_tol", 1e-4}};
      break;
    case Experiment::kMicroFreeRun:
      cfg["game"] = {{"name", "two_strategy"}, {"b", 1.0}};
      dyn.update({{"delta", 0.01}, {"c", 0.1}, {"t_end", 1000.0}, {"n", 1000},
                  {"snapshot_every", 100.0}});
      cfg["init"] = {{"kind", "interval"}, {"lo", 0.0}, {"hi", 1.0}};
      cfg["params"] = {{"bins", 60}, {"clock", "exponential"}};
      break;
  }
  cfg["dynamics"] = dyn;
  return cfg;
}

inline PayoffMatrix make_game(const json& spec) {
  if (!spec.is_object() || !spec.contains("name")) {
    throw Error(Errc::kConfigInvalid, "game: expected an object with a 'name'");
  }
  const auto name = spec["name"].get<std::string>();
  try {
    if (name == "two_strategy") return two_strategy_matrix(spec.at("b").get<double>());
    if (name == "rps") return rps_matrix(spec.at("a").get<double>(), spec.at("b").get<double>());
    if (name == "cyclic") return cyclic_matrix(spec.at("d").get<int>());
    if (name == "matrix") {
      return validate_payoff(spec.at("entries").get<std::vector<std::vector<double>>>());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigInvalid, std::string("game: ") + e.what());
  }
  throw Error(Errc::kConfigInvalid, "game: unknown name '" + name + "'");
}

inline std::string config_hash(const json& resolved) {
  json copy = resolved;
  copy.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : copy.dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// key=value with a dotted key; the value is parsed as JSON when possible.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(Errc::kConfigInvalid, "override '" + assignment + "' is not key=value");
  }
  std::string pointer;
  std::string key = assignment.substr(0, eq);
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    pointer += "/" + key.substr(start, dot - start);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const auto text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  cfg[json::json_pointer(pointer)] = value;
}

namespace detail {

inline void reject_unknown_keys(const json& given, const json& allowed, const std::string& where) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw Error(Errc::kConfigInvalid, "unknown key '" + where + it.key() + "'");
    }
  }
}

inline double positive(const json& obj, const char* key, const std::string& where) {
  const double v = obj.at(key).get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(Errc::kConfigInvalid, where + key + " must be > 0");
  }
  return v;
}

inline void check_micro_steps(double delta, double r) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(Errc::kConfigInvalid, "delta must lie in (0, 1)");
  }
  if (!(r >= 0.0)) throw Error(Errc::kConfigInvalid, "r must be >= 0");
  if (!(delta + r < 1.0)) throw Error(Errc::kConfigInvalid, "delta + r must be < 1");
}

}  // namespace detail

namespace detail {

inline ExperimentConfig load_config_unchecked(const json& user) {
  if (!user.is_object()) throw Error(Errc::kConfigInvalid, "config must be a JSON object");
  if (!user.contains("schema_version") || user["schema_version"] != kSchemaVersion) {
    throw Error(Errc::kConfigInvalid,
                "schema_version must be " + std::to_string(kSchemaVersion));
  }
  if (!user.contains("experiment") || !user["experiment"].is_string()) {
    throw Error(Errc::kConfigInvalid, "missing 'experiment'");
  }
  ExperimentConfig cfg;
  cfg.experiment = parse_experiment(user["experiment"].get<std::string>());
  json merged = default_config(cfg.experiment);
  detail::reject_unknown_keys(user, merged, "");
  for (const char* section : {"dynamics", "params", "checks"}) {
    if (user.contains(section)) detail::reject_unknown_keys(user[section], merged[section], std::string(section) + ".");
  }
  // Game and init objects are replaced whole, the rest merged.
  json patch = user;
  patch.erase("game");
  patch.erase("init");
  merged.merge_patch(patch);
  // A block naming its own kind replaces the default; otherwise it patches it.
  for (const auto& [block, tag] : {std::pair{"game", "name"}, std::pair{"init", "kind"}}) {
    if (!user.contains(block)) continue;
    const auto& given = user[block];
    if (given.is_object() && !given.contains(tag) && merged[block].is_object()) {
      merged[block].merge_patch(given);
    } else {
      merged[block] = given;
    }
  }

  try {
    const auto& d = merged["dynamics"];
    cfg.dyn.delta = d.at("delta").get<double>();
    cfg.dyn.r = d.at("r").get<double>();
    cfg.dyn.c = d.at("c").get<double>();
    cfg.dyn.lambda = d.at("lambda").get<double>();
    cfg.dyn.dt = d.at("dt").get<double>();
    cfg.dyn.t_end = d.at("t_end").get<double>();
    cfg.dyn.n = d.at("n").get<int>();
    cfg.dyn.snapshot_every = d.at("snapshot_every").get<double>();
    cfg.seed = merged.at("seed").get<std::uint64_t>();
    cfg.output_dir = merged.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigInvalid, e.what());
  }
  cfg.game = merged["game"];
  cfg.init = merged["init"];
  cfg.params = merged["params"];
  cfg.checks = merged["checks"];
  if (cfg.init.is_object() && !cfg.init.contains("count") && cfg.dyn.n > 0 &&
      cfg.init.value("kind", "") != "csv") {
    cfg.init["count"] = cfg.dyn.n;
    merged["init"] = cfg.init;
  }
  cfg.resolved = merged;

  const auto game = make_game(cfg.game);
  game.require_antisymmetric();
  StepFunctionParams{cfg.dyn.c}.validate();
  detail::positive(merged["dynamics"], "dt", "dynamics.");
  if (!(cfg.dyn.lambda >= 0.0)) throw Error(Errc::kConfigInvalid, "lambda must be >= 0");
  for (auto it = cfg.checks.begin(); it != cfg.checks.end(); ++it) {
    if (!it->is_number() || !(it->get<double>() >= 0.0)) {
      throw Error(Errc::kConfigInvalid, "checks." + it.key() + " must be a number >= 0");
    }
  }
  const int d = game.dim();

  switch (cfg.experiment) {
    case Experiment::kTwoStrategies:
      if (d != 2) throw Error(Errc::kDimensionMismatch, "two_strategies needs a 2x2 game");
      detail::positive(merged["dynamics"], "t_end", "dynamics.");
      detail::positive(merged["dynamics"], "snapshot_every", "dynamics.");
      break;
    case Experiment::kGrazing: {
      detail::positive(merged["dynamics"], "t_end", "dynamics.");
      detail::positive(merged["dynamics"], "snapshot_every", "dynamics.");
      const auto deltas = cfg.params.at("deltas").get<std::vector<double>>();
      if (deltas.empty()) throw Error(Errc::kConfigInvalid, "params.deltas is empty");
      for (double delta : deltas) {
        const double r = cfg.dyn.lambda > 0.0 ? std::sqrt(cfg.dyn.lambda * delta) : cfg.dyn.r;
        detail::check_micro_steps(delta, r);
      }
      if (cfg.dyn.r != 0.0 && cfg.dyn.lambda == 0.0) {
        throw Error(Errc::kConfigInvalid,
                    "grazing with noise: set dynamics.lambda (r = sqrt(lambda * delta)), not r");
      }
      if (cfg.params.at("n_values").empty()) cfg.params["n_values"] = {cfg.dyn.n};
      for (int n : cfg.params["n_values"].get<std::vector<int>>()) {
        if (n < 2) throw Error(Errc::kConfigInvalid, "population sizes must be >= 2");
      }
      if (cfg.params.at("n_seeds").get<int>() < 2) {
        throw Error(Errc::kConfigInvalid, "params.n_seeds must be >= 2 for error bars");
      }
      const double ratio = cfg.dyn.snapshot_every / cfg.dyn.dt;
      if (std::abs(ratio - std::round(ratio)) > 1e-9) {
        throw Error(Errc::kConfigInvalid, "snapshot_every must be a multiple of dt");
      }
      cfg.resolved["params"] = cfg.params;
      break;
    }
    case Experiment::kRpsPeriodic:
      if (cfg.param("period_horizon") <= 0.0) {
        throw Error(Errc::kConfigInvalid, "params.period_horizon must be > 0");
      }
      break;
    case Experiment::kFolkCheck: {
      detail::positive(merged["dynamics"], "t_end", "dynamics.");
      const int k = cfg.params.at("control_vertex").get<int>();
      const double w = cfg.param("control_weight");
      if (k < 0 || k >= d) throw Error(Errc::kConfigInvalid, "params.control_vertex out of range");
      if (!(w > 0.0 && w < 1.0)) throw Error(Errc::kConfigInvalid, "control_weight in (0, 1)");
      break;
    }
    case Experiment::kMeanfieldVsReplicator:
      detail::positive(merged["dynamics"], "t_end", "dynamics.");
      break;
    case Experiment::kMicroFreeRun: {
      detail::check_micro_steps(cfg.dyn.delta, cfg.dyn.r);
      detail::positive(merged["dynamics"], "snapshot_every", "dynamics.");
      if (!(cfg.dyn.t_end >= 0.0)) throw Error(Errc::kConfigInvalid, "t_end must be >= 0");
      if (cfg.dyn.n < 2) throw Error(Errc::kConfigInvalid, "dynamics.n must be >= 2");
      const auto clock = cfg.params.at("clock").get<std::string>();
      if (clock != "exponential" && clock != "fixed") {
        throw Error(Errc::kConfigInvalid, "params.clock must be exponential or fixed");
      }
      break;
    }
  }
  if (cfg.init.is_object()) make_ensemble(cfg.init, d, cfg.seed);
  return cfg;
}

}  // namespace detail

// Merges `user` over the defaults of its experiment and validates every
// parameter the experiment will use.
inline ExperimentConfig load_config(const json& user) {
  try {
    return detail::load_config_unchecked(user);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigInvalid, e.what());
  }
}

inline json read_config_file(const std::filesystem::path& path) {
  const auto text = io::read_text(path);
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) throw Error(Errc::kParse, path.string() + ": invalid JSON");
  return parsed;
}

}  // namespace evogame
