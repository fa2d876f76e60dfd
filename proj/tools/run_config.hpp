// Copyright 2026 The nhmpc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration for the command-line tool: JSON document, bundled
// presets and schema validation.

#ifndef NHMPC_TOOLS_RUN_CONFIG_HPP
#define NHMPC_TOOLS_RUN_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nhmpc/horizon_lab.hpp"
#include "nhmpc/mpc.hpp"

namespace nhmpc::tools {

using nlohmann::json;

/// Raised for any malformed configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KernelSettings {
  double speed_lo = 0.1;
  double speed_hi = 17.604;
  KernelSurface::Resolution resolution;
};

struct ProbeSettings {
  std::vector<State> states;
  std::vector<double> horizons{0.5, 1.0, 2.0, 4.0};
  double dt = 0.1;
  int samples = 12;
  double radius = 0.5;
};

struct RunConfig {
  MpcConfig mpc;
  std::vector<CostKind> costs{CostKind::Quartic};
  std::vector<State> states;
  std::optional<int> table_id;
  int n_min = 1;
  int n_max = 64;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = "out";
  KernelSettings kernel;
  ProbeSettings probe;
  json document;  ///< the merged document, hashed into manifests
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"table1", "table2", "table3", "table4"};
  return names;
}

inline json preset(const std::string& name) {
  for (int id = 1; id <= 4; ++id) {
    if (name != "table" + std::to_string(id)) continue;
    const ExperimentSpec s = table_spec(id);
    json states = json::array();
    for (const auto& x : s.states) states.push_back({x.x1, x.x2, x.x3, x.x4});
    json costs = json::array();
    for (auto c : s.costs) costs.push_back(std::string(to_string(c)));
    return {{"table_id", id},
            {"dt", s.mpc.dt},
            {"sim_duration", s.mpc.sim_duration},
            {"states", states},
            {"costs", costs},
            {"n_min", s.n_min},
            {"n_max", s.n_max}};
  }
  throw ConfigError("unknown preset '" + name + "'");
}

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline double number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
  return j.get<int>();
}

inline std::vector<double> numbers(const json& j, const std::string& key,
                                   std::optional<std::size_t> size = {}) {
  if (!j.is_array()) throw ConfigError("'" + key + "' must be an array");
  if (size && j.size() != *size) {
    throw ConfigError("'" + key + "' must have " + std::to_string(*size) + " entries");
  }
  std::vector<double> out;
  for (const auto& v : j) out.push_back(number(v, key));
  return out;
}

inline State state(const json& j, const std::string& key) {
  const auto v = numbers(j, key, 4);
  return {v[0], v[1], v[2], v[3]};
}

inline std::vector<State> states(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of states");
  std::vector<State> out;
  for (const auto& s : j) out.push_back(state(s, key));
  return out;
}

inline CostKind cost(const json& j) {
  if (!j.is_string()) throw ConfigError("'cost' entries must be strings");
  try {
    return cost_kind_from_string(j.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace detail

/// Parses and validates a merged configuration document.
inline RunConfig parse_config(const json& doc) {
  using namespace detail;
  reject_unknown(doc,
                 {"box", "wall", "dt", "horizon", "n_min", "n_max", "cost", "costs",
                  "state", "states", "table_id", "sim_duration", "eps", "settle_time",
                  "seed", "workers", "out", "kernel", "probe", "solver"},
                 "config");
  RunConfig rc;
  rc.document = doc;
  auto& m = rc.mpc;
  if (doc.contains("box")) {
    const json& b = doc["box"];
    reject_unknown(b, {"lo", "hi"}, "box");
    if (b.contains("lo")) {
      const auto v = numbers(b["lo"], "box.lo", 2);
      m.box.lo = {v[0], v[1]};
    }
    if (b.contains("hi")) {
      const auto v = numbers(b["hi"], "box.hi", 2);
      m.box.hi = {v[0], v[1]};
    }
  }
  if (doc.contains("wall")) {
    const json& w = doc["wall"];
    reject_unknown(w, {"a1", "a2", "b"}, "wall");
    if (w.contains("a1")) m.wall.a1 = number(w["a1"], "wall.a1");
    if (w.contains("a2")) m.wall.a2 = number(w["a2"], "wall.a2");
    if (w.contains("b")) m.wall.b = number(w["b"], "wall.b");
  }
  if (doc.contains("dt")) m.dt = number(doc["dt"], "dt");
  if (doc.contains("horizon")) m.horizon = integer(doc["horizon"], "horizon");
  if (doc.contains("sim_duration")) m.sim_duration = number(doc["sim_duration"], "sim_duration");
  if (doc.contains("eps")) m.eps = number(doc["eps"], "eps");
  if (doc.contains("settle_time")) m.settle_time = number(doc["settle_time"], "settle_time");
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    reject_unknown(s, {"max_iterations", "pg_tol", "rel_tol", "feas_tol", "max_outer"},
                   "solver");
    if (s.contains("max_iterations")) m.solver.max_iterations = integer(s["max_iterations"], "max_iterations");
    if (s.contains("pg_tol")) m.solver.pg_tol = number(s["pg_tol"], "pg_tol");
    if (s.contains("rel_tol")) m.solver.rel_tol = number(s["rel_tol"], "rel_tol");
    if (s.contains("feas_tol")) m.solver.feas_tol = number(s["feas_tol"], "feas_tol");
    if (s.contains("max_outer")) m.solver.max_outer = integer(s["max_outer"], "max_outer");
  }
  if (doc.contains("cost") && doc.contains("costs")) {
    throw ConfigError("give either 'cost' or 'costs', not both");
  }
  if (doc.contains("cost")) rc.costs = {cost(doc["cost"])};
  if (doc.contains("costs")) {
    if (!doc["costs"].is_array() || doc["costs"].empty()) {
      throw ConfigError("'costs' must be a nonempty array");
    }
    rc.costs.clear();
    for (const auto& c : doc["costs"]) rc.costs.push_back(cost(c));
  }
  m.cost = rc.costs.front();
  if (doc.contains("state") && doc.contains("states")) {
    throw ConfigError("give either 'state' or 'states', not both");
  }
  if (doc.contains("state")) rc.states = {state(doc["state"], "state")};
  if (doc.contains("states")) rc.states = states(doc["states"], "states");
  if (doc.contains("table_id")) {
    rc.table_id = integer(doc["table_id"], "table_id");
    if (*rc.table_id < 1 || *rc.table_id > 4) throw ConfigError("'table_id' must be 1..4");
  }
  if (doc.contains("n_min")) rc.n_min = integer(doc["n_min"], "n_min");
  if (doc.contains("n_max")) rc.n_max = integer(doc["n_max"], "n_max");
  if (rc.n_min < 1 || rc.n_max < rc.n_min) throw ConfigError("need 1 <= n_min <= n_max");
  if (doc.contains("seed")) {
    const json& sd = doc["seed"];
    if (!sd.is_number_integer() || (!sd.is_number_unsigned() && sd.get<std::int64_t>() < 0)) {
      throw ConfigError("'seed' must be a nonnegative integer");
    }
    rc.seed = sd.get<std::uint64_t>();
  }
  if (doc.contains("workers")) rc.workers = integer(doc["workers"], "workers");
  if (rc.workers < 1) throw ConfigError("'workers' must be >= 1");
  if (doc.contains("out")) {
    if (!doc["out"].is_string()) throw ConfigError("'out' must be a string");
    rc.out = doc["out"].get<std::string>();
  }
  if (doc.contains("kernel")) {
    const json& k = doc["kernel"];
    reject_unknown(k, {"speed_lo", "speed_hi", "speeds", "curve_samples", "grid_heading", "grid_speed"},
                   "kernel");
    auto& ks = rc.kernel;
    if (k.contains("speed_lo")) ks.speed_lo = number(k["speed_lo"], "kernel.speed_lo");
    if (k.contains("speed_hi")) ks.speed_hi = number(k["speed_hi"], "kernel.speed_hi");
    if (k.contains("speeds")) ks.resolution.speeds = integer(k["speeds"], "kernel.speeds");
    if (k.contains("curve_samples")) ks.resolution.curve_samples = integer(k["curve_samples"], "kernel.curve_samples");
    if (k.contains("grid_heading")) ks.resolution.grid_heading = integer(k["grid_heading"], "kernel.grid_heading");
    if (k.contains("grid_speed")) ks.resolution.grid_speed = integer(k["grid_speed"], "kernel.grid_speed");
  }
  if (!(rc.kernel.speed_lo > 0.0) || !(rc.kernel.speed_hi > rc.kernel.speed_lo)) {
    throw ConfigError("kernel speed range is empty: need 0 < speed_lo < speed_hi");
  }
  if (doc.contains("probe")) {
    const json& p = doc["probe"];
    reject_unknown(p, {"states", "horizons", "dt", "samples", "radius"}, "probe");
    auto& ps = rc.probe;
    if (p.contains("states")) ps.states = states(p["states"], "probe.states");
    if (p.contains("horizons")) ps.horizons = numbers(p["horizons"], "probe.horizons");
    if (p.contains("dt")) ps.dt = number(p["dt"], "probe.dt");
    if (p.contains("samples")) ps.samples = integer(p["samples"], "probe.samples");
    if (p.contains("radius")) ps.radius = number(p["radius"], "probe.radius");
    if (ps.horizons.empty() || ps.samples < 0 || !(ps.radius > 0.0) || !(ps.dt > 0.0)) {
      throw ConfigError("probe needs horizons, samples >= 0, radius > 0 and dt > 0");
    }
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

/// Shallow merge: keys of `over` replace those of `base`.
inline json merge(json base, const json& over) {
  if (!over.is_object()) throw ConfigError("config document must be an object");
  for (const auto& [k, v] : over.items()) base[k] = v;
  return base;
}

}  // namespace nhmpc::tools

#endif  // NHMPC_TOOLS_RUN_CONFIG_HPP
