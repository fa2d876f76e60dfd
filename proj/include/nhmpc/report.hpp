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

// CSV and JSON writers for surfaces, closed-loop runs and horizon tables.

#ifndef NHMPC_REPORT_HPP
#define NHMPC_REPORT_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "nhmpc/horizon_lab.hpp"
#include "nhmpc/mpc.hpp"
#include "nhmpc/viability.hpp"

namespace nhmpc {

inline constexpr std::string_view kVersion = "0.3.0";

/// 17 significant digits, enough to round-trip a double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// FNV-1a, hex encoded. Stable across platforms, unlike std::hash.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const nlohmann::json& config) {
  return fnv1a_hex(config.dump());
}

inline nlohmann::json manifest(const nlohmann::json& config, std::string_view command) {
  return {{"artifact", "nhmpc"},
          {"version", kVersion},
          {"command", command},
          {"config_hash", config_hash(config)},
          {"config", config}};
}

inline nlohmann::json to_json(const State& x) { return {x.x1, x.x2, x.x3, x.x4}; }

/// Barrier curves in world coordinates, kink first within each curve.
inline void write_surface_csv(std::ostream& os, const KernelSurface& s) {
  const auto& w = s.wall();
  const double n = std::hypot(w.a1, w.a2);
  const double c = w.a1 / n, sn = w.a2 / n;
  os << "family,curve,t,x1,x2,x3,x4,l1,l2,l3,l4\n";
  for (std::size_t i = 0; i < s.curves().size(); ++i) {
    const auto& curve = s.curves()[i];
    for (const auto& smp : curve.samples) {
      const State x = denormalize_halfplane(w, smp.x);
      const auto& l = smp.lambda;
      os << to_string(curve.family) << ',' << i << ',' << fmt(smp.t) << ','
         << fmt(x.x1) << ',' << fmt(x.x2) << ',' << fmt(x.x3) << ',' << fmt(x.x4)
         << ',' << fmt(c * l.l1 - sn * l.l2) << ',' << fmt(sn * l.l1 + c * l.l2)
         << ',' << fmt(l.l3) << ',' << fmt(l.l4) << '\n';
    }
  }
}

/// The tabulated sheet x1 = S(x3, x4) in canonical coordinates.
inline void write_sheet_csv(std::ostream& os, const KernelSurface& s) {
  os << "x3,x4,x1\n";
  const auto& hs = s.grid_headings();
  const auto& vs = s.grid_speeds();
  for (std::size_t i = 0; i < hs.size(); ++i) {
    for (std::size_t j = 0; j < vs.size(); ++j) {
      os << fmt(hs[i]) << ',' << fmt(vs[j]) << ',' << fmt(s.grid_values()[i * vs.size() + j])
         << '\n';
    }
  }
}

/// One row per sample; the final row carries no input and no value.
inline void write_trajectory_csv(std::ostream& os, const ClosedLoopRun& run) {
  os << "t,x1,x2,x3,x4,u1,u2,V_T\n";
  for (std::size_t k = 0; k < run.states.size(); ++k) {
    const State& x = run.states[k];
    os << fmt(double(k) * run.dt) << ',' << fmt(x.x1) << ',' << fmt(x.x2) << ','
       << fmt(x.x3) << ',' << fmt(x.x4);
    if (k < run.inputs.size()) {
      os << ',' << fmt(run.inputs[k].u1) << ',' << fmt(run.inputs[k].u2);
    } else {
      os << ",,";
    }
    if (k < run.values.size()) {
      os << ',' << fmt(run.values[k]);
    } else {
      os << ',';
    }
    os << '\n';
  }
}

inline nlohmann::json run_verdict(const ClosedLoopRun& run, const MpcConfig& cfg) {
  nlohmann::json j{{"converged", run.converged},
                   {"feasible", run.feasible},
                   {"steps", run.inputs.size()},
                   {"solver_iterations", run.solver_iterations},
                   {"final_state", to_json(run.states.back())}};
  j["failure_step"] = run.failure_step ? nlohmann::json(*run.failure_step) : nlohmann::json();
  j["converged_step"] =
      run.converged_step ? nlohmann::json(*run.converged_step) : nlohmann::json();
  const auto alpha = relaxed_dp_alpha(run, cfg);
  j["relaxed_dp_alpha"] = alpha ? nlohmann::json(*alpha) : nlohmann::json();
  return j;
}

namespace detail {

inline std::string horizon_cell(const HorizonResult& r) {
  if (r.n_hat) return std::to_string(*r.n_hat);
  return r.runs.empty() ? "NA" : ">" + std::to_string(r.runs.back().horizon);
}

}  // namespace detail

/// Table in the layout of the printed tables: one column per initial state,
/// the state rows first and one horizon row per cost.
inline void write_table_csv(std::ostream& os, const TableReport& rep) {
  const auto& sp = rep.spec;
  auto row = [&](std::string_view name, auto cell) {
    os << name;
    for (std::size_t i = 0; i < sp.states.size(); ++i) os << ',' << cell(i);
    os << '\n';
  };
  auto coord = [&](int j) { return [&, j](std::size_t i) { return fmt(sp.states[i][j]); }; };
  row("x1", coord(0));
  row("x2", coord(1));
  row("x3", coord(2));
  row("x4", coord(3));
  for (std::size_t c = 0; c < rep.rows.size(); ++c) {
    const std::string name =
        sp.costs[c] == CostKind::Quartic ? "N_hat" : "N_tilde";
    row(name, [&](std::size_t i) { return detail::horizon_cell(rep.rows[c][i]); });
  }
}

inline nlohmann::json table_sidecar(const TableReport& rep, const nlohmann::json& config) {
  auto j = manifest(config, "horizon");
  const auto& sp = rep.spec;
  j["table_id"] = sp.table_id;
  j["dt"] = sp.mpc.dt;
  j["sim_duration"] = sp.mpc.sim_duration;
  j["horizon_range"] = {sp.n_min, sp.n_max};
  j["seconds"] = rep.seconds;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t c = 0; c < rep.rows.size(); ++c) {
    MpcConfig cfg = sp.mpc;
    cfg.cost = sp.costs[c];
    for (std::size_t i = 0; i < rep.rows[c].size(); ++i) {
      const auto& r = rep.rows[c][i];
      nlohmann::json e{{"cost", to_string(sp.costs[c])}, {"x0", to_json(r.x0)}};
      e["n_hat"] = r.n_hat ? nlohmann::json(*r.n_hat) : nlohmann::json();
      if (c < sp.reference.size() && i < sp.reference[c].size()) {
        e["reference"] = sp.reference[c][i];
      }
      nlohmann::json runs = nlohmann::json::array();
      for (const auto& v : r.runs) {
        nlohmann::json rv{{"N", v.horizon},
                          {"converged", v.converged},
                          {"feasible", v.feasible},
                          {"steps", v.steps},
                          {"seconds", v.seconds}};
        rv["failure_step"] = v.failure_step ? nlohmann::json(*v.failure_step) : nlohmann::json();
        runs.push_back(rv);
      }
      e["runs"] = runs;
      if (r.run) {
        cfg.horizon = *r.n_hat;
        e["n_hat_run"] = run_verdict(*r.run, cfg);
      }
      rows.push_back(e);
    }
  }
  j["entries"] = rows;
  return j;
}

}  // namespace nhmpc

#endif  // NHMPC_REPORT_HPP
