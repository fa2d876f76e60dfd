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

#ifndef NHMPC_MPC_HPP
#define NHMPC_MPC_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nhmpc/dynamics.hpp"
#include "nhmpc/ocp.hpp"
#include "nhmpc/viability.hpp"

namespace nhmpc {

struct MpcConfig {
  double dt = 0.02;
  int horizon = 34;
  CostKind cost = CostKind::Quartic;
  InputBox box;
  WallConstraint wall;
  double sim_duration = 400.0;
  double eps = 1e-2;
  double settle_time = 2.0;
  SolverOptions solver;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (!(sim_duration >= 0.0) || !(settle_time >= 0.0)) {
      throw std::invalid_argument("durations must be nonnegative");
    }
    box.validate();
    wall.validate();
  }

  /// Number of samples the state must stay inside the ball.
  int settle_steps() const { return int(std::ceil(settle_time / dt - 1e-9)); }
  int max_steps() const { return int(std::llround(sim_duration / dt)); }
};

struct ClosedLoopRun {
  std::vector<State> states;   ///< x_0 .. x_K
  std::vector<Input> inputs;   ///< u_0 .. u_{K-1}
  std::vector<double> values;  ///< V_T(x_k) for every solved step
  bool converged = false;
  bool feasible = true;
  std::optional<int> failure_step;
  std::optional<int> converged_step;  ///< first sample of the settled window
  int solver_iterations = 0;
  double dt = 0.0;
};

/// Homogeneous norm compatible with the dilation weights (1, 2, 1, 1).
inline double weighted_norm(const State& x) {
  return std::sqrt(x.x1 * x.x1 + std::abs(x.x2) + x.x3 * x.x3 + x.x4 * x.x4);
}

/// True once the weighted norm has stayed below eps for the settle time.
inline bool is_converged(const std::vector<State>& states,
                         const MpcConfig& cfg) {
  const int need = cfg.settle_steps();
  int inside = 0;
  for (const auto& x : states) {
    inside = weighted_norm(x) < cfg.eps ? inside + 1 : 0;
    if (inside > need) return true;
  }
  return false;
}

namespace detail {

inline int settled_since(const std::vector<State>& states, const MpcConfig& cfg) {
  const int need = cfg.settle_steps();
  int inside = 0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    inside = weighted_norm(states[k]) < cfg.eps ? inside + 1 : 0;
    if (inside > need) return int(k) - need;
  }
  return -1;
}

}  // namespace detail

/// Checks samples and the inter-sample flow at dt/10 checkpoints.
inline bool check_feasibility(const ClosedLoopRun& run,
                              const WallConstraint& wall, double tol = 1e-9) {
  for (const auto& x : run.states) {
    if (wall.violation(x) > tol) return false;
  }
  const double dt = run.dt;
  for (std::size_t k = 0; k < run.inputs.size() && k < run.states.size(); ++k) {
    for (int j = 1; j < 10; ++j) {
      const State y = flow_constant_input(run.states[k], run.inputs[k], dt * j / 10);
      if (wall.violation(y) > tol) return false;
    }
  }
  return true;
}

/// Sampled-data MPC loop without terminal ingredients.
inline ClosedLoopRun run_mpc(const State& x0, const MpcConfig& cfg) {
  cfg.validate();
  ClosedLoopRun run;
  run.dt = cfg.dt;
  run.states.push_back(x0);
  const int need = cfg.settle_steps();
  const int max_steps = cfg.max_steps();
  std::optional<ControlSequence> warm;
  int inside = weighted_norm(x0) < cfg.eps ? 1 : 0;
  if (x0 == State{}) {
    run.converged = true;
    run.converged_step = 0;
    return run;
  }

  for (int k = 0; k < max_steps; ++k) {
    if (inside > need) break;
    const State& x = run.states.back();
    const OcpProblem p{x, cfg.horizon, cfg.dt, cfg.cost, cfg.box, cfg.wall};
    const OcpSolution sol = solve_ocp(p, warm, cfg.solver);
    run.solver_iterations += sol.iterations;
    if (!sol.feasible) {
      run.feasible = false;
      run.failure_step = k;
      break;
    }
    run.values.push_back(sol.value);
    const Input u = cfg.box.project(sol.controls.steps.front());
    run.inputs.push_back(u);
    run.states.push_back(flow_constant_input(x, u, cfg.dt));
    inside = weighted_norm(run.states.back()) < cfg.eps ? inside + 1 : 0;

    ControlSequence shifted = sol.controls;
    shifted.steps.erase(shifted.steps.begin());
    shifted.steps.push_back(sol.controls.steps.back());
    warm = std::move(shifted);
  }

  if (run.feasible && !check_feasibility(run, cfg.wall)) {
    run.feasible = false;
  }
  const int since = detail::settled_since(run.states, cfg);
  run.converged = run.feasible && since >= 0;
  if (since >= 0) run.converged_step = since;
  return run;
}

}  // namespace nhmpc

#endif  // NHMPC_MPC_HPP
