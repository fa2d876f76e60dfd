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

// Finite-horizon optimal control problem with zero-order-hold inputs.
//
//   minimise   sum_{k<N} l(x_k, u_k) * dt
//   subject to x_{k+1} = flow(x_k, u_k, dt),  u_k in box,
//              a1 x1(t) + a2 x2(t) <= b  on (0, N dt].
//
// Solved by single shooting: spectral projected gradient on the inputs with
// an adjoint (reverse sweep) gradient, and an augmented Lagrangian for the
// wall constraint.

#ifndef NHMPC_OCP_HPP
#define NHMPC_OCP_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "nhmpc/dynamics.hpp"
#include "nhmpc/viability.hpp"

namespace nhmpc {

struct ControlSequence {
  std::vector<Input> steps;
  double dt = 0.02;

  int size() const { return int(steps.size()); }
  double horizon() const { return dt * steps.size(); }

  static ControlSequence constant(int n, double dt, Input u = {}) {
    return {std::vector<Input>(std::size_t(n), u), dt};
  }
};

/// Exact sampled trajectory under zero-order hold; N + 1 states.
inline std::vector<State> rollout(const State& x0, const ControlSequence& c) {
  std::vector<State> traj;
  traj.reserve(c.steps.size() + 1);
  traj.push_back(x0);
  for (const auto& u : c.steps) {
    traj.push_back(flow_constant_input(traj.back(), u, c.dt));
  }
  return traj;
}

/// Left-endpoint rectangle rule.
inline double trajectory_cost(const std::vector<State>& traj,
                              const ControlSequence& c, CostKind kind) {
  if (traj.size() < c.steps.size()) {
    throw std::invalid_argument("trajectory shorter than control sequence");
  }
  double j = 0.0;
  for (std::size_t k = 0; k < c.steps.size(); ++k) {
    j += stage_cost(traj[k], c.steps[k], kind);
  }
  return j * c.dt;
}

struct OcpProblem {
  State x0;
  int horizon = 1;
  double dt = 0.02;
  CostKind cost = CostKind::Quartic;
  InputBox box;
  WallConstraint wall;
};

enum class OcpStatus { Converged, MaxIterations, Infeasible };

inline std::string_view to_string(OcpStatus s) {
  switch (s) {
    case OcpStatus::Converged: return "converged";
    case OcpStatus::MaxIterations: return "max_iterations";
    case OcpStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct OcpSolution {
  ControlSequence controls;
  std::vector<State> trajectory;
  double value = std::numeric_limits<double>::infinity();
  bool feasible = false;
  int iterations = 0;
  OcpStatus status = OcpStatus::Infeasible;
  double max_violation = std::numeric_limits<double>::infinity();
};

/// One record per inner iteration, for diagnostics.
struct SolverLogRecord {
  int outer = 0;
  int iteration = 0;
  double value = 0.0;
  double violation = 0.0;
};

struct SolverOptions {
  int max_iterations = 5000;     ///< inner iterations summed over all passes
  double pg_tol = 1e-8;          ///< projected-gradient norm relative to |J|
  double rel_tol = 1e-10;        ///< relative objective change
  double feas_tol = 1e-9;        ///< wall violation accepted as feasible
  int max_outer = 40;
  double penalty0 = 1e2;
  double penalty_growth = 10.0;
  double penalty_max = 1e12;
  bool exploratory_starts = true;
  std::function<void(const SolverLogRecord&)> log;
};

/// Largest wall violation over one zero-order-hold step, (0, dt].
///
/// The wall coordinate a.p(t) has derivative x4(t) |a| cos(x3(t) - phi), so
/// interior extrema sit where the speed vanishes or the heading crosses the
/// wall-parallel direction; both are linear in t.
struct StepPeak {
  double t = 0.0;
  double value = 0.0;
};

inline StepPeak step_wall_peak(const State& x, const Input& u, double dt,
                               const WallConstraint& wall) {
  StepPeak best{dt, wall.violation(flow_constant_input(x, u, dt))};
  auto consider = [&](double t) {
    if (!(t > 0.0 && t < dt)) return;
    const double v = wall.violation(flow_constant_input(x, u, t));
    if (v > best.value) best = {t, v};
  };
  if (u.u2 != 0.0) consider(-x.x4 / u.u2);
  if (u.u1 != 0.0) {
    const double base = std::atan2(wall.a2, wall.a1) + std::numbers::pi / 2;
    const double h0 = x.x3 - base;
    const double h1 = h0 + u.u1 * dt;
    const double lo = std::min(h0, h1), hi = std::max(h0, h1);
    for (double m = std::ceil(lo / std::numbers::pi);
         m <= std::floor(hi / std::numbers::pi); m += 1.0) {
      consider((m * std::numbers::pi - h0) / u.u1);
    }
  }
  return best;
}

/// Reduced objective of the augmented Lagrangian and its input gradient.
class ShootingObjective {
 public:
  ShootingObjective(const OcpProblem& p) : p_(p) {
    if (p.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (!(p.dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!p.x0.is_finite()) throw std::invalid_argument("x0 must be finite");
    multipliers_.assign(std::size_t(p.horizon), 0.0);
    traj_.resize(std::size_t(p.horizon) + 1);
    sens_.resize(std::size_t(p.horizon));
    peaks_.resize(std::size_t(p.horizon));
  }

  int size() const { return p_.horizon; }
  double penalty() const { return penalty_; }
  void set_penalty(double rho) { penalty_ = rho; }
  std::vector<double>& multipliers() { return multipliers_; }

  /// Evaluates cost, augmented terms and (optionally) the gradient.
  double evaluate(const std::vector<Input>& u, std::vector<Input>* grad) {
    const double dt = p_.dt;
    const std::size_t n = u.size();
    traj_[0] = p_.x0;
    double cost = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      cost += stage_cost(traj_[k], u[k], p_.cost) * dt;
      if (grad) {
        sens_[k] = flow_sensitivity(traj_[k], u[k], dt);
        traj_[k + 1] = sens_[k].next;
      } else {
        traj_[k + 1] = flow_constant_input(traj_[k], u[k], dt);
      }
      peaks_[k] = step_wall_peak(traj_[k], u[k], dt, p_.wall);
    }
    last_cost_ = cost;
    double aug = 0.0;
    max_violation_ = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      const double c = peaks_[k].value;
      max_violation_ = std::max(max_violation_, c);
      const double mu = multipliers_[k];
      const double shifted = std::max(0.0, mu + penalty_ * c);
      aug += (shifted * shifted - mu * mu) / (2.0 * penalty_);
    }
    if (grad) {
      grad->resize(n);
      Vec4 lam{};  // dL/dx_{k+1}
      for (std::size_t k = n; k-- > 0;) {
        const auto& s = sens_[k];
        const auto lg = stage_cost_gradient(traj_[k], u[k], p_.cost);
        Input g{lg.du[0] * dt, lg.du[1] * dt};
        Vec4 next{lg.dx[0] * dt, lg.dx[1] * dt, lg.dx[2] * dt, lg.dx[3] * dt};
        const double w = std::max(0.0, multipliers_[k] + penalty_ * peaks_[k].value);
        if (w > 0.0) {
          if (peaks_[k].t == dt) {
            lam[0] += w * p_.wall.a1;
            lam[1] += w * p_.wall.a2;
          } else {
            // Envelope: the peak time is stationary, differentiate at fixed t.
            const auto sp = flow_sensitivity(traj_[k], u[k], peaks_[k].t);
            for (int j = 0; j < 4; ++j) {
              next[j] += w * (p_.wall.a1 * sp.dx[0][j] + p_.wall.a2 * sp.dx[1][j]);
            }
            g.u1 += w * (p_.wall.a1 * sp.du[0][0] + p_.wall.a2 * sp.du[1][0]);
            g.u2 += w * (p_.wall.a1 * sp.du[0][1] + p_.wall.a2 * sp.du[1][1]);
          }
        }
        for (int i = 0; i < 4; ++i) {
          g.u1 += s.du[i][0] * lam[i];
          g.u2 += s.du[i][1] * lam[i];
        }
        (*grad)[k] = g;
        for (int j = 0; j < 4; ++j) {
          for (int i = 0; i < 4; ++i) next[j] += s.dx[i][j] * lam[i];
        }
        lam = next;
      }
    }
    return cost + aug;
  }

  double last_cost() const { return last_cost_; }
  double max_violation() const { return max_violation_; }
  const std::vector<State>& trajectory() const { return traj_; }

  void update_multipliers() {
    for (std::size_t k = 0; k < multipliers_.size(); ++k) {
      multipliers_[k] =
          std::max(0.0, multipliers_[k] + penalty_ * peaks_[k].value);
    }
  }

 private:
  const OcpProblem& p_;
  double penalty_ = 1e2;
  std::vector<double> multipliers_;
  std::vector<State> traj_;
  std::vector<FlowSensitivity> sens_;
  std::vector<StepPeak> peaks_;
  double last_cost_ = 0.0;
  double max_violation_ = 0.0;
};

namespace detail {

inline double projected_gradient_norm(const std::vector<Input>& u,
                                      const std::vector<Input>& g,
                                      const InputBox& box) {
  double norm = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const Input p = box.project({u[k].u1 - g[k].u1, u[k].u2 - g[k].u2});
    norm = std::max({norm, std::abs(p.u1 - u[k].u1), std::abs(p.u2 - u[k].u2)});
  }
  return norm;
}

struct InnerResult {
  int iterations = 0;
  bool converged = false;
};

// Spectral projected gradient with a monotone Armijo search along the
// projection arc. The objective never increases between iterations.
inline InnerResult spg_minimize(ShootingObjective& obj, std::vector<Input>& u,
                                const InputBox& box, const SolverOptions& opt,
                                int budget, int outer) {
  constexpr double kArmijo = 1e-4;
  constexpr double kStepMin = 1e-12;
  constexpr double kStepMax = 1e12;
  InnerResult res;
  std::vector<Input> g, g_new, trial;
  double f = obj.evaluate(u, &g);
  double pg = projected_gradient_norm(u, g, box);
  double step = pg > 0.0 ? 1.0 / pg : 1.0;
  step = std::clamp(step, kStepMin, kStepMax);
  while (res.iterations < budget) {
    if (pg <= opt.pg_tol * std::abs(f)) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    trial.resize(u.size());
    double slope = 0.0;
    std::vector<Input> dir(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
      const Input p = box.project(
          {u[k].u1 - step * g[k].u1, u[k].u2 - step * g[k].u2});
      dir[k] = {p.u1 - u[k].u1, p.u2 - u[k].u2};
      slope += g[k].u1 * dir[k].u1 + g[k].u2 * dir[k].u2;
    }
    if (slope >= 0.0) {
      res.converged = true;
      break;
    }
    double lambda = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t k = 0; k < u.size(); ++k) {
        trial[k] = box.project({u[k].u1 + lambda * dir[k].u1,
                                u[k].u2 + lambda * dir[k].u2});
      }
      f_new = obj.evaluate(trial, nullptr);
      if (f_new <= f + kArmijo * lambda * slope) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      res.converged = true;  // no descent possible at working precision
      obj.evaluate(u, nullptr);
      break;
    }
    f_new = obj.evaluate(trial, &g_new);
    double ss = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double s1 = trial[k].u1 - u[k].u1, s2 = trial[k].u2 - u[k].u2;
      ss += s1 * s1 + s2 * s2;
      sy += s1 * (g_new[k].u1 - g[k].u1) + s2 * (g_new[k].u2 - g[k].u2);
    }
    step = sy > 0.0 ? std::clamp(ss / sy, kStepMin, kStepMax) : kStepMax;
    const double change = std::abs(f - f_new);
    u.swap(trial);
    g.swap(g_new);
    f = f_new;
    pg = projected_gradient_norm(u, g, box);
    if (opt.log) {
      opt.log({outer, res.iterations, obj.last_cost(), obj.max_violation()});
    }
    if (change <= opt.rel_tol * std::abs(f)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace detail

/// Local solve from a single initial guess.
inline OcpSolution solve_ocp_from(const OcpProblem& p,
                                  std::vector<Input> guess,
                                  const SolverOptions& opt = {}) {
  p.box.validate();
  p.wall.validate();
  if (int(guess.size()) != p.horizon) {
    throw std::invalid_argument("initial guess length must equal horizon");
  }
  for (auto& u : guess) u = p.box.project(u);

  ShootingObjective obj(p);
  obj.set_penalty(opt.penalty0);
  int used = 0;
  bool inner_converged = false;
  double prev_violation = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < opt.max_outer && used < opt.max_iterations;
       ++outer) {
    const auto r = detail::spg_minimize(obj, guess, p.box, opt,
                                        opt.max_iterations - used, outer);
    used += r.iterations;
    inner_converged = r.converged;
    obj.evaluate(guess, nullptr);
    const double viol = std::max(0.0, obj.max_violation());
    if (viol <= opt.feas_tol && r.converged) break;
    obj.update_multipliers();
    if (viol > 0.25 * prev_violation) {
      obj.set_penalty(
          std::min(opt.penalty_max, obj.penalty() * opt.penalty_growth));
    }
    prev_violation = viol;
  }

  OcpSolution sol;
  sol.controls = {std::move(guess), p.dt};
  sol.trajectory = rollout(p.x0, sol.controls);
  sol.value = trajectory_cost(sol.trajectory, sol.controls, p.cost);
  sol.iterations = used;
  sol.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < sol.trajectory.size(); ++k) {
    sol.max_violation = std::max(
        sol.max_violation,
        step_wall_peak(sol.trajectory[k], sol.controls.steps[k], p.dt, p.wall).value);
  }
  sol.feasible = sol.max_violation <= opt.feas_tol;
  sol.status = !sol.feasible        ? OcpStatus::Infeasible
               : inner_converged    ? OcpStatus::Converged
                                    : OcpStatus::MaxIterations;
  return sol;
}

/// Full braking towards standstill with zero turn rate.
inline Input brake_input(const State& x, const InputBox& box) {
  if (x.x4 > 0.0) return {0.0, box.lo.u2};
  if (x.x4 < 0.0) return {0.0, box.hi.u2};
  return {};
}

/// Multi-start solve: the optional warm start, zero input and full braking
/// (plus exploratory starts when cold). The best feasible candidate wins;
/// ties keep the earlier start.
inline OcpSolution solve_ocp(const OcpProblem& p,
                             const std::optional<ControlSequence>& warm = {},
                             const SolverOptions& opt = {}) {
  std::vector<std::vector<Input>> starts;
  if (warm) {
    if (warm->size() != p.horizon) {
      throw std::invalid_argument("warm start length must equal horizon");
    }
    starts.push_back(warm->steps);
  }
  starts.emplace_back(std::size_t(p.horizon), Input{});
  starts.emplace_back(std::size_t(p.horizon), brake_input(p.x0, p.box));
  // From rest u = 0 is a stationary point of the reduced cost (heading has
  // no effect at zero speed), so a cold solve also tries turn-and-drive
  // sequences in all four sign combinations.
  if (!warm && opt.exploratory_starts) {
    for (double s1 : {1.0, -1.0}) {
      for (double s2 : {1.0, -1.0}) {
        const Input u{0.5 * (s1 > 0 ? p.box.hi.u1 : -p.box.lo.u1) * s1,
                      0.5 * (s2 > 0 ? p.box.hi.u2 : -p.box.lo.u2) * s2};
        std::vector<Input> seq(std::size_t(p.horizon), u);
        // Reverse the turn over the second half of the horizon.
        for (std::size_t k = seq.size() / 2; k < seq.size(); ++k) seq[k].u1 = -u.u1;
        starts.push_back(std::move(seq));
      }
    }
  }

  std::optional<OcpSolution> best;
  for (const auto& s : starts) {
    if (&s != &starts.front() && s == starts.front()) continue;
    auto sol = solve_ocp_from(p, s, opt);
    const bool better =
        !best || (sol.feasible && !best->feasible) ||
        (sol.feasible == best->feasible &&
         (sol.feasible ? sol.value < best->value
                       : sol.max_violation < best->max_violation));
    if (better) best = std::move(sol);
  }
  return *best;
}

/// V_T(x0) at T = n * dt; +inf when no feasible input sequence is found.
inline double value_function(const State& x0, int n, double dt, CostKind kind,
                             const InputBox& box = {},
                             const WallConstraint& wall = {},
                             const SolverOptions& opt = {}) {
  const OcpProblem p{x0, n, dt, kind, box, wall};
  const auto sol = solve_ocp(p, std::nullopt, opt);
  return sol.feasible ? sol.value : std::numeric_limits<double>::infinity();
}

}  // namespace nhmpc

#endif  // NHMPC_OCP_HPP
