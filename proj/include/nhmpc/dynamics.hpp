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

#ifndef NHMPC_DYNAMICS_HPP
#define NHMPC_DYNAMICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nhmpc {

using Vec4 = std::array<double, 4>;
using Mat4 = std::array<Vec4, 4>;

/// Planar vehicle state. The heading is stored unwrapped.
struct State {
  double x1 = 0.0;  ///< position along the constrained axis [m]
  double x2 = 0.0;  ///< lateral position [m]
  double x3 = 0.0;  ///< heading [rad]
  double x4 = 0.0;  ///< speed [m/s]

  constexpr double operator[](int i) const {
    return i == 0 ? x1 : i == 1 ? x2 : i == 2 ? x3 : x4;
  }
  constexpr double& operator[](int i) {
    return i == 0 ? x1 : i == 1 ? x2 : i == 2 ? x3 : x4;
  }
  constexpr Vec4 as_array() const { return {x1, x2, x3, x4}; }
  static constexpr State from_array(const Vec4& v) {
    return {v[0], v[1], v[2], v[3]};
  }
  bool is_finite() const {
    return std::isfinite(x1) && std::isfinite(x2) && std::isfinite(x3) &&
           std::isfinite(x4);
  }
  friend constexpr bool operator==(const State&, const State&) = default;
};

/// Time derivative of a State; same layout.
using StateDerivative = State;

struct Input {
  double u1 = 0.0;  ///< turn rate [rad/s]
  double u2 = 0.0;  ///< acceleration [m/s^2]

  constexpr double operator[](int i) const { return i == 0 ? u1 : u2; }
  constexpr double& operator[](int i) { return i == 0 ? u1 : u2; }
  friend constexpr bool operator==(const Input&, const Input&) = default;
};

/// Componentwise input bounds with lo < 0 < hi on both channels.
struct InputBox {
  Input lo{-2.0, -2.0};
  Input hi{2.0, 2.0};

  static InputBox symmetric(double turn, double accel) {
    return make({-turn, -accel}, {turn, accel});
  }

  static InputBox make(Input lo, Input hi) {
    InputBox box{lo, hi};
    box.validate();
    return box;
  }

  void validate() const {
    for (int i = 0; i < 2; ++i) {
      if (!(lo[i] < 0.0 && hi[i] > 0.0)) {
        throw std::invalid_argument(
            "input box requires lo < 0 < hi on every channel");
      }
    }
  }

  bool contains(const Input& u) const {
    return u.u1 >= lo.u1 && u.u1 <= hi.u1 && u.u2 >= lo.u2 && u.u2 <= hi.u2;
  }

  /// Componentwise clamp; idempotent.
  Input project(const Input& u) const {
    return {std::clamp(u.u1, lo.u1, hi.u1), std::clamp(u.u2, lo.u2, hi.u2)};
  }

  bool is_symmetric() const { return lo.u1 == -hi.u1 && lo.u2 == -hi.u2; }
};

/// Adjoint variable of the barrier construction.
struct Costate {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double l4 = 0.0;

  constexpr Vec4 as_array() const { return {l1, l2, l3, l4}; }
  constexpr bool is_zero() const {
    return l1 == 0.0 && l2 == 0.0 && l3 == 0.0 && l4 == 0.0;
  }
  friend constexpr bool operator==(const Costate&, const Costate&) = default;
};

/// Dilation weights of the homogeneous approximation near the origin.
struct HomogeneousModel {
  static constexpr std::array<int, 4> state_weights{1, 2, 1, 1};
  static constexpr std::array<int, 2> input_weights{1, 1};
  static constexpr int degree = 0;

  /// Applies the dilation x_i -> s^{r_i} x_i.
  static State dilate(const State& x, double s) {
    return {s * x.x1, s * s * x.x2, s * x.x3, s * x.x4};
  }
};

enum class CostKind { Quartic, Quadratic };

inline std::string_view to_string(CostKind kind) {
  return kind == CostKind::Quartic ? "quartic" : "quadratic";
}

inline CostKind cost_kind_from_string(std::string_view name) {
  if (name == "quartic") return CostKind::Quartic;
  if (name == "quadratic") return CostKind::Quadratic;
  throw std::invalid_argument("unknown cost kind: " + std::string(name));
}

inline StateDerivative eval_dynamics(const State& x, const Input& u) {
  return {x.x4 * std::cos(x.x3), x.x4 * std::sin(x.x3), u.u1, u.u2};
}

inline Costate eval_adjoint(const State& x, const Costate& lam) {
  const double c = std::cos(x.x3);
  const double s = std::sin(x.x3);
  return {0.0, 0.0, x.x4 * s * lam.l1 - x.x4 * c * lam.l2,
          -c * lam.l1 - s * lam.l2};
}

/// lambda^T f(x, u)
inline double hamiltonian(const State& x, const Costate& lam, const Input& u) {
  const auto f = eval_dynamics(x, u);
  return lam.l1 * f.x1 + lam.l2 * f.x2 + lam.l3 * f.x3 + lam.l4 * f.x4;
}

inline StateDerivative eval_homogeneous(const State& x, const Input& u) {
  return {x.x4, x.x3 * x.x4, u.u1, u.u2};
}

inline double stage_cost(const State& x, const Input& u, CostKind kind) {
  auto sq = [](double v) { return v * v; };
  if (kind == CostKind::Quartic) {
    return sq(sq(x.x1)) + sq(x.x2) + sq(sq(x.x3)) + sq(sq(x.x4)) +
           sq(sq(u.u1)) + sq(sq(u.u2));
  }
  return sq(x.x1) + sq(x.x2) + sq(x.x3) + sq(x.x4) + sq(u.u1) + sq(u.u2);
}

/// Gradients of stage_cost with respect to state and input.
struct StageCostGradient {
  Vec4 dx{};
  std::array<double, 2> du{};
};

inline StageCostGradient stage_cost_gradient(const State& x, const Input& u,
                                             CostKind kind) {
  StageCostGradient g;
  if (kind == CostKind::Quartic) {
    auto d4 = [](double v) { return 4.0 * v * v * v; };
    g.dx = {d4(x.x1), 2.0 * x.x2, d4(x.x3), d4(x.x4)};
    g.du = {d4(u.u1), d4(u.u2)};
  } else {
    g.dx = {2.0 * x.x1, 2.0 * x.x2, 2.0 * x.x3, 2.0 * x.x4};
    g.du = {2.0 * u.u1, 2.0 * u.u2};
  }
  return g;
}

/// min over unconstrained u of stage_cost; the input terms vanish at u = 0.
inline double min_stage_cost(const State& x, CostKind kind) {
  return stage_cost(x, Input{}, kind);
}

namespace detail {

// Moments E_k(z) = int_0^1 s^k exp(i z s) ds for k = 0, 1, 2.
struct PhaseMoments {
  std::complex<double> e0, e1, e2;
};

// Below this |z| the power series is used; it converges to round-off in
// well under 30 terms and avoids the 1/z^k cancellation of the closed form.
inline constexpr double kSeriesSwitch = 0.5;

inline PhaseMoments phase_moments(double z) {
  using C = std::complex<double>;
  const C iz(0.0, z);
  if (std::abs(z) < kSeriesSwitch) {
    C term(1.0, 0.0);  // (iz)^n / n!
    C e0, e1, e2;
    for (int n = 0; n < 30; ++n) {
      e0 += term / double(n + 1);
      e1 += term / double(n + 2);
      e2 += term / double(n + 3);
      term *= iz / double(n + 1);
      if (std::abs(term) < 1e-18) break;
    }
    return {e0, e1, e2};
  }
  const C ez = std::exp(iz);
  const C e0 = (ez - 1.0) / iz;
  const C e1 = (ez - e0) / iz;
  const C e2 = (ez - 2.0 * e1) / iz;
  return {e0, e1, e2};
}

}  // namespace detail

/// Exact solution of the vehicle dynamics under a constant input.
///
/// With p = x1 + i x2 the position obeys
///   p(t) = p(0) + exp(i x3) [x4 t E0(u1 t) + u2 t^2 E1(u1 t)],
/// where E_k(z) = int_0^1 s^k exp(i z s) ds. The moments are evaluated by
/// series near z = 0, so the map is smooth across u1 = 0.
inline State flow_constant_input(const State& x, const Input& u, double dt) {
  if (dt < 0.0) throw std::invalid_argument("flow duration must be >= 0");
  if (dt == 0.0) return x;
  const auto m = detail::phase_moments(u.u1 * dt);
  const std::complex<double> rot = std::polar(1.0, x.x3);
  const std::complex<double> dp = rot * (x.x4 * dt * m.e0 + u.u2 * dt * dt * m.e1);
  return {x.x1 + dp.real(), x.x2 + dp.imag(), x.x3 + u.u1 * dt,
          x.x4 + u.u2 * dt};
}

/// Flow together with its Jacobians w.r.t. the initial state and the input.
struct FlowSensitivity {
  State next;
  Mat4 dx{};                            ///< d next / d x, row-major
  std::array<std::array<double, 2>, 4> du{};  ///< d next / d u
};

inline FlowSensitivity flow_sensitivity(const State& x, const Input& u,
                                        double dt) {
  using C = std::complex<double>;
  const auto m = detail::phase_moments(u.u1 * dt);
  const C rot = std::polar(1.0, x.x3);
  const C i(0.0, 1.0);
  const C dp = rot * (x.x4 * dt * m.e0 + u.u2 * dt * dt * m.e1);

  // dE_k/dz = i E_{k+1}
  const C dp_dheading = i * dp;
  const C dp_dspeed = rot * dt * m.e0;
  const C dp_du2 = rot * dt * dt * m.e1;
  const C dp_du1 = rot * (x.x4 * dt * i * m.e1 + u.u2 * dt * dt * i * m.e2) * dt;

  FlowSensitivity s;
  s.next = {x.x1 + dp.real(), x.x2 + dp.imag(), x.x3 + u.u1 * dt,
            x.x4 + u.u2 * dt};
  s.dx[0] = {1.0, 0.0, dp_dheading.real(), dp_dspeed.real()};
  s.dx[1] = {0.0, 1.0, dp_dheading.imag(), dp_dspeed.imag()};
  s.dx[2] = {0.0, 0.0, 1.0, 0.0};
  s.dx[3] = {0.0, 0.0, 0.0, 1.0};
  s.du[0] = {dp_du1.real(), dp_du2.real()};
  s.du[1] = {dp_du1.imag(), dp_du2.imag()};
  s.du[2] = {dt, 0.0};
  s.du[3] = {0.0, dt};
  return s;
}

/// Classic RK4 step of eval_dynamics; used as an integration oracle and for
/// the costate transport along barrier curves.
inline State rk4_step(const State& x, const Input& u, double h) {
  auto add = [](const State& a, const State& b, double w) {
    return State{a.x1 + w * b.x1, a.x2 + w * b.x2, a.x3 + w * b.x3,
                 a.x4 + w * b.x4};
  };
  const auto k1 = eval_dynamics(x, u);
  const auto k2 = eval_dynamics(add(x, k1, h / 2), u);
  const auto k3 = eval_dynamics(add(x, k2, h / 2), u);
  const auto k4 = eval_dynamics(add(x, k3, h), u);
  return {x.x1 + h / 6 * (k1.x1 + 2 * k2.x1 + 2 * k3.x1 + k4.x1),
          x.x2 + h / 6 * (k1.x2 + 2 * k2.x2 + 2 * k3.x2 + k4.x2),
          x.x3 + h / 6 * (k1.x3 + 2 * k2.x3 + 2 * k3.x3 + k4.x3),
          x.x4 + h / 6 * (k1.x4 + 2 * k2.x4 + 2 * k3.x4 + k4.x4)};
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - std::numbers::pi;
}

}  // namespace nhmpc

#endif  // NHMPC_DYNAMICS_HPP
