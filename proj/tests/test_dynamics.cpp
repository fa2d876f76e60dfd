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

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "nhmpc/dynamics.hpp"
#include "oracles.hpp"

namespace nhmpc {
namespace {

constexpr double kPi = std::numbers::pi;

void ExpectState(const State& a, const State& b, double tol) {
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], tol) << "component " << i;
}

TEST(Dynamics, VectorField) {
  ExpectState(eval_dynamics({}, {}), {}, 0.0);
  ExpectState(eval_dynamics({0, 0, 0, 1}, {}), {1, 0, 0, 0}, 0.0);
  ExpectState(eval_dynamics({0, 0, kPi / 2, 2}, {2, -2}), {0, 2, 2, -2}, 1e-15);
}

TEST(Dynamics, ReflectionEquivariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const State x{d(rng), d(rng), d(rng), d(rng)};
    const Input u{d(rng), d(rng)};
    const State f = eval_dynamics(x, u);
    const State g = eval_dynamics({x.x1, -x.x2, -x.x3, x.x4}, {-u.u1, u.u2});
    ExpectState(g, {f.x1, -f.x2, -f.x3, f.x4}, 1e-14);
    for (auto kind : {CostKind::Quartic, CostKind::Quadratic}) {
      EXPECT_DOUBLE_EQ(stage_cost(x, u, kind),
                       stage_cost({x.x1, -x.x2, -x.x3, x.x4}, {-u.u1, u.u2}, kind));
    }
  }
}

TEST(Dynamics, Adjoint) {
  ExpectState(State::from_array(eval_adjoint({1, 2, 3, 4}, {}).as_array()), {}, 0.0);
  const Costate a = eval_adjoint({1, 0, kPi / 2, 2}, {1, 0, 0, 0});
  EXPECT_NEAR(a.l1, 0, 1e-15);
  EXPECT_NEAR(a.l3, 2, 1e-15);
  EXPECT_NEAR(a.l4, 0, 1e-15);
  const Costate b = eval_adjoint({1, 0, 0, 5}, {1, 0, 0, 0});
  EXPECT_NEAR(b.l3, 0, 1e-15);
  EXPECT_NEAR(b.l4, -1, 1e-15);
}

TEST(Dynamics, HamiltonianConstantAlongJointFlow) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    State x{d(rng), d(rng), d(rng), 4 * d(rng)};
    Costate l{d(rng), d(rng), d(rng), d(rng)};
    const Input u{d(rng), d(rng)};
    const double h0 = hamiltonian(x, l, u);
    const double h = 1e-3;
    for (int k = 0; k < 785; ++k) test::rk4_joint(x, l, u, h);
    EXPECT_NEAR(hamiltonian(x, l, u), h0, 1e-6);
  }
}

TEST(Dynamics, Homogeneous) {
  ExpectState(eval_homogeneous({}, {}), {}, 0.0);
  ExpectState(eval_homogeneous({0, 0, 1, 1}, {}), {1, 1, 0, 0}, 0.0);
  // The gap to the full model shrinks like x3^2 |x4|.
  double prev = 0.0;
  for (double s : {1e-1, 5e-2, 2.5e-2, 1.25e-2}) {
    const State x{s, s * s, s, s};
    const State f = eval_dynamics(x, {});
    const State g = eval_homogeneous(x, {});
    const double gap = std::hypot(f.x1 - g.x1, f.x2 - g.x2);
    const double scaled = gap / (s * s * s);
    EXPECT_LT(scaled, 0.51);
    if (prev > 0.0) EXPECT_NEAR(scaled, prev, 0.01);
    prev = scaled;
  }
}

TEST(Dynamics, DilationWeights) {
  const State x{1, 2, 3, 4};
  const State y = HomogeneousModel::dilate(x, 0.5);
  ExpectState(y, {0.5, 0.5, 1.5, 2}, 0.0);
  // f(dilate(x), dilate(u)) = dilate(f(x, u)) for degree 0 with weights r.
  const State fx = eval_homogeneous(x, {1, 1});
  const State fy = eval_homogeneous(y, {0.5, 0.5});
  ExpectState(fy, HomogeneousModel::dilate(fx, 0.5), 1e-15);
}

TEST(StageCost, Values) {
  for (auto kind : {CostKind::Quartic, CostKind::Quadratic}) {
    EXPECT_EQ(stage_cost({}, {}, kind), 0.0);
  }
  EXPECT_EQ(stage_cost({1, 1, 1, 1}, {1, 1}, CostKind::Quartic), 6.0);
  EXPECT_EQ(stage_cost({2, 0, 0, 0}, {}, CostKind::Quartic), 16.0);
  EXPECT_EQ(stage_cost({2, 0, 0, 0}, {}, CostKind::Quadratic), 4.0);
  EXPECT_EQ(min_stage_cost({}, CostKind::Quartic), 0.0);
  EXPECT_EQ(min_stage_cost({1, 0, 0, 0}, CostKind::Quartic), 1.0);
  EXPECT_EQ(min_stage_cost({0, 2, 0, 0}, CostKind::Quartic), 4.0);
  EXPECT_EQ(cost_kind_from_string("quadratic"), CostKind::Quadratic);
  EXPECT_THROW(cost_kind_from_string("cubic"), std::invalid_argument);
}

TEST(StageCost, GradientMatchesDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-2, 2);
  for (auto kind : {CostKind::Quartic, CostKind::Quadratic}) {
    const State x{d(rng), d(rng), d(rng), d(rng)};
    const Input u{d(rng), d(rng)};
    const auto g = stage_cost_gradient(x, u, kind);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      State a = x, b = x;
      a[i] += h;
      b[i] -= h;
      EXPECT_NEAR(g.dx[i], (stage_cost(a, u, kind) - stage_cost(b, u, kind)) / (2 * h), 1e-6);
    }
    const double du1 = (stage_cost(x, {u.u1 + h, u.u2}, kind) -
                        stage_cost(x, {u.u1 - h, u.u2}, kind)) / (2 * h);
    EXPECT_NEAR(g.du[0], du1, 1e-6);
  }
}

TEST(Flow, Examples) {
  const State x{0.3, -1, 0.7, 2};
  ExpectState(flow_constant_input(x, {1, 1}, 0.0), x, 0.0);
  ExpectState(flow_constant_input({0, 0, 0, 3}, {}, 2.0), {6, 0, 0, 3}, 1e-14);
  const State y = flow_constant_input({-3.55, 0, 0, 9.67}, {2, -2}, kPi / 4);
  ExpectState(y, {1.000, 4.335, kPi / 2, 8.099}, 1e-3);
  EXPECT_THROW(flow_constant_input(x, {}, -1.0), std::invalid_argument);
}

TEST(Flow, SmoothAcrossZeroTurnRate) {
  const State x{0.1, 0.2, 0.3, 1.5};
  const double dt = 0.7;
  const State at0 = flow_constant_input(x, {0.0, -0.4}, dt);
  for (double u1 : {1e-12, 1e-9, 1e-7, 1e-5}) {
    const State a = flow_constant_input(x, {u1, -0.4}, dt);
    const State b = flow_constant_input(x, {-u1, -0.4}, dt);
    for (int i = 0; i < 4; ++i) {
      // Symmetric difference: linear terms cancel, leaving O(u1^2).
      EXPECT_NEAR(0.5 * (a[i] + b[i]), at0[i], 10 * u1 * u1 + 1e-15);
    }
  }
  // Switch between the series and the closed-form moments.
  for (double z : {0.4999999, 0.5, 0.5000001}) {
    const State a = flow_constant_input(x, {z / dt, 0.3}, dt);
    const State r = test::rk4(x, {z / dt, 0.3}, dt, 4000);
    ExpectState(a, r, 1e-12);
  }
}

TEST(Flow, MatchesRk4) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int i = 0; i < 300; ++i) {
    const State x{5 * d(rng), 5 * d(rng), 4 * d(rng), 15 * d(rng)};
    const Input u{2 * d(rng), 2 * d(rng)};
    const double dt = 1.0 + d(rng);
    const State a = flow_constant_input(x, u, dt);
    const State r = test::rk4(x, u, dt, 2000);
    for (int j = 0; j < 4; ++j) {
      EXPECT_LE(std::abs(a[j] - r[j]), 1e-8 * std::max(1.0, std::abs(r[j])));
    }
  }
}

TEST(Flow, SensitivityMatchesDifferences) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const State x{d(rng), d(rng), 3 * d(rng), 5 * d(rng)};
    const Input u{2 * d(rng), 2 * d(rng)};
    const double dt = 0.5 + 0.5 * d(rng);
    const auto s = flow_sensitivity(x, u, dt);
    ExpectState(s.next, flow_constant_input(x, u, dt), 1e-13);
    const double h = 1e-6;
    for (int c = 0; c < 4; ++c) {
      State a = x, b = x;
      a[c] += h;
      b[c] -= h;
      const State fa = flow_constant_input(a, u, dt), fb = flow_constant_input(b, u, dt);
      for (int r = 0; r < 4; ++r) EXPECT_NEAR(s.dx[r][c], (fa[r] - fb[r]) / (2 * h), 1e-7);
    }
    for (int c = 0; c < 2; ++c) {
      Input a = u, b = u;
      (c == 0 ? a.u1 : a.u2) += h;
      (c == 0 ? b.u1 : b.u2) -= h;
      const State fa = flow_constant_input(x, a, dt), fb = flow_constant_input(x, b, dt);
      for (int r = 0; r < 4; ++r) EXPECT_NEAR(s.du[r][c], (fa[r] - fb[r]) / (2 * h), 1e-7);
    }
  }
}

TEST(InputBox, ProjectionAndValidation) {
  const InputBox box = InputBox::make({-1, -2}, {3, 5});
  EXPECT_TRUE(box.contains({0, 0}));
  EXPECT_FALSE(box.contains({3.5, 0}));
  const Input p = box.project({7, -9});
  EXPECT_EQ(p, (Input{3, -2}));
  EXPECT_EQ(box.project(p), p);
  EXPECT_FALSE(box.is_symmetric());
  EXPECT_TRUE(InputBox{}.is_symmetric());
  EXPECT_THROW(InputBox::make({1, -1}, {2, 1}), std::invalid_argument);
}

TEST(WrapAngle, Range) {
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-kPi / 2), -kPi / 2, 0.0);
  EXPECT_NEAR(wrap_angle(2 * kPi + 0.1), 0.1, 1e-12);
}

}  // namespace
}  // namespace nhmpc
