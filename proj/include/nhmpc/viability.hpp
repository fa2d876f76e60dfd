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

// Viability kernel of the vehicle under a single half-plane wall.
//
// The kernel boundary away from the wall (the barrier) is swept by bang-bang
// extremals that brush the wall tangentially. Every extremal brakes at full
// rate and turns at full rate towards the wall-parallel heading. Traced
// backwards from a tangent point they stay on the barrier for pi/(hi1 - lo1)
// seconds, where the left-turning and right-turning sheets meet in a kink.

#ifndef NHMPC_VIABILITY_HPP
#define NHMPC_VIABILITY_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nhmpc/dynamics.hpp"

namespace nhmpc {

/// Half-plane a1*x1 + a2*x2 <= b. The canonical wall is x1 <= 1.
struct WallConstraint {
  double a1 = 1.0;
  double a2 = 0.0;
  double b = 1.0;

  static WallConstraint make(double a1, double a2, double b) {
    WallConstraint w{a1, a2, b};
    w.validate();
    return w;
  }
  void validate() const {
    if (a1 == 0.0 && a2 == 0.0) {
      throw std::invalid_argument("wall normal must be nonzero");
    }
  }
  /// Positive when violated.
  double violation(const State& x) const { return a1 * x.x1 + a2 * x.x2 - b; }
  bool is_canonical() const { return a1 == 1.0 && a2 == 0.0 && b == 1.0; }
};

/// Rigid motion taking the wall to the canonical x1 <= 1. Speed is unchanged
/// and the heading is shifted by the rotation angle.
inline State normalize_halfplane(const WallConstraint& w, const State& x) {
  w.validate();
  if (w.is_canonical()) return x;
  const double norm = std::hypot(w.a1, w.a2);
  const double c = w.a1 / norm;
  const double s = w.a2 / norm;
  const double phi = std::atan2(w.a2, w.a1);
  return {c * x.x1 + s * x.x2 - w.b / norm + 1.0, -s * x.x1 + c * x.x2,
          x.x3 - phi, x.x4};
}

inline State denormalize_halfplane(const WallConstraint& w, const State& y) {
  w.validate();
  if (w.is_canonical()) return y;
  const double norm = std::hypot(w.a1, w.a2);
  const double c = w.a1 / norm;
  const double s = w.a2 / norm;
  const double phi = std::atan2(w.a2, w.a1);
  const double along = y.x1 - 1.0 + w.b / norm;
  return {c * along - s * y.x2, s * along + c * y.x2, y.x3 + phi, y.x4};
}

enum class TangentFamily { T1, T2, T3, T4 };

inline std::string_view to_string(TangentFamily f) {
  switch (f) {
    case TangentFamily::T1: return "T1";
    case TangentFamily::T2: return "T2";
    case TangentFamily::T3: return "T3";
    case TangentFamily::T4: return "T4";
  }
  return "?";
}

inline constexpr std::array<TangentFamily, 4> kAllFamilies{
    TangentFamily::T1, TangentFamily::T2, TangentFamily::T3,
    TangentFamily::T4};

/// Heading (+-pi/2) and speed sign of the tangent points of a family.
inline double family_heading(TangentFamily f) {
  return (f == TangentFamily::T1 || f == TangentFamily::T2)
             ? std::numbers::pi / 2
             : -std::numbers::pi / 2;
}
inline double family_speed_sign(TangentFamily f) {
  return (f == TangentFamily::T1 || f == TangentFamily::T3) ? 1.0 : -1.0;
}

/// min_u L_f g at a point on the canonical wall.
inline double tangentiality_residual(const State& z, const InputBox& /*box*/) {
  return z.x4 * std::cos(z.x3);
}

/// Constant bang-bang input of the barrier curves ending on a family.
///
/// The input minimises lambda^T f with the costate transported back from
/// lambda = (1, 0, 0, 0) at the tangent point: full braking (towards zero
/// speed) and full turning towards the wall-parallel heading.
inline Input barrier_control(TangentFamily f, const InputBox& box) {
  switch (f) {
    case TangentFamily::T1: return {box.hi.u1, box.lo.u2};
    case TangentFamily::T2: return {box.lo.u1, box.hi.u2};
    case TangentFamily::T3: return {box.lo.u1, box.lo.u2};
    case TangentFamily::T4: return {box.hi.u1, box.hi.u2};
  }
  return {};
}

/// Time between the kink and the tangent point.
inline double barrier_duration(const InputBox& box) {
  return std::numbers::pi / (box.hi.u1 - box.lo.u1);
}

struct BarrierSample {
  double t = 0.0;
  State x;
  Costate lambda;
};

struct BarrierCurve {
  TangentFamily family = TangentFamily::T1;
  State tangent_point;
  Input control;
  double t_bar = 0.0;
  double t_hat = 0.0;
  std::vector<BarrierSample> samples;  ///< kink first, tangent point last

  const State& kink() const { return samples.front().x; }
};

namespace detail {

// Constant-input flow for either sign of time.
inline State flow_signed(const State& x, const Input& u, double t) {
  if (t >= 0.0) return flow_constant_input(x, u, t);
  // In reversed time the heading runs backwards and the negated speed
  // w = -x4 obeys dw/ds = u2, so the forward flow applies to (x1, x2, x3, w).
  const State r{x.x1, x.x2, x.x3, -x.x4};
  const State y = flow_constant_input(r, Input{-u.u1, u.u2}, -t);
  return {y.x1, y.x2, y.x3, -y.x4};
}

inline bool same_heading(double a, double b, double tol) {
  return std::abs(wrap_angle(a - b)) <= tol;
}

}  // namespace detail

/// Traces the barrier curve ending at tangent point z backwards to its kink.
///
/// States come from the exact constant-input flow. The costate has the closed
/// form lambda = (1, 0, x2 - z2, int_t^tbar cos x3 ds), which solves the
/// adjoint equation with lambda(tbar) = (1, 0, 0, 0).
inline BarrierCurve trace_barrier_curve(const State& z, TangentFamily fam,
                                        const InputBox& box, int n_samples) {
  constexpr double tol = 1e-9;
  if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (std::abs(z.x1 - 1.0) > tol) {
    throw std::invalid_argument("tangent point must lie on the wall x1 = 1");
  }
  if (z.x4 == 0.0 || std::abs(tangentiality_residual(z, box)) > tol) {
    throw std::invalid_argument("not a point of ultimate tangentiality");
  }
  if (!detail::same_heading(z.x3, family_heading(fam), tol) ||
      z.x4 * family_speed_sign(fam) <= 0.0) {
    throw std::invalid_argument("tangent point inconsistent with family " +
                                std::string(to_string(fam)));
  }

  BarrierCurve curve;
  curve.family = fam;
  curve.tangent_point = z;
  curve.control = barrier_control(fam, box);
  curve.t_bar = 0.0;
  curve.t_hat = curve.t_bar - barrier_duration(box);
  curve.samples.reserve(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    const double t =
        curve.t_hat + (curve.t_bar - curve.t_hat) * k / double(n_samples - 1);
    const double to_go = curve.t_bar - t;
    const State x = k == n_samples - 1 ? z
                                       : detail::flow_signed(z, curve.control,
                                                             -to_go);
    const auto m = detail::phase_moments(curve.control.u1 * to_go);
    const double cos_integral =
        (std::polar(1.0, x.x3) * to_go * m.e0).real();
    curve.samples.push_back({t, x, Costate{1.0, 0.0, x.x2 - z.x2, cos_integral}});
  }
  return curve;
}

/// Kink of the barrier for forward speed v under a symmetric box
/// [-a, a] x [-b, b]: x1 = 1 - v/a + b*tau/a - b/a^2 with tau = pi/(2a).
inline State kink_locus(double v, const InputBox& box) {
  if (!(v > 0.0)) throw std::invalid_argument("kink speed must be positive");
  if (!box.is_symmetric()) {
    throw std::invalid_argument("kink_locus requires a symmetric input box");
  }
  const double a = box.hi.u1;
  const double b = box.hi.u2;
  const double tau = barrier_duration(box);
  return {1.0 - v / a + b * tau / a - b / (a * a), 0.0, 0.0, v};
}

enum class Membership { Interior, Boundary, Exterior };

inline std::string_view to_string(Membership m) {
  switch (m) {
    case Membership::Interior: return "interior";
    case Membership::Boundary: return "boundary";
    case Membership::Exterior: return "exterior";
  }
  return "?";
}

/// Extremal reaching the wall from a state: which family and how far the
/// wall-normal coordinate advances before tangency or standstill.
struct ExtremalReach {
  double advance = 0.0;
  TangentFamily family = TangentFamily::T1;
  Input control;
  bool threatening = false;  ///< false when heading away from the wall
};

/// Best of the two bang-bang extremals from (x3, x4) in canonical
/// coordinates. The barrier sheet is x1 = 1 - advance.
inline ExtremalReach extremal_reach(double heading, double speed,
                                    const InputBox& box) {
  ExtremalReach out;
  if (speed == 0.0) return out;
  // Reversing with heading h is driving forward with heading h + pi; the
  // braking input flips to the upper acceleration bound.
  const bool forward = speed > 0.0;
  const double psi = wrap_angle(forward ? heading : heading + std::numbers::pi);
  const double v = std::abs(speed);
  const double brake = forward ? -box.lo.u2 : box.hi.u2;
  // Wall-parallel or receding headings never reach the wall under braking.
  if (std::abs(psi) >= std::numbers::pi / 2 - 1e-12) return out;
  out.threatening = true;

  auto advance_under = [&](double omega, double target) {
    const double t_tan = (target - psi) / omega;
    const double t_end = std::min(t_tan, v / brake);
    const State y = flow_constant_input(State{0.0, 0.0, psi, v},
                                        Input{omega, -brake}, t_end);
    return y.x1;
  };
  const double left = advance_under(box.hi.u1, std::numbers::pi / 2);
  const double right = advance_under(box.lo.u1, -std::numbers::pi / 2);
  const bool use_left = left <= right;
  out.advance = use_left ? left : right;
  // Left turn moving forward brushes the wall at +pi/2 (T1); moving backward
  // the actual heading arrives at -pi/2 (T4). Symmetrically for right turns.
  if (forward) {
    out.family = use_left ? TangentFamily::T1 : TangentFamily::T3;
  } else {
    out.family = use_left ? TangentFamily::T4 : TangentFamily::T2;
  }
  out.control = barrier_control(out.family, box);
  return out;
}

/// Barrier sheet and the traced curves it was assembled from.
///
/// The (x1, x3, x4) projection is stored on a structured (x3, x4) grid for
/// export and fast interpolation; membership uses the extremal through the
/// query point, which is exact.
class KernelSurface {
 public:
  struct Resolution {
    int speeds = 24;        ///< tangent speeds per family
    int curve_samples = 41; ///< samples per traced curve
    int grid_heading = 73;
    int grid_speed = 61;
  };

  KernelSurface(InputBox box, double speed_lo, double speed_hi,
                Resolution res, WallConstraint wall = {})
      : box_(box), wall_(wall), speed_lo_(speed_lo), speed_hi_(speed_hi),
        res_(res) {}

  const InputBox& box() const { return box_; }
  const WallConstraint& wall() const { return wall_; }
  double speed_lo() const { return speed_lo_; }
  double speed_hi() const { return speed_hi_; }
  const Resolution& resolution() const { return res_; }
  const std::vector<BarrierCurve>& curves() const { return curves_; }
  const std::vector<double>& grid_headings() const { return grid_heading_; }
  const std::vector<double>& grid_speeds() const { return grid_speed_; }
  /// Sheet values, row-major in (heading, speed).
  const std::vector<double>& grid_values() const { return grid_value_; }

  /// Largest |x4| covered: tangent speed plus the braking over one barrier.
  double coverage() const {
    return speed_hi_ +
           std::max(-box_.lo.u2, box_.hi.u2) * barrier_duration(box_);
  }

  /// Exact barrier sheet x1 = sheet(x3, x4) in canonical coordinates.
  double sheet(double heading, double speed) const {
    return 1.0 - extremal_reach(heading, speed, box_).advance;
  }

  double interpolated_sheet(double heading, double speed) const {
    const double h = wrap_angle(heading);
    const auto& hs = grid_heading_;
    const auto& vs = grid_speed_;
    auto locate = [](const std::vector<double>& axis, double q) {
      const auto it = std::upper_bound(axis.begin(), axis.end(), q);
      std::size_t i = it == axis.begin() ? 0 : std::size_t(it - axis.begin()) - 1;
      i = std::min(i, axis.size() - 2);
      const double w = std::clamp((q - axis[i]) / (axis[i + 1] - axis[i]), 0.0, 1.0);
      return std::pair{i, w};
    };
    const auto [i, wi] = locate(hs, h);
    const auto [j, wj] = locate(vs, speed);
    const std::size_t n = vs.size();
    auto at = [&](std::size_t a, std::size_t b) { return grid_value_[a * n + b]; };
    return (1 - wi) * ((1 - wj) * at(i, j) + wj * at(i, j + 1)) +
           wi * ((1 - wj) * at(i + 1, j) + wj * at(i + 1, j + 1));
  }

  void add_curve(BarrierCurve c) { curves_.push_back(std::move(c)); }

  void build_grid() {
    const double vmax = coverage();
    grid_heading_.resize(res_.grid_heading);
    grid_speed_.resize(res_.grid_speed);
    for (int i = 0; i < res_.grid_heading; ++i) {
      grid_heading_[i] = -std::numbers::pi +
                         2.0 * std::numbers::pi * i / (res_.grid_heading - 1);
    }
    for (int j = 0; j < res_.grid_speed; ++j) {
      grid_speed_[j] = -vmax + 2.0 * vmax * j / (res_.grid_speed - 1);
    }
    grid_value_.assign(grid_heading_.size() * grid_speed_.size(), 1.0);
    for (std::size_t i = 0; i < grid_heading_.size(); ++i) {
      for (std::size_t j = 0; j < grid_speed_.size(); ++j) {
        grid_value_[i * grid_speed_.size() + j] =
            sheet(grid_heading_[i], grid_speed_[j]);
      }
    }
  }

 private:
  InputBox box_;
  WallConstraint wall_;
  double speed_lo_;
  double speed_hi_;
  Resolution res_;
  std::vector<BarrierCurve> curves_;
  std::vector<double> grid_heading_;
  std::vector<double> grid_speed_;
  std::vector<double> grid_value_;
};

inline constexpr double kBoundaryBand = 1e-6;

/// Traces all four families over log-uniformly spaced tangent speeds in
/// [speed_lo, speed_hi] and tabulates the sheet.
inline KernelSurface build_kernel_surface(const InputBox& box, double speed_lo,
                                          double speed_hi,
                                          KernelSurface::Resolution res = {},
                                          WallConstraint wall = {}) {
  box.validate();
  wall.validate();
  if (!(speed_lo > 0.0) || !(speed_hi >= speed_lo)) {
    throw std::invalid_argument("speed range must satisfy 0 < lo <= hi");
  }
  if (res.speeds < 2 || res.curve_samples < 2 || res.grid_heading < 2 ||
      res.grid_speed < 2) {
    throw std::invalid_argument("resolution must be >= 2 per axis");
  }
  KernelSurface surface(box, speed_lo, speed_hi, res, wall);
  const double ratio = std::log(speed_hi / speed_lo);
  for (TangentFamily fam : kAllFamilies) {
    for (int k = 0; k < res.speeds; ++k) {
      const double v = speed_lo * std::exp(ratio * k / (res.speeds - 1));
      const State z{1.0, 0.0, family_heading(fam), family_speed_sign(fam) * v};
      surface.add_curve(trace_barrier_curve(z, fam, box, res.curve_samples));
    }
  }
  surface.build_grid();
  return surface;
}

inline Membership kernel_membership(const State& x_world,
                                    const KernelSurface& surface) {
  const State x = normalize_halfplane(surface.wall(), x_world);
  if (!x.is_finite()) throw std::invalid_argument("state must be finite");
  if (std::abs(x.x4) > surface.coverage()) {
    throw std::out_of_range("speed outside kernel surface coverage");
  }
  const double sheet = surface.sheet(x.x3, x.x4);
  const double gap = x.x1 - sheet;
  if (gap > kBoundaryBand) return Membership::Exterior;
  if (gap >= -kBoundaryBand) return Membership::Boundary;
  return Membership::Interior;
}

struct StopSegment {
  double t0 = 0.0;
  double duration = 0.0;
  Input input;
};

struct StopManeuver {
  std::vector<StopSegment> segments;
  int switches = 0;  ///< number of barrier contacts that engaged a full turn
  double duration = 0.0;
  State final_state;
  double max_wall_violation = -std::numeric_limits<double>::infinity();

  /// Replays the segments sampling every `step` seconds (plus each segment end).
  std::vector<std::pair<double, State>> sample(const State& x0,
                                               double step) const {
    std::vector<std::pair<double, State>> out{{0.0, x0}};
    State x = x0;
    for (const auto& seg : segments) {
      const int n = std::max(1, int(std::ceil(seg.duration / step)));
      for (int k = 1; k <= n; ++k) {
        out.emplace_back(seg.t0 + seg.duration * k / n,
                         flow_constant_input(x, seg.input, seg.duration * k / n));
      }
      x = out.back().second;
    }
    return out;
  }
};

/// Brings the vehicle to standstill without leaving the kernel.
///
/// Brakes at full rate with zero turn rate; whenever the state meets the
/// barrier sheet the turn rate switches to the full turn of the active family
/// and is held until the heading is wall-parallel (the contact point). The
/// contact is located by bisection on x1 - sheet to 1e-9 s, taking the
/// inside end of the bracket.
inline StopManeuver stopping_maneuver(const State& x_world,
                                      const KernelSurface& surface,
                                      const InputBox& box) {
  if (kernel_membership(x_world, surface) == Membership::Exterior) {
    throw std::invalid_argument("stopping maneuver needs a start in the kernel");
  }
  constexpr double kEventTol = 1e-9;
  constexpr double kScan = 1e-3;
  const WallConstraint wall = surface.wall();

  StopManeuver out;
  State x = normalize_halfplane(wall, x_world);
  double t = 0.0;
  auto track = [&](const State& s) {
    out.max_wall_violation = std::max(out.max_wall_violation, s.x1 - 1.0);
  };
  track(x);
  if (x.x4 == 0.0) {
    out.final_state = x_world;
    out.max_wall_violation = wall.violation(x_world);
    return out;
  }
  const double brake = x.x4 > 0.0 ? box.lo.u2 : box.hi.u2;
  auto gap = [&](const State& s) { return s.x1 - surface.sheet(s.x3, s.x4); };
  auto push = [&](const Input& u, double d) {
    if (d <= 0.0) return;
    if (!out.segments.empty() && out.segments.back().input == u) {
      out.segments.back().duration += d;
    } else {
      out.segments.push_back({t, d, u});
    }
    t += d;
  };

  for (int guard = 0; guard < 64 && x.x4 != 0.0; ++guard) {
    const double t_stop = -x.x4 / brake;
    const auto reach = extremal_reach(x.x3, x.x4, box);
    if (reach.threatening && gap(x) >= -kBoundaryBand) {
      // On the sheet: follow the extremal to the wall or to standstill.
      const double t_turn = std::max(
          0.0, wrap_angle(family_heading(reach.family) - x.x3) / reach.control.u1);
      const double d = std::min(t_turn, t_stop);
      const Input u{reach.control.u1, brake};
      for (int k = 1; k <= 64; ++k) track(flow_constant_input(x, u, d * k / 64));
      x = flow_constant_input(x, u, d);
      push(u, d);
      ++out.switches;
      if (d == t_stop) x.x4 = 0.0;
      continue;
    }
    // Straight braking until standstill or the first contact with the sheet.
    const Input u{0.0, brake};
    double lo = 0.0;
    double hit = -1.0;
    while (lo < t_stop) {
      const double hi = std::min(lo + kScan, t_stop);
      const State y = flow_constant_input(x, u, hi);
      track(y);
      if (hi < t_stop && extremal_reach(y.x3, y.x4, box).threatening &&
          gap(y) >= 0.0) {
        double a = lo, b = hi;
        while (b - a > kEventTol) {
          const double m = 0.5 * (a + b);
          (gap(flow_constant_input(x, u, m)) >= 0.0 ? b : a) = m;
        }
        hit = a;
        break;
      }
      lo = hi;
    }
    if (hit < 0.0) {
      x = flow_constant_input(x, u, t_stop);
      x.x4 = 0.0;
      push(u, t_stop);
      break;
    }
    x = flow_constant_input(x, u, hit);
    push(u, hit);
  }
  out.duration = t;
  out.final_state = denormalize_halfplane(wall, x);
  return out;
}

}  // namespace nhmpc

#endif  // NHMPC_VIABILITY_HPP
