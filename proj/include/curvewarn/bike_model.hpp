// Copyright 2026 The Curvewarn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "curvewarn/error.hpp"
#include "curvewarn/road_profile.hpp"

namespace curvewarn {

// Minimum forward progress rate [m/s] below which the space-domain
// transformation (division by s-dot) is refused.
inline constexpr double kMinProgressRate = 0.1;

struct BikeParams {
  double g = 9.81;      // [m/s²] gravity
  double h = 0.6;       // [m] center-of-gravity height
  double r = 0.1;       // [m] tire cross-section radius
  double rho_x = 0.3;   // [m] roll inertia radius
  double R = 0.3;       // [m] wheel radius
  double m = 280.0;     // [kg] total mass, bike + rider
  double I_w = 0.7;     // [kg·m²] wheel spin inertia
  double h_r = 1.0;     // [m] rider torso height above seat
  double h_c = 1.2;     // [m] camera mount height
  double a_x_max = 4.0; // [m/s²] longitudinal acceleration limit
  double a_y_max = 7.0; // [m/s²] lateral acceleration limit
};

inline void validate_params(const BikeParams& p) {
  const double vals[] = {p.g, p.h,   p.r,   p.rho_x,   p.R,      p.m,
                         p.I_w, p.h_r, p.h_c, p.a_x_max, p.a_y_max};
  for (double v : vals) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvariantViolation("bike parameters must be strictly positive");
    }
  }
  if (!(p.a_x_max <= p.a_y_max)) {
    throw InvariantViolation("a_x_max must not exceed a_y_max");
  }
}

// Full time-domain state, curvilinear coordinates about the lane divider.
struct StateTime {
  double s = 0.0;      // [m] arc length along the lane divider
  double n = 0.0;      // [m] lateral offset, >= 0 into the rider's lane
  double alpha = 0.0;  // [rad] local heading relative to the divider tangent
  double phi = 0.0;    // [rad] roll angle
  double u_x = 0.0;    // [m/s] longitudinal speed (> 0)
  double w_psi = 0.0;  // [rad/s] yaw rate
  double w_phi = 0.0;  // [rad/s] roll rate
  double a_x = 0.0;    // [m/s²] longitudinal acceleration state
  double a_psi = 0.0;  // [rad/s²] yaw acceleration state
};

// Space-domain state: StateTime with the arc length eliminated.
struct StateSpace {
  double n = 0.0;
  double alpha = 0.0;
  double phi = 0.0;
  double u_x = 0.0;
  double w_psi = 0.0;
  double w_phi = 0.0;
  double a_x = 0.0;
  double a_psi = 0.0;

  Eigen::Matrix<double, 8, 1> to_vector() const {
    Eigen::Matrix<double, 8, 1> v;
    v << n, alpha, phi, u_x, w_psi, w_phi, a_x, a_psi;
    return v;
  }

  static StateSpace from_vector(const Eigen::Matrix<double, 8, 1>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
  }
};

struct ControlInput {
  double j_x = 0.0;    // [m/s³] longitudinal jerk
  double j_psi = 0.0;  // [rad/s³] yaw jerk
};

namespace detail {

// Roll acceleration: free-rolling-disc balance of gravity capsize, gyroscopic
// wheel reaction and tire-contact offset, sharing one denominator.
inline double roll_acceleration(double phi, double u, double w_psi,
                                double w_phi, const BikeParams& p) {
  const double sphi = std::sin(phi);
  const double cphi = std::cos(phi);
  const double den = p.rho_x * p.rho_x + p.h * p.h + p.r * p.h * cphi;
  const double t1 =
      p.h * (p.g * sphi - w_psi * u * cphi + w_psi * w_psi * p.h * sphi * cphi);
  const double t2 = (p.I_w / p.m) * w_psi * cphi * (w_psi * sphi - u / p.R);
  const double t3 =
      p.r * (p.h * (w_phi * w_phi + w_psi * w_psi) * sphi - w_psi * u);
  return (t1 + t2 + t3) / den;
}

inline double progress_rate(const StateSpace& x, double kappa) {
  const double dn = 1.0 - x.n * kappa;
  if (!(dn > 0.0)) {
    throw SingularGeometry("1 - n*kappa must stay positive");
  }
  return x.u_x * std::cos(x.alpha) / dn;
}

// Space-domain dynamics with a caller-chosen progress guard. The public API
// uses kMinProgressRate; the optimizer evaluates iterates with a looser guard
// since its box constraints already keep u_x and alpha well-behaved.
inline Eigen::Matrix<double, 8, 1> space_dynamics_guarded(
    const StateSpace& x, const ControlInput& u, const RoadSample& road,
    const BikeParams& p, double min_progress) {
  const double sdot = progress_rate(x, road.kappa);
  if (!(sdot > min_progress)) {
    throw SingularProgress("progress rate " + std::to_string(sdot) +
                           " m/s too small for space transform");
  }
  const double inv = 1.0 / sdot;
  const double ca = std::cos(x.alpha);
  const double dn = 1.0 - x.n * road.kappa;
  Eigen::Matrix<double, 8, 1> f;
  f[0] = std::tan(x.alpha) * dn;
  f[1] = x.w_psi * inv - road.kappa;
  f[2] = x.w_phi * inv;
  f[3] = (x.a_x + p.g * road.sigma * ca) * inv;
  f[4] = x.a_psi * inv;
  f[5] = roll_acceleration(x.phi, x.u_x, x.w_psi, x.w_phi, p) * inv;
  f[6] = u.j_x * inv;
  f[7] = u.j_psi * inv;
  return f;
}

struct JacobianPair {
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 2> B;
};

inline JacobianPair jacobians_guarded(const StateSpace& x,
                                      const ControlInput& u,
                                      const RoadSample& road,
                                      const BikeParams& p,
                                      double min_progress) {
  const double k = road.kappa;
  const double sdot = progress_rate(x, k);
  if (!(sdot > min_progress)) {
    throw SingularProgress("progress rate " + std::to_string(sdot) +
                           " m/s too small for space transform");
  }
  const double ca = std::cos(x.alpha);
  const double sa = std::sin(x.alpha);
  const double ta = sa / ca;
  const double dn = 1.0 - x.n * k;
  const double inv = dn / (x.u_x * ca);
  // inv = (1 - n k)/(u cos a); its own partials drive most of the chain rule.
  const double inv_n = -k / (x.u_x * ca);
  const double inv_a = inv * ta;
  const double inv_u = -inv / x.u_x;

  JacobianPair out;
  out.A.setZero();
  out.B.setZero();
  auto& A = out.A;

  // Row 0: dn/ds = tan(alpha) * (1 - n k)
  A(0, 0) = -k * ta;
  A(0, 1) = dn / (ca * ca);

  // Rows of the form g(x,u) * inv share the inv partials.
  auto chain = [&](int row, double val) {
    A(row, 0) = val * inv_n;
    A(row, 1) = val * inv_a;
    A(row, 3) = val * inv_u;
  };

  // Row 1: dalpha/ds = w_psi * inv - kappa
  chain(1, x.w_psi);
  A(1, 4) = inv;

  // Row 2: dphi/ds = w_phi * inv
  chain(2, x.w_phi);
  A(2, 5) = inv;

  // Row 3: du/ds = (a_x + g sigma cos a) * inv
  const double pu = x.a_x + p.g * road.sigma * ca;
  chain(3, pu);
  A(3, 1) += -p.g * road.sigma * sa * inv;
  A(3, 6) = inv;

  // Row 4: dw_psi/ds = a_psi * inv
  chain(4, x.a_psi);
  A(4, 7) = inv;

  // Row 5: dw_phi/ds = W(phi, u, w_psi, w_phi) * inv
  {
    const double sphi = std::sin(x.phi);
    const double cphi = std::cos(x.phi);
    const double w = x.w_psi;
    const double v = x.w_phi;
    const double den = p.rho_x * p.rho_x + p.h * p.h + p.r * p.h * cphi;
    const double t1 =
        p.h * (p.g * sphi - w * x.u_x * cphi + w * w * p.h * sphi * cphi);
    const double t2 = (p.I_w / p.m) * w * cphi * (w * sphi - x.u_x / p.R);
    const double t3 =
        p.r * (p.h * (v * v + w * w) * sphi - w * x.u_x);
    const double num = t1 + t2 + t3;
    const double W = num / den;

    const double num_phi =
        p.h * (p.g * cphi + w * x.u_x * sphi +
               w * w * p.h * (cphi * cphi - sphi * sphi)) +
        (p.I_w / p.m) * (w * w * (cphi * cphi - sphi * sphi) +
                         w * x.u_x * sphi / p.R) +
        p.r * p.h * (v * v + w * w) * cphi;
    const double den_phi = -p.r * p.h * sphi;
    const double W_phi = num_phi / den - num * den_phi / (den * den);
    const double W_u = (-p.h * w * cphi - (p.I_w / p.m) * w * cphi / p.R -
                        p.r * w) /
                       den;
    const double W_w =
        (p.h * (-x.u_x * cphi + 2.0 * w * p.h * sphi * cphi) +
         (p.I_w / p.m) * (2.0 * w * cphi * sphi - x.u_x * cphi / p.R) +
         p.r * (2.0 * p.h * w * sphi - x.u_x)) /
        den;
    const double W_v = 2.0 * p.r * p.h * v * sphi / den;

    chain(5, W);
    A(5, 2) = W_phi * inv;
    A(5, 3) += W_u * inv;
    A(5, 4) += W_w * inv;
    A(5, 5) += W_v * inv;
  }

  // Rows 6, 7: jerk channels j * inv
  chain(6, u.j_x);
  chain(7, u.j_psi);
  out.B(6, 0) = inv;
  out.B(7, 1) = inv;
  return out;
}

}  // namespace detail

// Right-hand side of the time-domain dynamics; returns d/dt of every
// StateTime component.
inline StateTime time_dynamics(const StateTime& x, const ControlInput& u,
                               const RoadSample& road, const BikeParams& p) {
  const double dn = 1.0 - x.n * road.kappa;
  if (!(dn > 0.0)) {
    throw SingularGeometry("1 - n*kappa must stay positive");
  }
  const double ca = std::cos(x.alpha);
  const double sdot = x.u_x * ca / dn;
  StateTime d;
  d.s = sdot;
  d.n = x.u_x * std::sin(x.alpha);
  d.alpha = x.w_psi - road.kappa * sdot;
  d.phi = x.w_phi;
  d.u_x = x.a_x + p.g * road.sigma * ca;
  d.w_psi = x.a_psi;
  d.w_phi = detail::roll_acceleration(x.phi, x.u_x, x.w_psi, x.w_phi, p);
  d.a_x = u.j_x;
  d.a_psi = u.j_psi;
  return d;
}

// Space-domain dynamics d/ds of the 8 retained states: time dynamics over
// the progress rate s-dot.
inline StateSpace space_dynamics(const StateSpace& x, const ControlInput& u,
                                 const RoadSample& road, const BikeParams& p) {
  return StateSpace::from_vector(
      detail::space_dynamics_guarded(x, u, road, p, kMinProgressRate));
}

// One Euler-forward step of length d_s along the road.
inline StateSpace euler_step(const StateSpace& x, const ControlInput& u,
                             double d_s, const RoadSample& road,
                             const BikeParams& p) {
  return StateSpace::from_vector(
      x.to_vector() +
      d_s * detail::space_dynamics_guarded(x, u, road, p, kMinProgressRate));
}

struct Jacobians {
  Eigen::Matrix<double, 8, 8> dfdx;
  Eigen::Matrix<double, 8, 2> dfdu;
};

// Analytic Jacobians of space_dynamics with respect to state and input.
inline Jacobians jacobians(const StateSpace& x, const ControlInput& u,
                           const RoadSample& road, const BikeParams& p) {
  const auto pair = detail::jacobians_guarded(x, u, road, p, kMinProgressRate);
  return {pair.A, pair.B};
}

}  // namespace curvewarn
