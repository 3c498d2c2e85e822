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
//
// Assembly of the trajectory problem's initial state from perception
// estimates (intra-lane position and roll), matched arc length, and speed.
// The camera rides above the lean axis, so the lane-position estimate must
// be corrected by the roll-induced camera sweep before it can seed the
// curvilinear state.

#ifndef CURVEWARN_STATE_FUSION_HPP_
#define CURVEWARN_STATE_FUSION_HPP_

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "curvewarn/bike_model.hpp"
#include "curvewarn/error.hpp"
#include "curvewarn/ocp.hpp"
#include "curvewarn/road_profile.hpp"

namespace curvewarn {

// One camera-pipeline output: lane position measured from the lane divider
// and roll angle, both at a common timestamp.
struct PerceptionSample {
  double t = 0.0;         // [s]
  double n_lnet = 0.0;    // [m] estimated offset from the lane divider
  double phi_rnet = 0.0;  // [rad] estimated roll, |phi_rnet| <= pi/2
};

inline void validate_sample(const PerceptionSample& sample) {
  if (!std::isfinite(sample.t) || !std::isfinite(sample.n_lnet) ||
      !std::isfinite(sample.phi_rnet)) {
    throw InvariantViolation("perception sample values must be finite");
  }
  if (!(std::abs(sample.phi_rnet) <= M_PI / 2.0)) {
    throw InvariantViolation("perception roll outside [-pi/2, pi/2]");
  }
}

// Kinematic estimates carried over from an earlier fusion step.  When
// present, the rate states are initialized by finite differences instead of
// the steady-state fallbacks.
struct PriorEstimate {
  double t = 0.0;               // [s] must precede the current sample
  double heading_change = 0.0;  // [rad] matched course swept since t, wrapped
  double phi = 0.0;             // [rad]
  double u_x = 0.0;             // [m/s]
};

// Initial condition for the trajectory problem plus a record of which
// measurement clamps fired while making it admissible.
struct InitialState {
  double s0 = 0.0;
  StateSpace x0;
  bool clamped_lane_low = false;   // corrected n fell below the divider
  bool clamped_lane_high = false;  // corrected n exceeded the lane width
  bool clamped_roll = false;       // roll exceeded the state box
  bool clamped_rates = false;      // yaw/roll rate or accel hit its budget
};

// The camera sits h_c above the contact line; leaning by phi swings it
// h_c*sin(phi) toward the inside of the lean, which the lane network reads
// as displacement.  Subtracting the sweep recovers the contact-line offset.
inline double roll_correct_lane(double n_lnet, double phi, double h_c) {
  return n_lnet - h_c * std::sin(phi);
}

// Builds the state feedback x(0) at matched arc length s0.  Lane position
// comes from the roll-corrected camera estimate clamped into the lane, roll
// and speed pass through, and rate states come from finite differences
// against `prev` when available (steady-state yaw rate otherwise).  Every
// clamp needed to keep the state inside its box and acceleration budget is
// reported through the flags.
inline InitialState build_initial_state(const PerceptionSample& perc,
                                        double speed, double s0,
                                        const std::optional<PriorEstimate>& prev,
                                        const RoadProfile& profile,
                                        const BikeParams& p = {}) {
  validate_params(p);
  validate_sample(perc);
  if (!std::isfinite(speed) || !std::isfinite(s0)) {
    throw InvariantViolation("speed and arc length must be finite");
  }
  if (!(speed > kMinProgressRate)) {
    throw SpeedTooLow("speed " + std::to_string(speed) +
                      " m/s at or below the progress floor " +
                      std::to_string(kMinProgressRate));
  }
  const RoadSample road = profile.query(s0);
  const BoundSet box;

  InitialState out;
  out.s0 = s0;
  StateSpace& x = out.x0;

  const double n_corr = roll_correct_lane(perc.n_lnet, perc.phi_rnet, p.h_c);
  x.n = n_corr;
  if (x.n < 0.0) {
    x.n = 0.0;
    out.clamped_lane_low = true;
  } else if (x.n > road.width) {
    x.n = road.width;
    out.clamped_lane_high = true;
  }

  x.phi = perc.phi_rnet;
  if (std::abs(x.phi) > box.phi_max) {
    x.phi = std::copysign(box.phi_max, x.phi);
    out.clamped_roll = true;
  }

  x.u_x = speed;
  x.alpha = 0.0;

  if (prev) {
    if (!std::isfinite(prev->t) || !std::isfinite(prev->heading_change) ||
        !std::isfinite(prev->phi) || !std::isfinite(prev->u_x)) {
      throw InvariantViolation("prior estimate values must be finite");
    }
    const double dt = perc.t - prev->t;
    if (!(dt > 0.0)) {
      throw InvariantViolation("prior estimate must precede the sample");
    }
    // Headings live on the circle; the swept course is taken mod 2*pi.
    x.w_psi = std::remainder(prev->heading_change, 2.0 * M_PI) / dt;
    x.w_phi = (perc.phi_rnet - prev->phi) / dt;
    x.a_x = (speed - prev->u_x) / dt;
  } else {
    const double denom = 1.0 - x.n * road.kappa;
    x.w_psi = road.kappa * x.u_x / denom;
    x.w_phi = 0.0;
    x.a_x = 0.0;
  }
  x.a_psi = 0.0;

  // Keep the rates inside the state box and the acceleration budget: first
  // the yaw rate (box and lateral budget), then the tire share left for the
  // longitudinal axis after slope and lateral usage.
  const double w_psi_cap =
      std::min(box.w_psi_max, p.a_y_max / std::max(x.u_x, kMinProgressRate));
  if (std::abs(x.w_psi) > w_psi_cap) {
    x.w_psi = std::copysign(w_psi_cap, x.w_psi);
    out.clamped_rates = true;
  }
  if (std::abs(x.w_phi) > box.w_phi_max) {
    x.w_phi = std::copysign(box.w_phi_max, x.w_phi);
    out.clamped_rates = true;
  }
  const double lat = (x.u_x * x.w_psi) / p.a_y_max;
  const double ax_budget =
      p.a_x_max * std::sqrt(std::max(0.0, 1.0 - lat * lat));
  const double slope_term = p.g * road.sigma * std::cos(x.alpha);
  const double ax_tire = x.a_x + slope_term;
  if (std::abs(ax_tire) > ax_budget) {
    x.a_x = std::copysign(ax_budget, ax_tire) - slope_term;
    out.clamped_rates = true;
  }
  return out;
}

// Perception trace file: CSV rows `t,n_lnet,phi_rnet` with an optional
// header, timestamps strictly increasing.
inline std::vector<PerceptionSample> load_perception_trace(std::istream& in) {
  std::vector<PerceptionSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string t_str, n_str, phi_str;
    if (!std::getline(row, t_str, ',') || !std::getline(row, n_str, ',') ||
        !std::getline(row, phi_str)) {
      throw ParseError("perception trace line " + std::to_string(lineno) +
                       ": expected `t,n_lnet,phi_rnet`");
    }
    PerceptionSample s;
    try {
      s.t = std::stod(t_str);
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header row
      throw ParseError("perception trace line " + std::to_string(lineno) +
                       ": bad timestamp `" + t_str + "`");
    }
    try {
      s.n_lnet = std::stod(n_str);
      s.phi_rnet = std::stod(phi_str);
    } catch (const std::exception&) {
      throw ParseError("perception trace line " + std::to_string(lineno) +
                       ": bad numeric field");
    }
    validate_sample(s);
    if (!samples.empty() && !(s.t > samples.back().t)) {
      throw InvariantViolation("perception timestamps must strictly increase");
    }
    samples.push_back(s);
  }
  if (samples.empty()) {
    throw InvariantViolation("perception trace holds no samples");
  }
  return samples;
}

inline std::vector<PerceptionSample> load_perception_trace(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open perception trace file: " + path);
  }
  return load_perception_trace(in);
}

}  // namespace curvewarn

#endif  // CURVEWARN_STATE_FUSION_HPP_
