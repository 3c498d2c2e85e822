// Copyright 2026 The curvewarn Authors
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
#include <cstddef>
#include <vector>

#include "curvewarn/error.hpp"
#include "curvewarn/ocp.hpp"

namespace curvewarn {

// Jerk thresholds separating the three warning levels.  Strong planned
// braking (large negative longitudinal jerk early in the optimal maneuver)
// signals that the rider must soon act.
struct RiskThresholds {
  double theta1 = -0.1;  // safe/intermediate boundary [m/s^3]
  double theta2 = -0.5;  // intermediate/danger boundary [m/s^3]
};

inline void validate_thresholds(const RiskThresholds& th) {
  if (!std::isfinite(th.theta1) || !std::isfinite(th.theta2) ||
      !(th.theta2 < th.theta1) || !(th.theta1 < 0.0))
    throw InvariantViolation("RiskThresholds: need theta2 < theta1 < 0");
}

enum class RiskLevel { Safe, Intermediate, Danger };

inline const char* to_string(RiskLevel level) {
  switch (level) {
    case RiskLevel::Safe: return "safe";
    case RiskLevel::Intermediate: return "intermediate";
    case RiskLevel::Danger: return "danger";
  }
  return "unknown";
}

inline int severity(RiskLevel level) { return static_cast<int>(level); }

// Safe iff theta1 <= j_x; Intermediate iff theta2 < j_x < theta1; Danger iff
// j_x <= theta2.  Both boundaries are inclusive toward the severer side
// bordering them: theta1 itself is Safe, theta2 itself is Danger.
inline RiskLevel classify_step(double j_x, const RiskThresholds& th) {
  validate_thresholds(th);
  if (std::isnan(j_x)) throw InvariantViolation("classify_step: jerk is NaN");
  if (j_x >= th.theta1) return RiskLevel::Safe;
  if (j_x <= th.theta2) return RiskLevel::Danger;
  return RiskLevel::Intermediate;
}

struct RiskReport {
  std::vector<RiskLevel> per_step;  // one level per input stage
  RiskLevel overall = RiskLevel::Safe;
  double worst_s = 0.0;    // arc length of the (earliest) minimum jerk [m]
  double min_jerk = 0.0;   // m/s^3
  OcpStatus solver_status = OcpStatus::Optimal;
};

// Classifies every planned jerk stage and aggregates to the severest level.
// An infeasible plan means no maneuver within the rider's ability exists, so
// the overall level is forced to Danger regardless of the stage jerks.
inline RiskReport classify_maneuver(const OcpSolution& sol,
                                    const RiskThresholds& th = RiskThresholds{}) {
  validate_thresholds(th);
  if (sol.inputs.empty())
    throw EmptySolution("classify_maneuver: solution has no input stages");
  if (sol.s.size() < sol.inputs.size())
    throw InvariantViolation("classify_maneuver: arc-length grid shorter than inputs");
  RiskReport report;
  report.solver_status = sol.status;
  report.per_step.reserve(sol.inputs.size());
  std::size_t worst_k = 0;
  for (std::size_t k = 0; k < sol.inputs.size(); ++k) {
    const double j = sol.inputs[k].j_x;
    report.per_step.push_back(classify_step(j, th));
    if (k == 0 || j < sol.inputs[worst_k].j_x) worst_k = k;
  }
  report.min_jerk = sol.inputs[worst_k].j_x;
  report.worst_s = sol.s[worst_k];
  report.overall = RiskLevel::Safe;
  for (RiskLevel level : report.per_step)
    if (severity(level) > severity(report.overall)) report.overall = level;
  if (sol.status == OcpStatus::Infeasible) report.overall = RiskLevel::Danger;
  return report;
}

}  // namespace curvewarn
