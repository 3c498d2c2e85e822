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

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvewarn/bike_model.hpp"
#include "curvewarn/error.hpp"
#include "curvewarn/road_profile.hpp"

namespace curvewarn {

// Configuration of one finite-horizon planning problem on the arc-length grid
// s_k = s0 + k*d_s, k = 0..N+1.  States live on all N+2 grid points, inputs on
// the first N+1.
struct OcpConfig {
  int N = 500;          // horizon steps; grid has N+2 state points
  double d_s = 1.0;     // grid spacing [m]
  double s0 = 0.0;      // arc length of the (fixed) initial state [m]
  double q_t = 1.0;     // traversal-time weight
  double q_a = 0.1;     // acceleration-usage weight
  double r_x = 0.05;    // longitudinal-jerk weight
  double r_psi = 0.05;  // yaw-jerk weight
  double feas_tol = 1e-6;
  double stat_tol = 1e-6;
  int max_iter = 200;
  bool include_slope = true;      // false forces sigma = 0 on every stage
  bool include_roll_lane = true;  // false keeps only the 0 <= n <= width box
};

// Throws InvariantViolation unless N >= 10, d_s > 0, weights >= 0 and
// tolerances > 0.
inline void validate_config(const OcpConfig& c) {
  if (c.N < 10) throw InvariantViolation("OcpConfig: N must be >= 10");
  if (!(c.d_s > 0.0) || !std::isfinite(c.d_s))
    throw InvariantViolation("OcpConfig: d_s must be positive");
  if (!std::isfinite(c.s0)) throw InvariantViolation("OcpConfig: s0 must be finite");
  for (double w : {c.q_t, c.q_a, c.r_x, c.r_psi})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InvariantViolation("OcpConfig: cost weights must be nonnegative");
  if (!(c.feas_tol > 0.0) || !(c.stat_tol > 0.0))
    throw InvariantViolation("OcpConfig: tolerances must be positive");
  if (c.max_iter < 1) throw InvariantViolation("OcpConfig: max_iter must be >= 1");
}

enum class OcpStatus { Optimal, MaxIter, Infeasible };

inline const char* to_string(OcpStatus st) {
  switch (st) {
    case OcpStatus::Optimal: return "optimal";
    case OcpStatus::MaxIter: return "max_iter";
    case OcpStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

struct CostBreakdown {
  double time = 0.0;   // J_t
  double accel = 0.0;  // J_a
  double jerk = 0.0;   // J_j
  double total() const { return time + accel + jerk; }
};

struct OcpSolution {
  std::vector<double> s;            // N+2 grid points
  std::vector<StateSpace> states;   // N+2, states[0] is the measured state
  std::vector<ControlInput> inputs; // N+1
  double objective = 0.0;
  CostBreakdown cost_breakdown;
  double kkt_residual = 0.0;
  double feasibility_residual = 0.0;
  OcpStatus status = OcpStatus::MaxIter;
  int iterations = 0;
  std::vector<double> gg_ratio;     // N+2, acceleration-budget usage per point
};

// Combined acceleration usage: ((a_x + g*sigma*cos(alpha))/a_x_max)^2 +
// ((u_x*w_psi)/a_y_max)^2.  Feasible iff <= 1.  The slope term converts the
// commanded a_x into the acceleration the tires must actually transmit.
inline double gg_constraint(const StateSpace& x, const RoadSample& road,
                            const BikeParams& p) {
  const double ax_tire = x.a_x + p.g * road.sigma * std::cos(x.alpha);
  const double ay = x.u_x * x.w_psi;
  const double rx = ax_tire / p.a_x_max;
  const double ry = ay / p.a_y_max;
  return rx * rx + ry * ry;
}

struct LaneBounds {
  double lo = 0.0;
  double hi = 0.0;
};

// Roll-dependent lateral corridor: leaning by phi sweeps the rider's upper
// body h_r*phi toward the inside, so the admissible centerline offset shrinks
// from one side.  Throws EmptyLane when the lean leaves no corridor at all.
inline LaneBounds lane_bounds(double phi, const RoadSample& road,
                              const BikeParams& p) {
  const double b_r = road.width;
  LaneBounds lb;
  lb.lo = std::max(0.0, -phi * p.h_r);
  lb.hi = std::min(b_r, b_r - phi * p.h_r);
  if (!(lb.lo < lb.hi))
    throw EmptyLane("lane_bounds: roll angle leaves no admissible corridor");
  return lb;
}

// Residuals of the six terminal conditions: centered in lane, aligned with
// the road, zero roll rate, zero longitudinal/yaw acceleration, and yaw rate
// consistent with steady-state cornering at the terminal curvature.
inline Eigen::Matrix<double, 6, 1> terminal_residual(const StateSpace& x_T,
                                                     const RoadSample& road) {
  const double half = road.width / 2.0;
  const double denom = 1.0 - half * road.kappa;
  if (!(denom > 0.0))
    throw SingularGeometry("terminal_residual: lane center lies past the curvature center");
  Eigen::Matrix<double, 6, 1> r;
  r(0) = x_T.n - half;
  r(1) = x_T.alpha;
  r(2) = x_T.w_phi;
  r(3) = x_T.a_x;
  r(4) = x_T.a_psi;
  r(5) = x_T.w_psi - road.kappa * x_T.u_x / denom;
  return r;
}

namespace detail {

// Shared cost evaluation; min_ucos guards the traversal-time denominator
// u_k*cos(alpha_k).  Public stage_costs pins the guard at kMinProgressRate;
// the solver evaluates with a looser guard because its variable boxes already
// keep the denominator well away from zero.
inline CostBreakdown stage_costs_guarded(const std::vector<StateSpace>& states,
                                         const std::vector<ControlInput>& inputs,
                                         const std::vector<RoadSample>& road,
                                         const OcpConfig& c, const BikeParams& p,
                                         double min_ucos) {
  const std::size_t n_states = states.size();
  const std::size_t n_inputs = inputs.size();
  if (n_states != n_inputs + 1 || n_states != road.size() ||
      n_states != static_cast<std::size_t>(c.N) + 2)
    throw InvariantViolation("stage_costs: trajectory dimensions inconsistent with N");
  CostBreakdown out;
  for (std::size_t k = 0; k < n_inputs; ++k) {
    const StateSpace& x = states[k];
    const double ucos = x.u_x * std::cos(x.alpha);
    if (ucos <= min_ucos)
      throw SingularProgress("stage_costs: u*cos(alpha) at or below the progress guard");
    out.time += c.q_t * c.d_s * (1.0 - x.n * road[k].kappa) / ucos;
    out.jerk += c.r_x * inputs[k].j_x * inputs[k].j_x +
                c.r_psi * inputs[k].j_psi * inputs[k].j_psi;
  }
  for (std::size_t k = 0; k < n_states; ++k)
    out.accel += c.q_a * gg_constraint(states[k], road[k], p);
  return out;
}

inline std::vector<RoadSample> sample_grid(const RoadProfile& profile,
                                           const OcpConfig& c) {
  std::vector<RoadSample> road(static_cast<std::size_t>(c.N) + 2);
  for (int k = 0; k <= c.N + 1; ++k) {
    road[static_cast<std::size_t>(k)] = profile.query(c.s0 + k * c.d_s);
    if (!c.include_slope) road[static_cast<std::size_t>(k)].sigma = 0.0;
  }
  return road;
}

}  // namespace detail

// Cost terms of a full trajectory: traversal time J_t and squared jerks J_j
// accumulate over the N+1 input stages; acceleration usage J_a accumulates
// over all N+2 grid states.  Throws SingularProgress when any input stage has
// u_k*cos(alpha_k) <= kMinProgressRate.
inline CostBreakdown stage_costs(const std::vector<StateSpace>& states,
                                 const std::vector<ControlInput>& inputs,
                                 const RoadProfile& profile, const OcpConfig& c,
                                 const BikeParams& p) {
  validate_config(c);
  return detail::stage_costs_guarded(states, inputs, detail::sample_grid(profile, c),
                                     c, p, kMinProgressRate);
}

// Hard bounds on decision states and inputs.  a_x carries no box of its own:
// it is limited through the acceleration budget.
struct BoundSet {
  double alpha_max = 0.5;
  double phi_max = 1.05;   // ~60 degrees, the realistic roll range
  double w_psi_max = 2.0;
  double w_phi_max = 3.0;
  double a_psi_max = 5.0;
  double j_x_max = 10.0;
  double j_psi_max = 20.0;
  double u_min = kMinProgressRate;
  double unbounded = 1e20;  // sentinel for rows without a finite box
};

// Discrete-space nonlinear program over the decision vector
//   z = [u_0, x_1, u_1, x_2, ..., u_N, x_{N+1}],
// one 10-wide block [u_k, x_{k+1}] per stage k = 0..N.  x_0 is measured data,
// not a decision.  Equalities: N+1 Euler dynamics defects (8 rows each) plus
// the 6-row terminal residual.  Inequalities: acceleration budget on each
// decision state and, when enabled, the roll-dependent lane corridor written
// in its equivalent linear form 0 <= n + h_r*phi <= width.
class NlpProblem {
 public:
  NlpProblem(std::vector<double> s_grid, std::vector<RoadSample> road,
             StateSpace x0, OcpConfig config, BikeParams params)
      : s_(std::move(s_grid)),
        road_(std::move(road)),
        x0_(x0),
        config_(config),
        params_(params) {}

  int N() const { return config_.N; }
  int num_vars() const { return 10 * (config_.N + 1); }
  int num_defect_rows() const { return 8 * (config_.N + 1); }
  int num_terminal_rows() const { return 6; }
  int num_equalities() const { return num_defect_rows() + num_terminal_rows(); }
  int num_gg_rows() const { return config_.N + 1; }  // decision states 1..N+1
  int num_lane_rows() const { return config_.include_roll_lane ? config_.N + 1 : 0; }

  const OcpConfig& config() const { return config_; }
  const BikeParams& params() const { return params_; }
  const StateSpace& x0() const { return x0_; }
  const std::vector<double>& s_grid() const { return s_; }
  const std::vector<RoadSample>& road() const { return road_; }
  const BoundSet& bounds() const { return bounds_; }
  BoundSet& bounds() { return bounds_; }

  // Offsets into z.  Inputs exist for k = 0..N, decision states for
  // k = 1..N+1.
  static int input_offset(int k) { return 10 * k; }
  static int state_offset(int k) { return 10 * (k - 1) + 2; }

  StateSpace state_at(const Eigen::VectorXd& z, int k) const {
    if (k == 0) return x0_;
    return StateSpace::from_vector(z.segment<8>(state_offset(k)));
  }
  ControlInput input_at(const Eigen::VectorXd& z, int k) const {
    return ControlInput{z(input_offset(k)), z(input_offset(k) + 1)};
  }

  Eigen::VectorXd pack(const std::vector<StateSpace>& states,
                       const std::vector<ControlInput>& inputs) const {
    if (states.size() != static_cast<std::size_t>(config_.N) + 2 ||
        inputs.size() != static_cast<std::size_t>(config_.N) + 1)
      throw InvariantViolation("pack: trajectory dimensions inconsistent with N");
    Eigen::VectorXd z(num_vars());
    for (int k = 0; k <= config_.N; ++k) {
      z(input_offset(k)) = inputs[static_cast<std::size_t>(k)].j_x;
      z(input_offset(k) + 1) = inputs[static_cast<std::size_t>(k)].j_psi;
      z.segment<8>(state_offset(k + 1)) =
          states[static_cast<std::size_t>(k) + 1].to_vector();
    }
    return z;
  }

  void unpack(const Eigen::VectorXd& z, std::vector<StateSpace>& states,
              std::vector<ControlInput>& inputs) const {
    states.assign(static_cast<std::size_t>(config_.N) + 2, StateSpace{});
    inputs.assign(static_cast<std::size_t>(config_.N) + 1, ControlInput{});
    states[0] = x0_;
    for (int k = 0; k <= config_.N; ++k) {
      inputs[static_cast<std::size_t>(k)] = input_at(z, k);
      states[static_cast<std::size_t>(k) + 1] = state_at(z, k + 1);
    }
  }

  // Euler defects x_{k+1} - x_k - d_s*f(x_k, u_k), k = 0..N, stacked 8 rows
  // per stage.  The progress guard is loose here: the variable boxes keep
  // u*cos(alpha)/(1 - n*kappa) >= ~0.04 for any box-feasible z.
  Eigen::VectorXd dynamics_defects(const Eigen::VectorXd& z) const {
    Eigen::VectorXd d(num_defect_rows());
    Eigen::Matrix<double, 8, 1> xk = x0_.to_vector();
    for (int k = 0; k <= config_.N; ++k) {
      const StateSpace x = (k == 0) ? x0_ : state_at(z, k);
      const ControlInput u = input_at(z, k);
      const Eigen::Matrix<double, 8, 1> f = detail::space_dynamics_guarded(
          x, u, road_[static_cast<std::size_t>(k)], params_, kSolverProgressGuard);
      const Eigen::Matrix<double, 8, 1> xnext = z.segment<8>(state_offset(k + 1));
      d.segment<8>(8 * k) = xnext - xk - config_.d_s * f;
      xk = xnext;
    }
    return d;
  }

  Eigen::Matrix<double, 6, 1> terminal(const Eigen::VectorXd& z) const {
    return terminal_residual(state_at(z, config_.N + 1),
                             road_[static_cast<std::size_t>(config_.N) + 1]);
  }

  // Acceleration-budget values at decision states k = 1..N+1 (row k-1).
  Eigen::VectorXd gg_values(const Eigen::VectorXd& z) const {
    Eigen::VectorXd g(num_gg_rows());
    for (int k = 1; k <= config_.N + 1; ++k)
      g(k - 1) = gg_constraint(state_at(z, k), road_[static_cast<std::size_t>(k)],
                               params_);
    return g;
  }

  // Lane-corridor values n_k + h_r*phi_k at decision states k = 1..N+1,
  // bounded to [0, width_k].  Empty when the roll-lane coupling is disabled.
  Eigen::VectorXd lane_values(const Eigen::VectorXd& z) const {
    Eigen::VectorXd v(num_lane_rows());
    for (int k = 1; k <= num_lane_rows(); ++k) {
      const StateSpace x = state_at(z, k);
      v(k - 1) = x.n + params_.h_r * x.phi;
    }
    return v;
  }

  CostBreakdown costs(const Eigen::VectorXd& z) const {
    std::vector<StateSpace> states;
    std::vector<ControlInput> inputs;
    unpack(z, states, inputs);
    return detail::stage_costs_guarded(states, inputs, road_, config_, params_,
                                       kSolverProgressGuard);
  }
  double objective(const Eigen::VectorXd& z) const { return costs(z).total(); }

  void variable_bounds(Eigen::VectorXd& lb, Eigen::VectorXd& ub) const {
    lb.resize(num_vars());
    ub.resize(num_vars());
    const BoundSet& b = bounds_;
    for (int k = 0; k <= config_.N; ++k) {
      const int iu = input_offset(k);
      lb(iu) = -b.j_x_max;
      ub(iu) = b.j_x_max;
      lb(iu + 1) = -b.j_psi_max;
      ub(iu + 1) = b.j_psi_max;
      const int ix = state_offset(k + 1);
      const RoadSample& r = road_[static_cast<std::size_t>(k) + 1];
      lb(ix + 0) = 0.0;
      ub(ix + 0) = r.width;
      lb(ix + 1) = -b.alpha_max;
      ub(ix + 1) = b.alpha_max;
      lb(ix + 2) = -b.phi_max;
      ub(ix + 2) = b.phi_max;
      lb(ix + 3) = b.u_min;
      ub(ix + 3) = r.u_limit;
      lb(ix + 4) = -b.w_psi_max;
      ub(ix + 4) = b.w_psi_max;
      lb(ix + 5) = -b.w_phi_max;
      ub(ix + 5) = b.w_phi_max;
      lb(ix + 6) = -b.unbounded;
      ub(ix + 6) = b.unbounded;
      lb(ix + 7) = -b.a_psi_max;
      ub(ix + 7) = b.a_psi_max;
    }
  }

  // Worst violation over every constraint class at z: defects, terminal,
  // acceleration budget, lane corridor, and the variable boxes.
  double feasibility_residual(const Eigen::VectorXd& z) const {
    double worst = dynamics_defects(z).cwiseAbs().maxCoeff();
    worst = std::max(worst, terminal(z).cwiseAbs().maxCoeff());
    const Eigen::VectorXd gg = gg_values(z);
    for (int i = 0; i < gg.size(); ++i) worst = std::max(worst, gg(i) - 1.0);
    if (config_.include_roll_lane) {
      const Eigen::VectorXd lane = lane_values(z);
      for (int k = 1; k <= num_lane_rows(); ++k) {
        const double width = road_[static_cast<std::size_t>(k)].width;
        worst = std::max(worst, -lane(k - 1));
        worst = std::max(worst, lane(k - 1) - width);
      }
    }
    Eigen::VectorXd lb, ub;
    variable_bounds(lb, ub);
    worst = std::max(worst, (lb - z).maxCoeff());
    worst = std::max(worst, (z - ub).maxCoeff());
    return worst;
  }

  // Progress guard used for solver-internal dynamics/cost evaluations; any
  // box-feasible iterate stays far above it.
  static constexpr double kSolverProgressGuard = 1e-4;

 private:
  std::vector<double> s_;
  std::vector<RoadSample> road_;
  StateSpace x0_;
  OcpConfig config_;
  BikeParams params_;
  BoundSet bounds_;
};

// Assembles the stage grid and per-stage road data.  The initial state is
// taken as-is even if it violates stage bounds (it is a measurement, not a
// decision).  Throws HorizonExceedsMap when the grid would leave the profile.
inline NlpProblem build_problem(const RoadProfile& profile, const StateSpace& x0,
                                const OcpConfig& config, const BikeParams& p) {
  validate_config(config);
  validate_params(p);
  const double s_last = config.s0 + (config.N + 1) * config.d_s;
  if (config.s0 < profile.s_begin() - 1e-9 || s_last > profile.s_end() + 1e-9)
    throw HorizonExceedsMap("build_problem: horizon leaves the road profile");
  std::vector<double> s_grid(static_cast<std::size_t>(config.N) + 2);
  for (int k = 0; k <= config.N + 1; ++k)
    s_grid[static_cast<std::size_t>(k)] = config.s0 + k * config.d_s;
  return NlpProblem(std::move(s_grid), detail::sample_grid(profile, config), x0,
                    config, p);
}

// Constant-speed ride along the lane center with steady-state cornering roll
// and zero inputs.  Exact equilibrium (zero defects) on a straight flat road.
inline std::pair<std::vector<StateSpace>, std::vector<ControlInput>>
initial_guess(const RoadProfile& profile, const StateSpace& x0,
              const OcpConfig& config, const BikeParams& p = BikeParams{}) {
  validate_config(config);
  const BoundSet b;
  std::vector<StateSpace> states(static_cast<std::size_t>(config.N) + 2);
  std::vector<ControlInput> inputs(static_cast<std::size_t>(config.N) + 1,
                                   ControlInput{0.0, 0.0});
  states[0] = x0;
  for (int k = 1; k <= config.N + 1; ++k) {
    const RoadSample r = profile.query(config.s0 + k * config.d_s);
    StateSpace x;
    x.u_x = std::clamp(std::min(x0.u_x, r.u_limit), b.u_min, r.u_limit);
    x.n = r.width / 2.0;
    x.alpha = 0.0;
    x.phi = std::clamp(std::atan(x.u_x * x.u_x * r.kappa / p.g), -b.phi_max,
                       b.phi_max);
    x.w_psi = std::clamp(r.kappa * x.u_x / (1.0 - x.n * r.kappa), -b.w_psi_max,
                         b.w_psi_max);
    x.w_phi = 0.0;
    x.a_x = 0.0;
    x.a_psi = 0.0;
    states[static_cast<std::size_t>(k)] = x;
  }
  return {std::move(states), std::move(inputs)};
}

}  // namespace curvewarn
