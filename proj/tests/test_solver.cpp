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

#include "curvewarn/sqp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "curvewarn/risk.hpp"
#include "test_util.hpp"

namespace curvewarn {
namespace {

using testing::constant_profile;
using testing::ramp_box;
using testing::shaped_profile;
using testing::speed_profile_oracle;

StateSpace centered_state(double u, const RoadProfile& profile, double s0,
                          double a_x = 0.0) {
  StateSpace x;
  x.n = profile.query(s0).width / 2.0;
  x.u_x = u;
  x.a_x = a_x;
  return x;
}

// Random box-feasible decision vector; the unbounded a_x coordinates are
// drawn from a moderate interval instead.
Eigen::VectorXd random_interior_point(const NlpProblem& prob,
                                      std::mt19937& rng) {
  Eigen::VectorXd lb, ub;
  prob.variable_bounds(lb, ub);
  Eigen::VectorXd z(prob.num_vars());
  for (int i = 0; i < z.size(); ++i) {
    const double lo = std::max(lb(i), -4.0);
    const double hi = std::min(ub(i), lo + 8.0) - 1e-3;
    z(i) = std::uniform_real_distribution<double>(lo + 1e-3, hi)(rng);
  }
  return z;
}

TEST(SqpDerivatives, AnalyticGradientMatchesFiniteDifferences) {
  const RoadProfile profile =
      shaped_profile(80.0, [](double s) { return ramp_box(s, 20, 70, 10, 0.015); },
                     [](double) { return 0.02; });
  OcpConfig cfg;
  cfg.N = 10;
  cfg.d_s = 5.0;
  const NlpProblem prob =
      build_problem(profile, centered_state(15.0, profile, 0.0), cfg, BikeParams{});

  std::mt19937 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd z = random_interior_point(prob, rng);
    const detail::SqpEval ev = detail::evaluate_nlp(prob, z);
    const double h = 1e-6;
    for (int i = 0; i < z.size(); ++i) {
      Eigen::VectorXd zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      const double fd = (prob.objective(zp) - prob.objective(zm)) / (2.0 * h);
      EXPECT_NEAR(ev.grad(i), fd, 1e-5 * (1.0 + std::abs(fd)))
          << "coordinate " << i << " trial " << trial;
    }
  }
}

TEST(SqpDerivatives, ConstraintJacobianMatchesDirectionalDifference) {
  const RoadProfile profile =
      shaped_profile(100.0, [](double s) { return ramp_box(s, 10, 90, 15, 0.02); },
                     [](double) { return -0.03; });
  OcpConfig cfg;
  cfg.N = 12;
  cfg.d_s = 6.0;
  const NlpProblem prob =
      build_problem(profile, centered_state(12.0, profile, 0.0), cfg, BikeParams{});

  auto residuals = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd r(prob.num_equalities() + prob.num_gg_rows() +
                      prob.num_lane_rows());
    r.head(prob.num_defect_rows()) = prob.dynamics_defects(z);
    r.segment(prob.num_defect_rows(), 6) = prob.terminal(z);
    r.segment(prob.num_equalities(), prob.num_gg_rows()) = prob.gg_values(z);
    r.tail(prob.num_lane_rows()) = prob.lane_values(z);
    return r;
  };

  std::mt19937 rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::VectorXd z = random_interior_point(prob, rng);
    const detail::SqpEval ev = detail::evaluate_nlp(prob, z);
    Eigen::VectorXd dz(z.size());
    for (int i = 0; i < dz.size(); ++i)
      dz(i) = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const double h = 1e-6;
    const Eigen::VectorXd fd =
        (residuals(z + h * dz) - residuals(z - h * dz)) / (2.0 * h);
    const Eigen::VectorXd an = ev.C * dz;
    const double scale = 1.0 + an.cwiseAbs().maxCoeff();
    EXPECT_LE((fd - an).cwiseAbs().maxCoeff(), 2e-5 * scale) << "trial " << trial;
  }
}

TEST(SqpDerivatives, ConvexifiedHessianIsPositiveSemidefinite) {
  const RoadProfile profile = constant_profile(100.0, 0.01, 0.05);
  OcpConfig cfg;
  cfg.N = 10;
  cfg.d_s = 5.0;
  const NlpProblem prob =
      build_problem(profile, centered_state(14.0, profile, 0.0), cfg, BikeParams{});

  std::mt19937 rng(3);
  const Eigen::VectorXd z = random_interior_point(prob, rng);
  Eigen::VectorXd dual(prob.num_equalities() + prob.num_gg_rows() +
                       prob.num_lane_rows());
  for (int i = 0; i < dual.size(); ++i)
    dual(i) = std::uniform_real_distribution<double>(-50.0, 50.0)(rng);
  const Eigen::SparseMatrix<double> H =
      detail::lagrangian_hessian(prob, z, dual, 1e-8);
  for (int probe = 0; probe < 200; ++probe) {
    Eigen::VectorXd v(prob.num_vars());
    for (int i = 0; i < v.size(); ++i)
      v(i) = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    EXPECT_GE(v.dot(H * v), -1e-8 * v.squaredNorm());
  }
}

TEST(SqpSolve, SpeedLimitedCruiseIsAnImmediateFixedPoint) {
  // Lane-centered ride exactly at the speed limit on a flat straight: no
  // feasible direction improves the traversal time, so the initial guess
  // already satisfies the optimality conditions.
  const RoadProfile profile = constant_profile(200.0);
  OcpConfig cfg;
  cfg.N = 15;
  cfg.d_s = 10.0;
  const StateSpace x0 = centered_state(22.2, profile, 0.0);
  const OcpSolution sol = solve_ocp(profile, x0, cfg, BikeParams{});

  ASSERT_EQ(sol.status, OcpStatus::Optimal);
  EXPECT_LE(sol.iterations, 3);
  EXPECT_LE(sol.feasibility_residual, cfg.feas_tol);
  EXPECT_LE(sol.kkt_residual, cfg.stat_tol);
  for (const StateSpace& x : sol.states) {
    EXPECT_NEAR(x.u_x, 22.2, 1e-6);
    EXPECT_NEAR(x.n, 1.75, 1e-6);
  }
  for (const ControlInput& u : sol.inputs) {
    EXPECT_NEAR(u.j_x, 0.0, 1e-6);
    EXPECT_NEAR(u.j_psi, 0.0, 1e-6);
  }
}

TEST(SqpSolve, StraightRoadAcceleratesToTheSpeedLimit) {
  const RoadProfile profile = constant_profile(300.0, 0.0, 0.0, 3.5, 20.0);
  OcpConfig cfg;
  cfg.N = 50;
  cfg.d_s = 4.0;
  const StateSpace x0 = centered_state(15.0, profile, 0.0);
  const OcpSolution sol = solve_ocp(profile, x0, cfg, BikeParams{});

  ASSERT_EQ(sol.status, OcpStatus::Optimal);
  // The ride ends at the limit and never exceeds it.
  EXPECT_NEAR(sol.states.back().u_x, 20.0, 0.1);
  for (const StateSpace& x : sol.states) EXPECT_LE(x.u_x, 20.0 + 1e-6);
  // Early on the rider is still building acceleration: positive jerk.
  EXPECT_GT(sol.inputs[0].j_x, 0.1);
}

TEST(SqpSolve, AccelerationRideMatchesSpeedProfileOracle) {
  // Pure minimum-time weights; the friction-circle forward-backward pass is
  // an independent model of the same physics.
  const RoadProfile profile = constant_profile(200.0, 0.0, 0.0, 3.5, 22.2);
  OcpConfig cfg;
  cfg.N = 80;
  cfg.d_s = 2.0;
  cfg.q_a = 0.0;
  cfg.r_x = 0.0;
  cfg.r_psi = 0.0;
  const StateSpace x0 = centered_state(15.0, profile, 0.0, /*a_x=*/4.0);
  const OcpSolution sol = solve_ocp(profile, x0, cfg, BikeParams{});
  ASSERT_EQ(sol.status, OcpStatus::Optimal);

  const std::vector<double> oracle =
      speed_profile_oracle(profile, sol.s, x0.u_x);
  for (std::size_t k = 0; k < sol.states.size(); ++k) {
    EXPECT_NEAR(sol.states[k].u_x, oracle[k], 0.03 * oracle[k])
        << "arc length " << sol.s[k];
  }
}

TEST(SqpSolve, BrakingToALowerLimitMatchesSpeedProfileOracle) {
  // Straight road whose speed limit steps from 36 down to 20 m/s at s = 130:
  // the optimal ride cruises, brakes on the envelope anchored at the step,
  // and cruises again.  A straight admits no line-choice advantage, so the
  // envelope pass is tight here.
  const std::size_t kn = 4;
  const RoadProfile profile(std::vector<double>{0.0, 128.0, 130.0, 300.0},
                            std::vector<double>(kn, 0.0),
                            std::vector<double>(kn, 0.0),
                            std::vector<double>(kn, 3.5),
                            std::vector<double>{36.0, 36.0, 20.0, 20.0});
  OcpConfig cfg;
  cfg.N = 120;
  cfg.d_s = 2.0;
  cfg.q_a = 0.0;
  cfg.r_x = 0.0;
  cfg.r_psi = 0.0;

  const StateSpace x0 = centered_state(36.0, profile, 0.0);
  const OcpSolution sol = solve_ocp(profile, x0, cfg, BikeParams{});
  ASSERT_EQ(sol.status, OcpStatus::Optimal);

  const std::vector<double> oracle = speed_profile_oracle(profile, sol.s, 36.0);
  for (std::size_t k = 0; k < sol.states.size(); ++k) {
    EXPECT_NEAR(sol.states[k].u_x, oracle[k], 0.03 * oracle[k])
        << "arc length " << sol.s[k];
  }
}

TEST(SqpSolve, ConstantCurveRideMatchesSpeedProfileOracle) {
  // Accelerating inside a 125 m-radius curve: the longitudinal budget decays
  // as the lateral share of the acceleration ellipse grows, and the speed
  // saturates at the cornering cap instead of the posted limit.  The ride
  // starts in cornering trim with the remaining ellipse budget applied, so
  // the envelope pass models the whole horizon.
  const RoadProfile profile = constant_profile(300.0, 0.008, 0.0, 2.0, 40.0);
  OcpConfig cfg;
  cfg.N = 120;
  cfg.d_s = 2.0;
  cfg.q_a = 0.0;
  cfg.r_x = 0.0;
  cfg.r_psi = 0.0;

  const BikeParams p;
  const RoadSample road = profile.query(0.0);
  const double u0 = 16.0;
  StateSpace x0 = testing::steady_cornering_state(u0, road, 1.0);
  const double lat = u0 * x0.w_psi / p.a_y_max;
  x0.a_x = p.a_x_max * std::sqrt(1.0 - lat * lat);
  x0.a_psi = road.kappa / (1.0 - x0.n * road.kappa) * x0.a_x;
  const double dphi_du =
      (testing::steady_cornering_state(u0 + 0.05, road, 1.0).phi -
       testing::steady_cornering_state(u0 - 0.05, road, 1.0).phi) /
      0.1;
  x0.w_phi = dphi_du * x0.a_x;

  const OcpSolution sol = solve_ocp(profile, x0, cfg, p);
  ASSERT_EQ(sol.status, OcpStatus::Optimal);

  const std::vector<double> oracle = speed_profile_oracle(profile, sol.s, u0);
  for (std::size_t k = 0; k < sol.states.size(); ++k) {
    EXPECT_NEAR(sol.states[k].u_x, oracle[k], 0.03 * oracle[k])
        << "arc length " << sol.s[k];
  }
}

TEST(SqpSolve, OverspeedCurveEntryDemandsHardBraking) {
  // Ride at 30 m/s toward a 50 m-radius curve: still solvable, but only by
  // braking far beyond the comfort thresholds, right away.
  const RoadProfile profile = shaped_profile(
      260.0, [](double s) { return ramp_box(s, 70, 260, 20, 0.02); },
      [](double) { return 0.0; }, 3.5, 30.0);
  OcpConfig cfg;
  cfg.N = 100;
  cfg.d_s = 2.0;
  const StateSpace x0 = centered_state(30.0, profile, 0.0);
  const OcpSolution sol = solve_ocp(profile, x0, cfg, BikeParams{});

  ASSERT_EQ(sol.status, OcpStatus::Optimal);
  double early_min = 0.0;
  for (std::size_t k = 0; k < 25; ++k)
    early_min = std::min(early_min, sol.inputs[k].j_x);
  EXPECT_LT(early_min, -1.0);

  const RiskReport report = classify_maneuver(sol);
  EXPECT_EQ(report.overall, RiskLevel::Danger);
  EXPECT_LT(report.min_jerk, -0.5);
}

TEST(SqpSolve, ImpossibleCurveEntryIsReportedInfeasible) {
  // 30 m/s only 15 m before a 30 m-radius curve: the required deceleration
  // is several times the tire budget, and no lane line fixes that.
  const RoadProfile profile = shaped_profile(
      120.0, [](double s) { return ramp_box(s, 5, 120, 10, 1.0 / 30.0); },
      [](double) { return 0.0; }, 3.5, 30.0);
  OcpConfig cfg;
  cfg.N = 40;
  cfg.d_s = 2.0;
  const StateSpace x0 = centered_state(30.0, profile, 0.0);
  const OcpSolution sol = solve_ocp(profile, x0, cfg, BikeParams{});

  EXPECT_EQ(sol.status, OcpStatus::Infeasible);
  EXPECT_GT(sol.feasibility_residual, cfg.feas_tol);

  const RiskReport report = classify_maneuver(sol);
  EXPECT_EQ(report.overall, RiskLevel::Danger);
}

TEST(SqpSolve, OptimalSolutionPassesIndependentRecheck) {
  const RoadProfile profile = shaped_profile(
      220.0, [](double s) { return ramp_box(s, 50, 200, 25, 0.018); },
      [](double) { return 0.04; }, 3.5, 25.0);
  OcpConfig cfg;
  cfg.N = 60;
  cfg.d_s = 3.0;
  const StateSpace x0 = centered_state(20.0, profile, 0.0);
  const BikeParams p;
  const NlpProblem prob = build_problem(profile, x0, cfg, p);
  auto [gs, gi] = initial_guess(profile, x0, cfg, p);
  const OcpSolution sol = solve(prob, gs, gi);

  ASSERT_EQ(sol.status, OcpStatus::Optimal);
  const Eigen::VectorXd z = prob.pack(sol.states, sol.inputs);
  EXPECT_LE(prob.feasibility_residual(z), 1e-6);
  EXPECT_LE(sol.feasibility_residual, 1e-6);
  EXPECT_LE(sol.kkt_residual, 1e-6);

  ASSERT_EQ(sol.gg_ratio.size(), static_cast<std::size_t>(cfg.N) + 2);
  for (std::size_t k = 1; k < sol.gg_ratio.size(); ++k)
    EXPECT_LE(sol.gg_ratio[k], 1.0 + 1e-6);
  for (std::size_t k = 1; k < sol.states.size(); ++k) {
    const StateSpace& x = sol.states[k];
    const RoadSample r = profile.query(sol.s[k]);
    EXPECT_GE(x.n, -1e-7);
    EXPECT_LE(x.n, r.width + 1e-7);
    EXPECT_LE(x.u_x, r.u_limit + 1e-7);
    EXPECT_LE(std::abs(x.alpha), 0.5 + 1e-7);
    EXPECT_LE(std::abs(x.phi), 1.05 + 1e-7);
  }
  for (const ControlInput& u : sol.inputs) {
    EXPECT_LE(std::abs(u.j_x), 10.0 + 1e-7);
    EXPECT_LE(std::abs(u.j_psi), 20.0 + 1e-7);
  }
  EXPECT_DOUBLE_EQ(sol.objective, sol.cost_breakdown.total());

  // The terminal conditions hold: settled at lane center, steady yaw.
  const Eigen::Matrix<double, 6, 1> term = prob.terminal(z);
  EXPECT_LE(term.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SqpSolve, RepeatedSolvesAreBitwiseIdentical) {
  const RoadProfile profile = shaped_profile(
      160.0, [](double s) { return ramp_box(s, 40, 160, 20, 0.02); },
      [](double) { return 0.03; }, 3.5, 24.0);
  OcpConfig cfg;
  cfg.N = 40;
  cfg.d_s = 2.0;
  const StateSpace x0 = centered_state(20.0, profile, 0.0);
  const OcpSolution a = solve_ocp(profile, x0, cfg, BikeParams{});
  const OcpSolution b = solve_ocp(profile, x0, cfg, BikeParams{});

  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.iterations, b.iterations);
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    EXPECT_EQ(a.states[k].u_x, b.states[k].u_x);
    EXPECT_EQ(a.states[k].n, b.states[k].n);
    EXPECT_EQ(a.states[k].phi, b.states[k].phi);
  }
  for (std::size_t k = 0; k < a.inputs.size(); ++k) {
    EXPECT_EQ(a.inputs[k].j_x, b.inputs[k].j_x);
    EXPECT_EQ(a.inputs[k].j_psi, b.inputs[k].j_psi);
  }
  EXPECT_EQ(a.objective, b.objective);
}

TEST(SqpSolve, DroppingTheRollLaneCouplingNeverCostsTime) {
  // Removing the roll-corridor rows relaxes the program, so the optimal
  // objective cannot increase.
  const RoadProfile profile = shaped_profile(
      200.0, [](double s) { return ramp_box(s, 30, 200, 20, 0.022); },
      [](double) { return 0.0; }, 3.5, 26.0);
  OcpConfig cfg;
  cfg.N = 50;
  cfg.d_s = 3.0;
  const StateSpace x0 = centered_state(22.0, profile, 0.0);

  OcpConfig with = cfg;
  with.include_roll_lane = true;
  OcpConfig without = cfg;
  without.include_roll_lane = false;
  const OcpSolution sol_with = solve_ocp(profile, x0, with, BikeParams{});
  const OcpSolution sol_without = solve_ocp(profile, x0, without, BikeParams{});

  ASSERT_EQ(sol_with.status, OcpStatus::Optimal);
  ASSERT_EQ(sol_without.status, OcpStatus::Optimal);
  EXPECT_LE(sol_without.objective, sol_with.objective + 1e-5);
}

TEST(SqpSolve, DescentDeepensTheBrakingJerk) {
  // Descending toward a curve (stored sigma > 0), the extra g*sigma forward
  // acceleration must also be shed, so the commanded jerk dips deeper than
  // the flat-road model admits.  Masking the slope underestimates the risk.
  const RoadProfile profile = shaped_profile(
      240.0, [](double s) { return ramp_box(s, 80, 240, 20, 0.025); },
      [](double) { return 0.08; }, 3.5, 30.0);
  OcpConfig cfg;
  cfg.N = 80;
  cfg.d_s = 2.0;
  const StateSpace x0 = centered_state(26.0, profile, 0.0);

  OcpConfig with = cfg;
  with.include_slope = true;
  OcpConfig without = cfg;
  without.include_slope = false;
  const OcpSolution sol_slope = solve_ocp(profile, x0, with, BikeParams{});
  const OcpSolution sol_flat = solve_ocp(profile, x0, without, BikeParams{});

  ASSERT_EQ(sol_slope.status, OcpStatus::Optimal);
  ASSERT_EQ(sol_flat.status, OcpStatus::Optimal);

  const RiskReport rs = classify_maneuver(sol_slope);
  const RiskReport rf = classify_maneuver(sol_flat);
  EXPECT_LT(rs.min_jerk, rf.min_jerk);
}

TEST(SqpSolve, WrapperMatchesManualPipeline) {
  const RoadProfile profile = constant_profile(150.0, 0.005);
  OcpConfig cfg;
  cfg.N = 20;
  cfg.d_s = 5.0;
  const StateSpace x0 = centered_state(18.0, profile, 0.0);
  const BikeParams p;

  const OcpSolution a = solve_ocp(profile, x0, cfg, p);
  const NlpProblem prob = build_problem(profile, x0, cfg, p);
  auto [gs, gi] = initial_guess(profile, x0, cfg, p);
  const OcpSolution b = solve(prob, gs, gi);

  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.objective, b.objective);
  for (std::size_t k = 0; k < a.states.size(); ++k)
    EXPECT_EQ(a.states[k].u_x, b.states[k].u_x);
}

}  // namespace
}  // namespace curvewarn
