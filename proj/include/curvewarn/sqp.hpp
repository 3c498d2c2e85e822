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
#include <Eigen/Sparse>

#include "curvewarn/bike_model.hpp"
#include "curvewarn/error.hpp"
#include "curvewarn/ocp.hpp"
#include "curvewarn/qp.hpp"
#include "curvewarn/road_profile.hpp"

namespace curvewarn {
namespace detail {

// Everything the SQP iteration needs at one point z: objective pieces, the
// analytic gradient, all constraint residuals, and the constraint Jacobian
// in QP-ready form (rows ordered defects | terminal | budget | lane, bounds
// already shifted so they constrain the step d).
struct SqpEval {
  CostBreakdown costs;
  double f = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd c_eq;    // defects then terminal residuals
  Eigen::VectorXd gg;      // acceleration budget at decision states
  Eigen::VectorXd lane;    // n + h_r*phi at decision states (may be empty)
  Eigen::SparseMatrix<double> C;
  Eigen::VectorXd c_lo, c_hi;
};

// Gradient of the per-stage traversal-time cost q_t*d_s*(1-n*kappa)/(u*cos a)
// with respect to (n, alpha, u).
inline void time_cost_gradient(double q_t, double d_s, double kappa,
                               const StateSpace& x, double* g_n, double* g_a,
                               double* g_u) {
  const double ca = std::cos(x.alpha);
  const double val = q_t * d_s * (1.0 - x.n * kappa) / (x.u_x * ca);
  *g_n = -q_t * d_s * kappa / (x.u_x * ca);
  *g_a = val * std::tan(x.alpha);
  *g_u = -val / x.u_x;
}

// Gradient of the acceleration-budget value over the state coordinates that
// enter it: alpha (1), u_x (3), w_psi (4), a_x (6).
inline Eigen::Matrix<double, 8, 1> gg_gradient(const StateSpace& x,
                                               const RoadSample& road,
                                               const BikeParams& p) {
  Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
  const double S = p.g * road.sigma;
  const double axt = x.a_x + S * std::cos(x.alpha);
  const double A2 = p.a_x_max * p.a_x_max;
  const double B2 = p.a_y_max * p.a_y_max;
  g(1) = 2.0 * axt * (-S * std::sin(x.alpha)) / A2;
  g(3) = 2.0 * x.u_x * x.w_psi * x.w_psi / B2;
  g(4) = 2.0 * x.u_x * x.u_x * x.w_psi / B2;
  g(6) = 2.0 * axt / A2;
  return g;
}

// Hessian of the acceleration-budget value over the full state block.
inline Eigen::Matrix<double, 8, 8> gg_hessian(const StateSpace& x,
                                              const RoadSample& road,
                                              const BikeParams& p) {
  Eigen::Matrix<double, 8, 8> h = Eigen::Matrix<double, 8, 8>::Zero();
  const double S = p.g * road.sigma;
  const double sa = std::sin(x.alpha);
  const double ca = std::cos(x.alpha);
  const double axt = x.a_x + S * ca;
  const double A2 = p.a_x_max * p.a_x_max;
  const double B2 = p.a_y_max * p.a_y_max;
  h(1, 1) = 2.0 / A2 * (S * sa * S * sa - axt * S * ca);
  h(1, 6) = h(6, 1) = 2.0 / A2 * (-S * sa);
  h(6, 6) = 2.0 / A2;
  h(3, 3) = 2.0 * x.w_psi * x.w_psi / B2;
  h(3, 4) = h(4, 3) = 4.0 * x.u_x * x.w_psi / B2;
  h(4, 4) = 2.0 * x.u_x * x.u_x / B2;
  return h;
}

// Hessian of the traversal-time cost over the state block: coordinates
// n (0), alpha (1), u_x (3).
inline Eigen::Matrix<double, 8, 8> time_cost_hessian(double q_t, double d_s,
                                                     double kappa,
                                                     const StateSpace& x) {
  Eigen::Matrix<double, 8, 8> h = Eigen::Matrix<double, 8, 8>::Zero();
  const double ca = std::cos(x.alpha);
  const double ta = std::tan(x.alpha);
  const double val = q_t * d_s * (1.0 - x.n * kappa) / (x.u_x * ca);
  const double g_n = -q_t * d_s * kappa / (x.u_x * ca);
  h(0, 1) = h(1, 0) = g_n * ta;
  h(0, 3) = h(3, 0) = -g_n / x.u_x;
  h(1, 1) = val * (1.0 + 2.0 * ta * ta);
  h(1, 3) = h(3, 1) = -val * ta / x.u_x;
  h(3, 3) = 2.0 * val / (x.u_x * x.u_x);
  return h;
}

// Curvature of lambda' f(x, u) over the (x, u) pair, by central differences
// of the analytic Jacobian.  The dynamics Jacobian is exact, so this carries
// full second-order information at finite-difference accuracy.
inline Eigen::Matrix<double, 10, 10> dynamics_lagrangian_hessian(
    const StateSpace& x, const ControlInput& u, const RoadSample& road,
    const BikeParams& p, const Eigen::Matrix<double, 8, 1>& lam) {
  const double h = 1e-6;
  const double guard = NlpProblem::kSolverProgressGuard;
  auto grad_at = [&](const Eigen::Matrix<double, 10, 1>& xi) {
    const StateSpace xs = StateSpace::from_vector(xi.head<8>());
    const ControlInput us{xi(8), xi(9)};
    const JacobianPair J = jacobians_guarded(xs, us, road, p, guard);
    Eigen::Matrix<double, 10, 1> g;
    g.head<8>() = J.A.transpose() * lam;
    g.tail<2>() = J.B.transpose() * lam;
    return g;
  };
  Eigen::Matrix<double, 10, 1> xi0;
  xi0.head<8>() = x.to_vector();
  xi0(8) = u.j_x;
  xi0(9) = u.j_psi;
  Eigen::Matrix<double, 10, 10> H;
  for (int j = 0; j < 10; ++j) {
    Eigen::Matrix<double, 10, 1> xp = xi0, xm = xi0;
    xp(j) += h;
    xm(j) -= h;
    H.col(j) = (grad_at(xp) - grad_at(xm)) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

inline Eigen::MatrixXd clip_psd(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline SqpEval evaluate_nlp(const NlpProblem& prob, const Eigen::VectorXd& z) {
  const int N = prob.N();
  const int nz = prob.num_vars();
  const int m_eq = prob.num_equalities();
  const int m_gg = prob.num_gg_rows();
  const int m_lane = prob.num_lane_rows();
  const OcpConfig& cfg = prob.config();
  const BikeParams& p = prob.params();
  const double guard = NlpProblem::kSolverProgressGuard;

  SqpEval ev;
  ev.costs = prob.costs(z);
  ev.f = ev.costs.total();
  ev.c_eq.resize(m_eq);
  ev.c_eq.head(prob.num_defect_rows()) = prob.dynamics_defects(z);
  ev.c_eq.tail(6) = prob.terminal(z);
  ev.gg = prob.gg_values(z);
  ev.lane = prob.lane_values(z);

  // Analytic objective gradient.
  ev.grad = Eigen::VectorXd::Zero(nz);
  for (int k = 1; k <= N; ++k) {
    const StateSpace x = prob.state_at(z, k);
    const int ix = NlpProblem::state_offset(k);
    double g_n, g_a, g_u;
    time_cost_gradient(cfg.q_t, cfg.d_s, prob.road()[static_cast<std::size_t>(k)].kappa,
                       x, &g_n, &g_a, &g_u);
    ev.grad(ix + 0) += g_n;
    ev.grad(ix + 1) += g_a;
    ev.grad(ix + 3) += g_u;
  }
  for (int k = 1; k <= N + 1; ++k) {
    const StateSpace x = prob.state_at(z, k);
    const int ix = NlpProblem::state_offset(k);
    ev.grad.segment<8>(ix) +=
        cfg.q_a * gg_gradient(x, prob.road()[static_cast<std::size_t>(k)], p);
  }
  for (int k = 0; k <= N; ++k) {
    const ControlInput u = prob.input_at(z, k);
    const int iu = NlpProblem::input_offset(k);
    ev.grad(iu) += 2.0 * cfg.r_x * u.j_x;
    ev.grad(iu + 1) += 2.0 * cfg.r_psi * u.j_psi;
  }

  // Constraint Jacobian, rows: defects | terminal | budget | lane.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(N + 1) * (8 * 18 + 16) + 64);
  for (int k = 0; k <= N; ++k) {
    const StateSpace x = prob.state_at(z, k);
    const ControlInput u = prob.input_at(z, k);
    const JacobianPair J =
        jacobians_guarded(x, u, prob.road()[static_cast<std::size_t>(k)], p, guard);
    const int row0 = 8 * k;
    const int iu = NlpProblem::input_offset(k);
    const int ixn = NlpProblem::state_offset(k + 1);
    for (int r = 0; r < 8; ++r) {
      trip.emplace_back(row0 + r, ixn + r, 1.0);
      for (int c = 0; c < 2; ++c) {
        const double v = -cfg.d_s * J.B(r, c);
        if (v != 0.0) trip.emplace_back(row0 + r, iu + c, v);
      }
      if (k > 0) {
        const int ix = NlpProblem::state_offset(k);
        for (int c = 0; c < 8; ++c) {
          double v = -cfg.d_s * J.A(r, c);
          if (r == c) v -= 1.0;
          if (v != 0.0) trip.emplace_back(row0 + r, ix + c, v);
        }
      }
    }
  }
  {
    const int row0 = prob.num_defect_rows();
    const int ix = NlpProblem::state_offset(N + 1);
    const RoadSample& road_T = prob.road()[static_cast<std::size_t>(N) + 1];
    trip.emplace_back(row0 + 0, ix + 0, 1.0);  // n
    trip.emplace_back(row0 + 1, ix + 1, 1.0);  // alpha
    trip.emplace_back(row0 + 2, ix + 5, 1.0);  // w_phi
    trip.emplace_back(row0 + 3, ix + 6, 1.0);  // a_x
    trip.emplace_back(row0 + 4, ix + 7, 1.0);  // a_psi
    trip.emplace_back(row0 + 5, ix + 4, 1.0);  // w_psi
    const double denom = 1.0 - road_T.width / 2.0 * road_T.kappa;
    trip.emplace_back(row0 + 5, ix + 3, -road_T.kappa / denom);
  }
  for (int k = 1; k <= N + 1; ++k) {
    const int row = m_eq + (k - 1);
    const int ix = NlpProblem::state_offset(k);
    const Eigen::Matrix<double, 8, 1> g =
        gg_gradient(prob.state_at(z, k), prob.road()[static_cast<std::size_t>(k)], p);
    for (int c = 0; c < 8; ++c)
      if (g(c) != 0.0) trip.emplace_back(row, ix + c, g(c));
  }
  for (int k = 1; k <= m_lane; ++k) {
    const int row = m_eq + m_gg + (k - 1);
    const int ix = NlpProblem::state_offset(k);
    trip.emplace_back(row, ix + 0, 1.0);
    trip.emplace_back(row, ix + 2, p.h_r);
  }
  const int m_rows = m_eq + m_gg + m_lane;
  ev.C.resize(m_rows, nz);
  ev.C.setFromTriplets(trip.begin(), trip.end());

  ev.c_lo.resize(m_rows);
  ev.c_hi.resize(m_rows);
  ev.c_lo.head(m_eq) = -ev.c_eq;
  ev.c_hi.head(m_eq) = -ev.c_eq;
  for (int i = 0; i < m_gg; ++i) {
    ev.c_lo(m_eq + i) = -kQpInfinity;
    ev.c_hi(m_eq + i) = 1.0 - ev.gg(i);
  }
  for (int k = 1; k <= m_lane; ++k) {
    const double width = prob.road()[static_cast<std::size_t>(k)].width;
    ev.c_lo(m_eq + m_gg + k - 1) = -ev.lane(k - 1);
    ev.c_hi(m_eq + m_gg + k - 1) = width - ev.lane(k - 1);
  }
  return ev;
}

// l1 constraint violation driving the exact-penalty merit function.
inline double violation_l1(const NlpProblem& prob, const SqpEval& ev) {
  double v = ev.c_eq.cwiseAbs().sum();
  for (int i = 0; i < ev.gg.size(); ++i) v += std::max(0.0, ev.gg(i) - 1.0);
  for (int k = 1; k <= static_cast<int>(ev.lane.size()); ++k) {
    const double width = prob.road()[static_cast<std::size_t>(k)].width;
    v += std::max(0.0, -ev.lane(k - 1)) + std::max(0.0, ev.lane(k - 1) - width);
  }
  return v;
}

inline double violation_inf(const NlpProblem& prob, const SqpEval& ev) {
  double v = ev.c_eq.size() > 0 ? ev.c_eq.cwiseAbs().maxCoeff() : 0.0;
  for (int i = 0; i < ev.gg.size(); ++i) v = std::max(v, ev.gg(i) - 1.0);
  for (int k = 1; k <= static_cast<int>(ev.lane.size()); ++k) {
    const double width = prob.road()[static_cast<std::size_t>(k)].width;
    v = std::max(v, -ev.lane(k - 1));
    v = std::max(v, ev.lane(k - 1) - width);
  }
  return v;
}

// Convexified Lagrangian Hessian: exact cost curvature, budget-row curvature
// weighted by its multiplier, and dynamics curvature from the multipliers of
// the defect rows; assembled per disjoint (x_k, u_k) block and eigenvalue-
// clipped to PSD, then Levenberg-shifted.
inline Eigen::SparseMatrix<double> lagrangian_hessian(
    const NlpProblem& prob, const Eigen::VectorXd& z,
    const Eigen::VectorXd& row_dual, double levenberg) {
  const int N = prob.N();
  const int nz = prob.num_vars();
  const int m_eq = prob.num_equalities();
  const OcpConfig& cfg = prob.config();
  const BikeParams& p = prob.params();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(N) * 100 + 80 + static_cast<std::size_t>(nz));

  auto gg_dual = [&](int k) {
    return row_dual.size() > 0 ? row_dual(m_eq + (k - 1)) : 0.0;
  };
  auto defect_dual = [&](int k) {
    Eigen::Matrix<double, 8, 1> lam = Eigen::Matrix<double, 8, 1>::Zero();
    if (row_dual.size() > 0) lam = row_dual.segment<8>(8 * k);
    return lam;
  };

  // Stage blocks (x_k, u_k) for k = 1..N; both live contiguously in z.
  for (int k = 1; k <= N; ++k) {
    const StateSpace x = prob.state_at(z, k);
    const ControlInput u = prob.input_at(z, k);
    const RoadSample& road = prob.road()[static_cast<std::size_t>(k)];
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(10, 10);
    block.topLeftCorner<8, 8>() =
        time_cost_hessian(cfg.q_t, cfg.d_s, road.kappa, x) +
        (cfg.q_a + std::max(0.0, gg_dual(k))) * gg_hessian(x, road, p);
    block -= cfg.d_s * dynamics_lagrangian_hessian(x, u, road, p, defect_dual(k));
    block(8, 8) += 2.0 * cfg.r_x;
    block(9, 9) += 2.0 * cfg.r_psi;
    block = clip_psd(block);
    const int off = NlpProblem::state_offset(k);  // u_k follows x_k directly
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 10; ++c)
        if (block(r, c) != 0.0) trip.emplace_back(off + r, off + c, block(r, c));
  }
  // Input u_0: pure jerk cost (the stage-0 dynamics are linear in u given
  // the fixed x_0, so no curvature arises there).
  trip.emplace_back(0, 0, 2.0 * cfg.r_x);
  trip.emplace_back(1, 1, 2.0 * cfg.r_psi);
  // Terminal state block: budget cost and budget-row curvature only.
  {
    const int k = N + 1;
    const StateSpace x = prob.state_at(z, k);
    const RoadSample& road = prob.road()[static_cast<std::size_t>(k)];
    Eigen::MatrixXd block =
        (cfg.q_a + std::max(0.0, gg_dual(k))) * gg_hessian(x, road, p);
    block = clip_psd(block);
    const int off = NlpProblem::state_offset(k);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        if (block(r, c) != 0.0) trip.emplace_back(off + r, off + c, block(r, c));
  }
  for (int i = 0; i < nz; ++i) trip.emplace_back(i, i, levenberg);

  Eigen::SparseMatrix<double> H(nz, nz);
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

// First-order optimality residual: stationarity of the Lagrangian plus
// sign-paired complementarity of the inequality rows and variable boxes.
inline double kkt_residual(const NlpProblem& prob, const SqpEval& ev,
                           const Eigen::VectorXd& row_dual,
                           const Eigen::VectorXd& box_dual,
                           const Eigen::VectorXd& z) {
  const int m_eq = prob.num_equalities();
  const int m_gg = prob.num_gg_rows();
  const Eigen::VectorXd r_stat =
      ev.grad + ev.C.transpose() * row_dual + box_dual;
  double kkt = r_stat.cwiseAbs().maxCoeff();
  for (int i = 0; i < m_gg; ++i) {
    const double lam = row_dual(m_eq + i);
    kkt = std::max(kkt, std::abs(lam) * std::max(0.0, 1.0 - ev.gg(i)));
  }
  for (int k = 1; k <= static_cast<int>(ev.lane.size()); ++k) {
    const double lam = row_dual(m_eq + m_gg + k - 1);
    const double width = prob.road()[static_cast<std::size_t>(k)].width;
    const double gap = lam > 0.0 ? std::max(0.0, width - ev.lane(k - 1))
                                 : std::max(0.0, ev.lane(k - 1));
    kkt = std::max(kkt, std::abs(lam) * gap);
  }
  Eigen::VectorXd lb, ub;
  prob.variable_bounds(lb, ub);
  for (int i = 0; i < z.size(); ++i) {
    const double zeta = box_dual(i);
    const double gap = zeta > 0.0 ? std::max(0.0, ub(i) - z(i))
                                  : std::max(0.0, z(i) - lb(i));
    kkt = std::max(kkt, std::abs(zeta) * gap);
  }
  return kkt;
}

// Best-certificate first-order residual: multipliers are re-estimated by
// least squares over the gradients of the active constraints, instead of
// reusing the subproblem duals (whose primal iterate carries O(sqrt(mu))
// noise along weakly curved directions).  Sign conditions are enforced by
// clipping, so the returned value is a valid -- if slightly pessimistic --
// stationarity bound.
inline double refined_kkt_residual(const NlpProblem& prob, const SqpEval& ev,
                                   const Eigen::VectorXd& z,
                                   const Eigen::VectorXd& lb,
                                   const Eigen::VectorXd& ub) {
  const int nz = prob.num_vars();
  const int m_eq = prob.num_equalities();
  const int m_gg = prob.num_gg_rows();
  const double act = 1e-5;

  // Column j of A_t is the gradient of the j-th active constraint.
  // Kinds: 0 equality row, +1 active-at-upper (dual >= 0),
  // -1 active-at-lower (dual <= 0).
  std::vector<int> rows, kinds;
  for (int i = 0; i < m_eq; ++i) {
    rows.push_back(i);
    kinds.push_back(0);
  }
  for (int i = 0; i < m_gg; ++i) {
    if (1.0 - ev.gg(i) <= act) {
      rows.push_back(m_eq + i);
      kinds.push_back(+1);
    }
  }
  for (int k = 1; k <= static_cast<int>(ev.lane.size()); ++k) {
    const double width = prob.road()[static_cast<std::size_t>(k)].width;
    const double val = ev.lane(k - 1);
    if (width - val <= act) {
      rows.push_back(m_eq + m_gg + k - 1);
      kinds.push_back(+1);
    } else if (val <= act) {
      rows.push_back(m_eq + m_gg + k - 1);
      kinds.push_back(-1);
    }
  }
  std::vector<int> box_idx, box_kind;
  for (int i = 0; i < nz; ++i) {
    if (ub(i) - z(i) <= act * (1.0 + std::abs(ub(i))) && qp_finite(ub(i))) {
      box_idx.push_back(i);
      box_kind.push_back(+1);
    } else if (z(i) - lb(i) <= act * (1.0 + std::abs(lb(i))) &&
               qp_finite(lb(i))) {
      box_idx.push_back(i);
      box_kind.push_back(-1);
    }
  }

  const int na = static_cast<int>(rows.size() + box_idx.size());
  Eigen::SparseMatrix<double> A_t(nz, na);  // transposed: columns = gradients
  {
    std::vector<Eigen::Triplet<double>> trip;
    const Eigen::SparseMatrix<double> Ct = ev.C.transpose();
    for (std::size_t j = 0; j < rows.size(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ct, rows[j]); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(j),
                          it.value());
    for (std::size_t j = 0; j < box_idx.size(); ++j)
      trip.emplace_back(box_idx[j], static_cast<int>(rows.size() + j), 1.0);
    A_t.setFromTriplets(trip.begin(), trip.end());
  }

  // Normal equations (A A' + eps I) y = -A grad, regularized to tolerate
  // redundant active rows.
  Eigen::SparseMatrix<double> normal = (A_t.transpose() * A_t).pruned();
  for (int i = 0; i < na; ++i) normal.coeffRef(i, i) += 1e-12;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(normal);
  if (ldlt.info() != Eigen::Success)
    return std::numeric_limits<double>::infinity();
  Eigen::VectorXd y = ldlt.solve(-(A_t.transpose() * ev.grad));

  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (kinds[j] > 0 && y(static_cast<int>(j)) < 0.0) y(static_cast<int>(j)) = 0.0;
    if (kinds[j] < 0 && y(static_cast<int>(j)) > 0.0) y(static_cast<int>(j)) = 0.0;
  }
  for (std::size_t j = 0; j < box_idx.size(); ++j) {
    const int col = static_cast<int>(rows.size() + j);
    if (box_kind[j] > 0 && y(col) < 0.0) y(col) = 0.0;
    if (box_kind[j] < 0 && y(col) > 0.0) y(col) = 0.0;
  }

  const Eigen::VectorXd r = ev.grad + A_t * y;
  double kkt = r.cwiseAbs().maxCoeff();
  // Complementarity: inactive constraints hold zero duals by construction;
  // active ones sit within `act` of their bound.
  for (std::size_t j = 0; j < rows.size(); ++j)
    if (kinds[j] != 0)
      kkt = std::max(kkt, std::abs(y(static_cast<int>(j))) * act);
  return kkt;
}

}  // namespace detail

// Sequential quadratic programming with an l1 exact-penalty line search.
// Every subproblem is the elastic QP of the linearized constraints, so it is
// always feasible; the elastic weight doubles as the merit-function penalty
// and its saturation at the cap is the infeasibility signal.  Deterministic:
// identical inputs take an identical iteration path.
inline OcpSolution solve(const NlpProblem& prob,
                         const std::vector<StateSpace>& guess_states,
                         const std::vector<ControlInput>& guess_inputs) {
  const OcpConfig& cfg = prob.config();
  Eigen::VectorXd lb, ub;
  prob.variable_bounds(lb, ub);
  Eigen::VectorXd z =
      prob.pack(guess_states, guess_inputs).cwiseMax(lb).cwiseMin(ub);

  // Exact-penalty cap: comfortably above any multiplier this program family
  // produces, comfortably below where the elastic subproblem's conditioning
  // degrades.  Saturation at the cap marks the program as infeasible.
  const double nu_cap = 1e6;
  double nu = 100.0;
  double levenberg = 1e-8;
  const double lm_min = 1e-8;
  const double lm_max = 1e10;

  Eigen::VectorXd prev_row_dual;  // empty on the first iteration
  double best_feas = std::numeric_limits<double>::infinity();
  int iters_at_cap_without_progress = 0;
  int consecutive_qp_failures = 0;

  OcpSolution sol;
  sol.status = OcpStatus::MaxIter;
  sol.s = prob.s_grid();

  auto fill_solution = [&](OcpStatus status, int iterations, double kkt,
                           double feas) {
    sol.status = status;
    sol.iterations = iterations;
    sol.kkt_residual = kkt;
    sol.feasibility_residual = feas;
    prob.unpack(z, sol.states, sol.inputs);
    sol.cost_breakdown = prob.costs(z);
    sol.objective = sol.cost_breakdown.total();
    sol.gg_ratio.resize(static_cast<std::size_t>(cfg.N) + 2);
    for (int k = 0; k <= cfg.N + 1; ++k)
      sol.gg_ratio[static_cast<std::size_t>(k)] =
          gg_constraint(prob.state_at(z, k), prob.road()[static_cast<std::size_t>(k)],
                        prob.params());
    return sol;
  };

  double last_kkt = std::numeric_limits<double>::infinity();
  double last_feas = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    const detail::SqpEval ev = detail::evaluate_nlp(prob, z);
    const double feas = detail::violation_inf(prob, ev);
    const double viol1 = detail::violation_l1(prob, ev);
    last_feas = feas;

    QpProblem qp;
    qp.H = detail::lagrangian_hessian(prob, z, prev_row_dual, levenberg);
    qp.g = ev.grad;
    qp.C = ev.C;
    qp.c_lo = ev.c_lo;
    qp.c_hi = ev.c_hi;
    qp.lb = lb - z;
    qp.ub = ub - z;

    QpResult qpres;
    for (int round = 0; round < 4; ++round) {
      qp.elastic_weight = nu;
      qpres = solve_qp(qp);
      if (qpres.status == QpStatus::Failed || !qpres.x.allFinite()) break;
      const double lam_inf = qpres.row_dual.cwiseAbs().maxCoeff();
      if (lam_inf > 0.9 * nu && nu < nu_cap) {
        nu = std::min(nu_cap, std::max(10.0 * nu, 2.0 * lam_inf));
        continue;
      }
      break;
    }
    if (qpres.status == QpStatus::Failed || !qpres.x.allFinite() ||
        !qpres.row_dual.allFinite()) {
      levenberg = std::min(lm_max, levenberg * 100.0);
      if (++consecutive_qp_failures > 5)
        return fill_solution(OcpStatus::MaxIter, iter + 1, last_kkt, feas);
      continue;
    }
    consecutive_qp_failures = 0;

    double kkt =
        detail::kkt_residual(prob, ev, qpres.row_dual, qpres.box_dual, z);
    // Near-optimal iterates deserve the sharper certificate: the subproblem
    // duals are polluted by the interior-point centering error.
    if (feas <= cfg.feas_tol && kkt > cfg.stat_tol &&
        kkt <= 1e-2 * (1.0 + ev.grad.cwiseAbs().maxCoeff()))
      kkt = std::min(kkt, detail::refined_kkt_residual(prob, ev, z, lb, ub));
    last_kkt = kkt;
    prev_row_dual = qpres.row_dual;

    if (feas <= cfg.feas_tol && kkt <= cfg.stat_tol)
      return fill_solution(OcpStatus::Optimal, iter, kkt, feas);

    // Infeasibility: the penalty is saturated yet the violation refuses to
    // improve -- no maneuver within the rider's ability satisfies the model.
    if (nu >= nu_cap && feas > cfg.feas_tol) {
      if (feas > (1.0 - 1e-3) * best_feas) {
        if (++iters_at_cap_without_progress >= 8)
          return fill_solution(OcpStatus::Infeasible, iter + 1, kkt, feas);
      } else {
        iters_at_cap_without_progress = 0;
      }
    }
    best_feas = std::min(best_feas, feas);

    const Eigen::VectorXd& d = qpres.x;
    const double merit0 = ev.f + nu * viol1;
    const double pred =
        std::max(0.0, nu * viol1 - (qpres.objective + nu * qpres.elastic_l1));

    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < 30 && !accepted; ++ls, alpha *= 0.5) {
      const Eigen::VectorXd z_try = (z + alpha * d).cwiseMax(lb).cwiseMin(ub);
      const detail::SqpEval ev_try = detail::evaluate_nlp(prob, z_try);
      const double merit_try =
          ev_try.f + nu * detail::violation_l1(prob, ev_try);
      if (merit_try <=
          merit0 - 1e-4 * alpha * pred + 1e-14 * (1.0 + std::abs(merit0))) {
        z = z_try;
        accepted = true;
      }
      if (alpha < 1e-7) break;
    }
    if (accepted) {
      levenberg = std::max(lm_min, levenberg * 0.1);
    } else {
      levenberg = std::min(lm_max, levenberg * 10.0);
    }
  }
  return fill_solution(OcpStatus::MaxIter, cfg.max_iter, last_kkt, last_feas);
}

// Builds the program for the given road window, seeds it with the
// constant-speed guess, and solves it.
inline OcpSolution solve_ocp(const RoadProfile& profile, const StateSpace& x0,
                             const OcpConfig& config, const BikeParams& p) {
  const NlpProblem prob = build_problem(profile, x0, config, p);
  auto [states, inputs] = initial_guess(profile, x0, config, p);
  return solve(prob, states, inputs);
}

}  // namespace curvewarn
