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
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "curvewarn/error.hpp"

namespace curvewarn {

// Bounds with magnitude at or above this sentinel are treated as infinite.
constexpr double kQpInfinity = 1e20;

// Convex quadratic program with l1-elastic general rows:
//
//   minimize    1/2 x'Hx + g'x + nu * sum(s+ + s-)
//   subject to  c_lo <= Cx + s+ - s- <= c_hi      (general rows)
//               lb <= x <= ub                      (hard variable boxes)
//               s+, s- >= 0
//
// Rows with c_lo == c_hi are equalities.  The elastic slacks make every
// instance feasible; with nu larger than the true multipliers the slacks
// vanish and the solution solves the hard-constrained program exactly.
struct QpProblem {
  Eigen::SparseMatrix<double> H;  // n x n, full symmetric, positive semidefinite
  Eigen::VectorXd g;              // n
  Eigen::SparseMatrix<double> C;  // m x n
  Eigen::VectorXd c_lo, c_hi;     // m
  Eigen::VectorXd lb, ub;         // n
  double elastic_weight = 1e6;    // nu
};

struct QpOptions {
  double tol = 1e-9;      // relative primal/dual/complementarity tolerance
  int max_iter = 100;
  double reg_primal = 1e-9;  // quasi-definite KKT regularization
  double reg_dual = 1e-9;
};

enum class QpStatus { Solved, MaxIter, Failed };

struct QpResult {
  QpStatus status = QpStatus::Failed;
  Eigen::VectorXd x;          // n
  Eigen::VectorXd slack_pos;  // m, elastic violations below c_lo
  Eigen::VectorXd slack_neg;  // m, elastic violations above c_hi
  Eigen::VectorXd row_dual;   // m; enters stationarity as g + Hx + C'lambda + box_dual = 0,
                              // positive when the row's upper bound is active
  Eigen::VectorXd box_dual;   // n; z_hi - z_lo of the variable boxes
  double objective = 0.0;     // 1/2 x'Hx + g'x, elastic penalty excluded
  double elastic_l1 = 0.0;    // sum of all slacks
  int iterations = 0;
  double mu = 0.0;            // final complementarity measure
};

namespace detail {

inline bool qp_finite(double bound) { return std::abs(bound) < kQpInfinity * 0.5; }

}  // namespace detail

// Mehrotra predictor-corrector primal-dual interior-point method.  The
// elastic program is rewritten over v = [x, s+, s-, y] with one equality row
// per general row (inequality rows get a bounded range variable y), and each
// Newton step solves the regularized quasi-definite KKT system
// [Q + Sigma + dp*I, E'; E, -dd*I] via sparse LDL', with the symbolic
// factorization reused across iterations.
inline QpResult solve_qp(const QpProblem& qp, const QpOptions& opt = QpOptions{}) {
  const int n = static_cast<int>(qp.g.size());
  const int m = static_cast<int>(qp.c_lo.size());
  if (qp.H.rows() != n || qp.H.cols() != n || qp.C.rows() != m || qp.C.cols() != n ||
      qp.c_hi.size() != m || qp.lb.size() != n || qp.ub.size() != n)
    throw InvariantViolation("solve_qp: inconsistent problem dimensions");
  for (int i = 0; i < m; ++i)
    if (qp.c_lo(i) > qp.c_hi(i))
      throw InvariantViolation("solve_qp: row with c_lo > c_hi");
  for (int i = 0; i < n; ++i) {
    if (qp.lb(i) > qp.ub(i))
      throw InvariantViolation("solve_qp: variable with lb > ub");
    if (detail::qp_finite(qp.lb(i)) && detail::qp_finite(qp.ub(i)) &&
        qp.ub(i) - qp.lb(i) < 1e-14)
      throw InvariantViolation(
          "solve_qp: fixed variable box; use an equality row instead");
  }
  if (!(qp.elastic_weight > 0.0))
    throw InvariantViolation("solve_qp: elastic weight must be positive");
  const double nu = qp.elastic_weight;

  // Augmented variable layout: x (n) | s+ (m) | s- (m) | y (m_in).
  std::vector<int> y_index(static_cast<std::size_t>(m), -1);
  int m_in = 0;
  for (int i = 0; i < m; ++i)
    if (qp.c_hi(i) - qp.c_lo(i) > 0.0) y_index[static_cast<std::size_t>(i)] = m_in++;
  const int na = n + 2 * m + m_in;

  Eigen::VectorXd lo = Eigen::VectorXd::Constant(na, -kQpInfinity);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(na, kQpInfinity);
  lo.head(n) = qp.lb;
  hi.head(n) = qp.ub;
  lo.segment(n, 2 * m).setZero();
  for (int i = 0; i < m; ++i)
    if (y_index[static_cast<std::size_t>(i)] >= 0) {
      lo(n + 2 * m + y_index[static_cast<std::size_t>(i)]) = qp.c_lo(i);
      hi(n + 2 * m + y_index[static_cast<std::size_t>(i)]) = qp.c_hi(i);
    }

  // Equality block E v = b: row i is C_i x + s+_i - s-_i (- y_i) = b_i.
  Eigen::VectorXd b(m);
  std::vector<Eigen::Triplet<double>> etrip;
  etrip.reserve(static_cast<std::size_t>(qp.C.nonZeros()) + 3 * static_cast<std::size_t>(m));
  for (int col = 0; col < qp.C.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.C, col); it; ++it)
      etrip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < m; ++i) {
    etrip.emplace_back(i, n + i, 1.0);
    etrip.emplace_back(i, n + m + i, -1.0);
    const int yi = y_index[static_cast<std::size_t>(i)];
    b(i) = (yi >= 0) ? 0.0 : qp.c_lo(i);
    if (yi >= 0) etrip.emplace_back(i, n + 2 * m + yi, -1.0);
  }
  Eigen::SparseMatrix<double> E(m, na);
  E.setFromTriplets(etrip.begin(), etrip.end());
  const Eigen::SparseMatrix<double> Et = E.transpose();

  Eigen::VectorXd cbar = Eigen::VectorXd::Zero(na);
  cbar.head(n) = qp.g;
  cbar.segment(n, 2 * m).setConstant(nu);

  auto qbar_mul = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(na);
    out.head(n) = qp.H.selfadjointView<Eigen::Lower>() * v.head(n);
    return out;
  };

  // Strictly interior start; elastic-slack duals start at nu so their dual
  // rows hold exactly at the initial point.
  Eigen::VectorXd v(na);
  for (int i = 0; i < na; ++i) {
    const bool flo = detail::qp_finite(lo(i));
    const bool fhi = detail::qp_finite(hi(i));
    if (flo && fhi) {
      const double margin = std::min(0.1, 0.25 * (hi(i) - lo(i)));
      v(i) = margin > 0.0 ? std::clamp(0.0, lo(i) + margin, hi(i) - margin)
                          : 0.5 * (lo(i) + hi(i));
    } else if (flo) {
      v(i) = std::max(0.0, lo(i)) + 0.1;
    } else if (fhi) {
      v(i) = std::min(0.0, hi(i)) - 0.1;
    } else {
      v(i) = 0.0;
    }
  }
  v.segment(n, 2 * m).setConstant(1.0);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd z_lo = Eigen::VectorXd::Zero(na);
  Eigen::VectorXd z_hi = Eigen::VectorXd::Zero(na);
  int n_compl = 0;
  for (int i = 0; i < na; ++i) {
    if (detail::qp_finite(lo(i))) {
      z_lo(i) = 1.0;
      ++n_compl;
    }
    if (detail::qp_finite(hi(i))) {
      z_hi(i) = 1.0;
      ++n_compl;
    }
  }
  z_lo.segment(n, 2 * m).setConstant(nu);

  // Termination scales: x-stationarity and complementarity are measured
  // against the user's objective scale, never against the elastic weight --
  // otherwise a large nu would let the solver stop far from the optimum.
  // Only the slack/range dual rows, whose entries genuinely live at scale
  // nu, get the nu-relative tolerance.
  const double scale_g = 1.0 + (n > 0 ? qp.g.cwiseAbs().maxCoeff() : 0.0);
  const double scale_aux = 1.0 + nu;
  const double scale_p = 1.0 + (b.size() > 0 ? b.cwiseAbs().maxCoeff() : 0.0);

  // The KKT pattern is fixed: lower triangle of H, the full diagonal, E, and
  // the dual regularization diagonal.  Only values change per iteration.
  const int nk = na + m;
  std::vector<Eigen::Triplet<double>> ktrip;
  Eigen::SparseMatrix<double> K(nk, nk);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                        Eigen::AMDOrdering<int>> ldlt;
  bool analyzed = false;

  auto assemble_and_factor = [&](const Eigen::VectorXd& sigma, double dp, double dd) {
    ktrip.clear();
    for (int col = 0; col < qp.H.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(qp.H, col); it; ++it)
        if (it.row() > it.col())
          ktrip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                             it.value());
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(na, dp);
    diag += sigma;
    for (int i = 0; i < n; ++i) diag(i) += qp.H.coeff(i, i);
    for (int i = 0; i < na; ++i) ktrip.emplace_back(i, i, diag(i));
    for (int col = 0; col < E.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(E, col); it; ++it)
        ktrip.emplace_back(na + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
    for (int i = 0; i < m; ++i) ktrip.emplace_back(na + i, na + i, -dd);
    K.setFromTriplets(ktrip.begin(), ktrip.end());
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
    ldlt.factorize(K);
    return ldlt.info() == Eigen::Success;
  };

  // One step of iterative refinement against the unregularized Newton matrix.
  auto kkt_solve = [&](const Eigen::VectorXd& sigma, const Eigen::VectorXd& rhs_v,
                       const Eigen::VectorXd& rhs_l, Eigen::VectorXd& dv,
                       Eigen::VectorXd& dl) {
    Eigen::VectorXd rhs(nk);
    rhs.head(na) = rhs_v;
    rhs.tail(m) = rhs_l;
    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd rv = rhs_v - qbar_mul(sol.head(na)) -
                           sigma.cwiseProduct(sol.head(na)) - Et * sol.tail(m);
      Eigen::VectorXd rl = rhs_l - E * sol.head(na);
      Eigen::VectorXd corr_rhs(nk);
      corr_rhs.head(na) = rv;
      corr_rhs.tail(m) = rl;
      sol += ldlt.solve(corr_rhs);
    }
    dv = sol.head(na);
    dl = sol.tail(m);
  };

  QpResult result;
  result.iterations = 0;

  auto finish = [&](QpStatus status) {
    result.status = status;
    result.x = v.head(n);
    result.slack_pos = v.segment(n, m);
    result.slack_neg = v.segment(n + m, m);
    result.row_dual = lambda;
    result.box_dual = z_hi.head(n) - z_lo.head(n);
    result.objective =
        0.5 * result.x.dot(qp.H.selfadjointView<Eigen::Lower>() * result.x) +
        qp.g.dot(result.x);
    result.elastic_l1 = v.segment(n, 2 * m).sum();
    return result;
  };

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const Eigen::VectorXd r_d = qbar_mul(v) + cbar + Et * lambda - z_lo + z_hi;
    const Eigen::VectorXd r_p = E * v - b;
    double mu = 0.0;
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i))) mu += z_lo(i) * (v(i) - lo(i));
      if (detail::qp_finite(hi(i))) mu += z_hi(i) * (hi(i) - v(i));
    }
    mu /= std::max(1, n_compl);
    result.mu = mu;
    result.iterations = iter;

    const double rp_norm = m > 0 ? r_p.cwiseAbs().maxCoeff() : 0.0;
    const double rd_x = r_d.head(n).cwiseAbs().maxCoeff();
    const double rd_aux = na > n ? r_d.tail(na - n).cwiseAbs().maxCoeff() : 0.0;
    if (rp_norm <= opt.tol * scale_p && rd_x <= opt.tol * scale_g &&
        rd_aux <= opt.tol * scale_aux && mu <= opt.tol * scale_g)
      return finish(QpStatus::Solved);

    Eigen::VectorXd sigma_diag = Eigen::VectorXd::Zero(na);
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i))) sigma_diag(i) += z_lo(i) / (v(i) - lo(i));
      if (detail::qp_finite(hi(i))) sigma_diag(i) += z_hi(i) / (hi(i) - v(i));
    }

    double dp = opt.reg_primal;
    double dd = opt.reg_dual;
    bool factored = false;
    for (int attempt = 0; attempt < 6 && !factored; ++attempt) {
      factored = assemble_and_factor(sigma_diag, dp, dd);
      if (!factored) {
        dp *= 100.0;
        dd *= 100.0;
      }
    }
    if (!factored) return finish(QpStatus::Failed);

    // Predictor: pure Newton step toward complementarity zero.
    Eigen::VectorXd rc_lo = Eigen::VectorXd::Zero(na);
    Eigen::VectorXd rc_hi = Eigen::VectorXd::Zero(na);
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i))) rc_lo(i) = -(v(i) - lo(i)) * z_lo(i);
      if (detail::qp_finite(hi(i))) rc_hi(i) = -(hi(i) - v(i)) * z_hi(i);
    }
    auto build_rhs_v = [&](const Eigen::VectorXd& clo, const Eigen::VectorXd& chi) {
      Eigen::VectorXd rhs = -r_d;
      for (int i = 0; i < na; ++i) {
        if (detail::qp_finite(lo(i))) rhs(i) += clo(i) / (v(i) - lo(i));
        if (detail::qp_finite(hi(i))) rhs(i) -= chi(i) / (hi(i) - v(i));
      }
      return rhs;
    };
    Eigen::VectorXd dv_aff, dl_aff;
    kkt_solve(sigma_diag, build_rhs_v(rc_lo, rc_hi), -r_p, dv_aff, dl_aff);
    // A numerically collapsed solve must not contaminate the iterate; the
    // caller still gets the last healthy point.
    if (!dv_aff.allFinite() || !dl_aff.allFinite())
      return finish(QpStatus::Failed);
    Eigen::VectorXd dzlo_aff = Eigen::VectorXd::Zero(na);
    Eigen::VectorXd dzhi_aff = Eigen::VectorXd::Zero(na);
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i)))
        dzlo_aff(i) = (rc_lo(i) - z_lo(i) * dv_aff(i)) / (v(i) - lo(i));
      if (detail::qp_finite(hi(i)))
        dzhi_aff(i) = (rc_hi(i) + z_hi(i) * dv_aff(i)) / (hi(i) - v(i));
    }

    auto primal_step = [&](const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (int i = 0; i < na; ++i) {
        if (detail::qp_finite(lo(i)) && dv(i) < 0.0)
          a = std::min(a, -(v(i) - lo(i)) / dv(i));
        if (detail::qp_finite(hi(i)) && dv(i) > 0.0)
          a = std::min(a, (hi(i) - v(i)) / dv(i));
      }
      return a;
    };
    auto dual_step = [&](const Eigen::VectorXd& dzlo, const Eigen::VectorXd& dzhi) {
      double a = 1.0;
      for (int i = 0; i < na; ++i) {
        if (detail::qp_finite(lo(i)) && dzlo(i) < 0.0) a = std::min(a, -z_lo(i) / dzlo(i));
        if (detail::qp_finite(hi(i)) && dzhi(i) < 0.0) a = std::min(a, -z_hi(i) / dzhi(i));
      }
      return a;
    };

    const double ap_aff = primal_step(dv_aff);
    const double ad_aff = dual_step(dzlo_aff, dzhi_aff);
    double mu_aff = 0.0;
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i)))
        mu_aff += (z_lo(i) + ad_aff * dzlo_aff(i)) * (v(i) + ap_aff * dv_aff(i) - lo(i));
      if (detail::qp_finite(hi(i)))
        mu_aff += (z_hi(i) + ad_aff * dzhi_aff(i)) * (hi(i) - v(i) - ap_aff * dv_aff(i));
    }
    mu_aff /= std::max(1, n_compl);
    const double sigma_c = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 0.0, 1.0);

    // Corrector: recenter toward sigma*mu with second-order compensation.
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i)))
        rc_lo(i) = sigma_c * mu - (v(i) - lo(i)) * z_lo(i) - dv_aff(i) * dzlo_aff(i);
      if (detail::qp_finite(hi(i)))
        rc_hi(i) = sigma_c * mu - (hi(i) - v(i)) * z_hi(i) + dv_aff(i) * dzhi_aff(i);
    }
    Eigen::VectorXd dv, dl;
    kkt_solve(sigma_diag, build_rhs_v(rc_lo, rc_hi), -r_p, dv, dl);
    Eigen::VectorXd dzlo = Eigen::VectorXd::Zero(na);
    Eigen::VectorXd dzhi = Eigen::VectorXd::Zero(na);
    for (int i = 0; i < na; ++i) {
      if (detail::qp_finite(lo(i)))
        dzlo(i) = (rc_lo(i) - z_lo(i) * dv(i)) / (v(i) - lo(i));
      if (detail::qp_finite(hi(i)))
        dzhi(i) = (rc_hi(i) + z_hi(i) * dv(i)) / (hi(i) - v(i));
    }

    if (!dv.allFinite() || !dl.allFinite() || !dzlo.allFinite() ||
        !dzhi.allFinite())
      return finish(QpStatus::Failed);
    const double tau = 0.995;
    const double ap = std::min(1.0, tau * primal_step(dv));
    const double ad = std::min(1.0, tau * dual_step(dzlo, dzhi));
    v += ap * dv;
    lambda += ad * dl;
    z_lo += ad * dzlo;
    z_hi += ad * dzhi;
  }
  return finish(QpStatus::MaxIter);
}

}  // namespace curvewarn
