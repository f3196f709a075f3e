#pragma once

// Primal active-set method for convex QPs
//
//   min 1/2 x'Hx + f'x   s.t.   Ax <= b
//
// H only needs to be positive semidefinite. On each working set the step is a
// pseudo-inverse Newton step in the null space of the active rows; when the
// reduced gradient has a component along a zero-curvature direction the step
// follows that direction instead, which is also how the phase-1 LP is solved.
// Ties in the ratio test and in the multiplier test go to the lowest row
// index, so identical inputs give bitwise-identical iterates.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "stabdro/error.hpp"
#include "stabdro/grid.hpp"

namespace stabdro {

template <typename Scalar>
struct QpProblem {
  Mat<Scalar> H;
  Vec<Scalar> f;
  Mat<Scalar> A;
  Vec<Scalar> b;
};

template <typename Scalar>
struct QpOptions {
  Scalar feasibility_tol = Scalar(1e-9);
  Scalar dual_tol = Scalar(1e-10);
  int max_iterations = 0;  ///< 0 picks 20 (n + m) + 200
  std::optional<Vec<Scalar>> initial_point;
};

template <typename Scalar>
struct QpSolution {
  Vec<Scalar> x;
  std::vector<int> active;   ///< working set at the optimum, ascending
  Vec<Scalar> multipliers;   ///< one per row, zero off the working set
  Scalar objective = Scalar(0);
  Scalar stationarity = Scalar(0);  ///< ||Hx + f + A'lambda||_inf
  int iterations = 0;
  std::vector<Scalar> objective_trace;  ///< phase-2 objective after every step
};

namespace detail {

template <typename Scalar>
struct ActiveSetResult {
  Vec<Scalar> x;
  std::vector<int> working;
  Vec<Scalar> lambda;  // aligned with working
  int iterations = 0;
  std::vector<Scalar> trace;
};

template <typename Scalar>
Scalar qp_objective(const Mat<Scalar>& H, const Vec<Scalar>& f, const Vec<Scalar>& x) {
  return Scalar(0.5) * x.dot(H * x) + f.dot(x);
}

/// Runs the active-set iteration from a feasible x. Throws UnboundedError.
template <typename Scalar>
ActiveSetResult<Scalar> active_set_iterate(const Mat<Scalar>& H, const Vec<Scalar>& f, const Mat<Scalar>& A,
                                           const Vec<Scalar>& b, Vec<Scalar> x, std::vector<int> working,
                                           const QpOptions<Scalar>& opt) {
  const auto n = H.rows();
  const auto m = A.rows();
  const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(20 * (n + m) + 200);
  const Scalar h_scale = std::max(Scalar(1), H.cwiseAbs().maxCoeff());
  Vec<Scalar> row_norm(m);
  for (Eigen::Index i = 0; i < m; ++i) row_norm(i) = std::max(A.row(i).norm(), std::numeric_limits<Scalar>::min());
  std::vector<char> in_working(m, 0);
  for (int i : working) in_working[i] = 1;

  ActiveSetResult<Scalar> out;
  out.trace.push_back(qp_objective(H, f, x));
  for (int iter = 0; iter < max_iter; ++iter) {
    out.iterations = iter + 1;
    const auto k = static_cast<Eigen::Index>(working.size());
    Mat<Scalar> aw(k, n);
    for (Eigen::Index r = 0; r < k; ++r) aw.row(r) = A.row(working[r]);
    Mat<Scalar> q = Mat<Scalar>::Identity(n, n);
    Mat<Scalar> r_factor;
    if (k > 0) {
      Eigen::HouseholderQR<Mat<Scalar>> qr(aw.transpose());
      q = qr.householderQ() * Mat<Scalar>::Identity(n, n);
      r_factor = qr.matrixQR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    }
    const Mat<Scalar> z = q.rightCols(n - k);
    const Vec<Scalar> g = H * x + f;
    const Scalar g_scale = std::max(Scalar(1), g.cwiseAbs().maxCoeff());

    Vec<Scalar> p = Vec<Scalar>::Zero(n);
    bool newton = true;
    if (z.cols() > 0) {
      const Vec<Scalar> gz = z.transpose() * g;
      const Mat<Scalar> hz = z.transpose() * H * z;
      Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(hz);
      const Vec<Scalar>& ev = es.eigenvalues();
      const Mat<Scalar>& vecs = es.eigenvectors();
      const Vec<Scalar> comps = vecs.transpose() * gz;
      const Scalar curv_tol = Scalar(1e-11) * h_scale;
      Vec<Scalar> null_part = Vec<Scalar>::Zero(gz.size());
      Vec<Scalar> newton_part = Vec<Scalar>::Zero(gz.size());
      for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) <= curv_tol) {
          null_part -= comps(i) * vecs.col(i);
        } else {
          newton_part -= (comps(i) / ev(i)) * vecs.col(i);
        }
      }
      if (null_part.norm() > Scalar(1e-11) * g_scale) {
        newton = false;
        p = z * null_part;
      } else {
        p = z * newton_part;
      }
    }

    const Scalar x_scale = std::max(Scalar(1), x.cwiseAbs().maxCoeff());
    if (p.cwiseAbs().maxCoeff() <= Scalar(1e-13) * x_scale) {
      Vec<Scalar> lambda = Vec<Scalar>::Zero(k);
      if (k > 0) {
        const Vec<Scalar> rhs = -(q.leftCols(k).transpose() * g);
        lambda = r_factor.template triangularView<Eigen::Upper>().solve(rhs);
      }
      Eigen::Index drop = -1;
      for (Eigen::Index r = 0; r < k; ++r) {
        if (lambda(r) < -opt.dual_tol * g_scale) {
          if (drop < 0 || lambda(r) < lambda(drop) ||
              (lambda(r) == lambda(drop) && working[r] < working[drop])) {
            drop = r;
          }
        }
      }
      if (drop < 0) {
        out.x = x;
        out.working = working;
        out.lambda = lambda;
        return out;
      }
      in_working[working[drop]] = 0;
      working.erase(working.begin() + drop);
      continue;
    }

    Scalar alpha = newton ? Scalar(1) : std::numeric_limits<Scalar>::infinity();
    Eigen::Index block = -1;
    const Scalar p_norm = p.norm();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_working[i]) continue;
      const Scalar ap = A.row(i).dot(p);
      if (ap <= Scalar(1e-13) * row_norm(i) * p_norm) continue;
      const Scalar slack = std::max(Scalar(0), b(i) - A.row(i).dot(x));
      const Scalar t = slack / ap;
      if (t < alpha) {
        alpha = t;
        block = i;
      }
    }
    if (!std::isfinite(static_cast<double>(alpha))) {
      throw UnboundedError("QP objective is unbounded below along a zero-curvature feasible ray");
    }
    x += alpha * p;
    if (block >= 0) {
      in_working[block] = 1;
      working.push_back(static_cast<int>(block));
    }
    out.trace.push_back(qp_objective(H, f, x));
  }
  throw Error("active-set iteration limit reached");
}

template <typename Scalar>
Vec<Scalar> pseudo_inverse_solve(const Mat<Scalar>& H, const Vec<Scalar>& rhs) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(H);
  const Scalar tol = Scalar(1e-11) * std::max(Scalar(1), es.eigenvalues().cwiseAbs().maxCoeff());
  Vec<Scalar> comps = es.eigenvectors().transpose() * rhs;
  for (Eigen::Index i = 0; i < comps.size(); ++i) {
    comps(i) = es.eigenvalues()(i) > tol ? comps(i) / es.eigenvalues()(i) : Scalar(0);
  }
  return es.eigenvectors() * comps;
}

template <typename Scalar>
Scalar max_violation(const Mat<Scalar>& A, const Vec<Scalar>& b, const Vec<Scalar>& x) {
  if (A.rows() == 0) return Scalar(0);
  return (A * x - b).maxCoeff();
}

}  // namespace detail

/// Solves the QP. Throws InfeasibleError (with an inconsistent row subset) or
/// UnboundedError.
template <typename Scalar>
QpSolution<Scalar> solve_qp(const QpProblem<Scalar>& qp, const QpOptions<Scalar>& opt = {}) {
  const auto n = qp.H.rows();
  const auto m = qp.A.rows();
  if (qp.H.cols() != n || qp.f.size() != n || qp.A.cols() != n || qp.b.size() != m) {
    throw Error("QP dimensions do not conform");
  }
  const Scalar b_scale = std::max(Scalar(1), m > 0 ? qp.b.cwiseAbs().maxCoeff() : Scalar(0));
  const Scalar feas_tol = opt.feasibility_tol * b_scale;

  Vec<Scalar> x0 = opt.initial_point ? *opt.initial_point : detail::pseudo_inverse_solve<Scalar>(qp.H, -qp.f);
  if (x0.size() != n) throw Error("initial point has the wrong dimension");

  if (detail::max_violation(qp.A, qp.b, x0) > feas_tol) {
    // Phase 1: min t  s.t.  Ax - t <= b, -t <= 0, started at the largest violation.
    Mat<Scalar> h1 = Mat<Scalar>::Zero(n + 1, n + 1);
    Vec<Scalar> f1 = Vec<Scalar>::Zero(n + 1);
    f1(n) = Scalar(1);
    Mat<Scalar> a1 = Mat<Scalar>::Zero(m + 1, n + 1);
    a1.topLeftCorner(m, n) = qp.A;
    a1.col(n).head(m).setConstant(Scalar(-1));
    a1(m, n) = Scalar(-1);
    Vec<Scalar> b1 = Vec<Scalar>::Zero(m + 1);
    b1.head(m) = qp.b;
    Vec<Scalar> start(n + 1);
    start.head(n) = x0;
    start(n) = detail::max_violation(qp.A, qp.b, x0);
    QpOptions<Scalar> opt1 = opt;
    opt1.max_iterations = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(40 * (n + m) + 400);
    auto ph1 = detail::active_set_iterate<Scalar>(h1, f1, a1, b1, start, {}, opt1);
    if (ph1.x(n) > feas_tol) {
      std::vector<int> rows;
      for (std::size_t r = 0; r < ph1.working.size(); ++r) {
        if (ph1.working[r] < m && ph1.lambda(static_cast<Eigen::Index>(r)) > Scalar(0)) rows.push_back(ph1.working[r]);
      }
      std::sort(rows.begin(), rows.end());
      throw InfeasibleError("QP constraints are inconsistent (minimum violation " +
                                std::to_string(static_cast<double>(ph1.x(n))) + ")",
                            rows);
    }
    x0 = ph1.x.head(n);
  }

  auto res = detail::active_set_iterate<Scalar>(qp.H, qp.f, qp.A, qp.b, x0, {}, opt);
  QpSolution<Scalar> sol;
  sol.x = res.x;
  sol.iterations = res.iterations;
  sol.objective = detail::qp_objective(qp.H, qp.f, res.x);
  sol.objective_trace = std::move(res.trace);
  sol.multipliers = Vec<Scalar>::Zero(m);
  for (std::size_t r = 0; r < res.working.size(); ++r) {
    sol.multipliers(res.working[r]) = res.lambda(static_cast<Eigen::Index>(r));
  }
  sol.active = res.working;
  std::sort(sol.active.begin(), sol.active.end());
  Vec<Scalar> grad = qp.H * sol.x + qp.f;
  if (m > 0) grad += qp.A.transpose() * sol.multipliers;
  sol.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : Scalar(0);
  return sol;
}

}  // namespace stabdro
