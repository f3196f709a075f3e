#pragma once

// Primal-dual interior-point method for linear and second-order-cone programs
//
//   min c'x   s.t.   Ax = b,   Gx + s = h,   s in R+^l x Q^q1 x ... x Q^qk
//
// Homogeneous self-dual embedding, Nesterov-Todd scaling and a Mehrotra
// predictor-corrector step. The Newton system is the sparse quasi-definite
// KKT matrix, factored by a simplicial LDL' with static regularization and
// iterative refinement. A small modeling layer with variable bounds and a
// presolve for fixed variables sits on top; branch-and-bound only touches
// the bounds.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <utility>
#include <vector>

namespace stabdro {

struct ConeProblem {
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> a;
  Eigen::VectorXd b;
  Eigen::SparseMatrix<double> g;
  Eigen::VectorXd h;
  int linear_rows = 0;        ///< first rows of g belong to the nonnegative orthant
  std::vector<int> soc_dims;  ///< remaining rows, one block per cone
};

struct ConicOptions {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  int max_iterations = 100;
  double static_reg = 1e-9;
  int refine_steps = 8;
};

enum class ConicStatus { kOptimal, kInaccurate, kPrimalInfeasible, kDualInfeasible, kFailed };

std::string to_string(ConicStatus s);

struct ConicSolution {
  ConicStatus status = ConicStatus::kFailed;
  Eigen::VectorXd x, y, z, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

ConicSolution solve_conic(const ConeProblem& prob, const ConicOptions& opt = {});

/// Affine expression sum_j coef_j x_j + constant.
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  LinExpr& add(int var, double coef) {
    terms.emplace_back(var, coef);
    return *this;
  }
};

/// min c'x + offset subject to bounds, linear rows and cones ||u|| <= t.
struct ConicModel {
  std::vector<double> cost;
  std::vector<double> lower, upper;
  double offset = 0.0;
  std::vector<LinExpr> le_rows;  ///< expr <= 0
  std::vector<LinExpr> eq_rows;  ///< expr == 0
  struct Cone {
    LinExpr t;
    std::vector<LinExpr> u;
  };
  std::vector<Cone> cones;
  std::vector<std::string> names;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int add_var(double lo, double hi, double c, std::string name = {});
  void add_le(LinExpr e) { le_rows.push_back(std::move(e)); }
  void add_eq(LinExpr e) { eq_rows.push_back(std::move(e)); }
  void add_cone(LinExpr t, std::vector<LinExpr> u) { cones.push_back({std::move(t), std::move(u)}); }
};

struct ModelSolution {
  ConicStatus status = ConicStatus::kFailed;
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
  std::string reason;
};

/// Solves the model with the given bounds (the model's own when empty).
/// Variables with equal bounds are substituted out before the solve.
ModelSolution solve_model(const ConicModel& model, const std::vector<double>& lower = {},
                          const std::vector<double>& upper = {}, const ConicOptions& opt = {});

}  // namespace stabdro
