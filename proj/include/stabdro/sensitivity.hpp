#pragma once

// Derivatives of the fitted coefficients with respect to uncertain source
// reactances (index perturbation chained with KKT perturbation of the
// smoothed regression) and Delta-method moment propagation.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stabdro/grid.hpp"
#include "stabdro/regression.hpp"

namespace stabdro {

/// Uncertain parameters are source reactances, identified by source index.
struct UncertainParameterSpec {
  std::vector<int> sources;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::optional<Eigen::MatrixXd> covariance;  ///< overrides diag(variance)

  int size() const { return static_cast<int>(sources.size()); }
  Eigen::MatrixXd sigma() const;
  void validate() const;

  /// Means at the nominal reactances, sigma_p = cv * mu_p.
  static UncertainParameterSpec from_cv(const GridModel& grid, const std::vector<int>& sources, double cv);
};

/// Full source reactance vector with the uncertain entries replaced by p.
std::vector<double> reactances_with(const GridModel& grid, const std::vector<int>& sources, const Eigen::VectorXd& p);

struct IndexDerivative {
  double value = 0.0;
  bool finite_difference = false;  ///< eigenvalue gap too small for the analytic formula
};

/// dg/dX_g at an operating point: w' dY'_red v / (w' v) with
/// dY_red = Y_Ld Y_dd^-1 dY_dd Y_dd^-1 Y_dL. Falls back to a central
/// difference (h = fd_rel_step X_g) when the eigenvalue gap is below 1e-8.
IndexDerivative dg_dp(const GridModel& grid, const OperatingPoint& op, int source, double fd_rel_step = 1e-6);

struct IndexSensitivity {
  Eigen::MatrixXd dg_dp;  ///< samples x parameters
  int fallbacks = 0;
};

IndexSensitivity index_sensitivity(const GridModel& grid, const Dataset& data, const std::vector<int>& sources,
                                   const std::vector<double>& reactances);

/// Linear system for the perturbation of the smoothed regression optimum:
///   [A N; N' 0] [dK; dlambda] = [-c; -d]
/// over the fitted columns and the strictly active rows.
struct KktPerturbation {
  Eigen::MatrixXd a;  ///< Hessian of the objective in K
  Eigen::MatrixXd n;  ///< one column per strictly active row, the row's gradient in K
  Eigen::MatrixXd c;  ///< d(grad_K C)/dg, one column per sample
  Eigen::MatrixXd d;  ///< d(beta_m)/dg, active rows x samples
  std::vector<int> active_rows;
  std::vector<int> weak_rows;  ///< active with multiplier <= 1e-8, left out of the system
  std::vector<int> column_map;
};

KktPerturbation assemble_kkt_perturbation(const CoefficientFit& fit, const Eigen::MatrixXd& design,
                                          const Eigen::VectorXd& labels, const SmoothRegressionConfig& cfg);

struct CoefficientJacobian {
  Eigen::MatrixXd dk_dg;       ///< augmented size x samples
  Eigen::MatrixXd dlambda_dg;  ///< strictly active rows x samples
  double residual = 0.0;       ///< ||KKT * sol - rhs||_inf
  bool retrained = false;      ///< singular KKT matrix, columns from retrain differences
  std::vector<int> active_rows;
};

/// Retrain step used by the fallback; the result must be fit with the same frozen config.
CoefficientJacobian dk_dg(const CoefficientFit& fit, const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                          const SmoothRegressionConfig& cfg, double retrain_step = 1e-5);

/// Central retrain difference of K with respect to one label.
Eigen::VectorXd retrain_difference(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                                   const SmoothRegressionConfig& cfg, int sample, double step);

/// Chain rule: (dK/dg) (dg/dp).
Eigen::MatrixXd grad_f(const Eigen::MatrixXd& dk_dg, const Eigen::MatrixXd& dg_dp);

struct MapEvaluation {
  Eigen::VectorXd value;
  std::vector<int> active;  ///< active rows of the underlying fit, empty for plain maps
};
using ParameterMap = std::function<MapEvaluation(const Eigen::VectorXd&)>;

struct HessianDiagonal {
  Eigen::MatrixXd d2;            ///< outputs x parameters
  Eigen::VectorXd steps;         ///< h per parameter
  std::vector<char> one_sided;   ///< active set changed across the central stencil
};

/// Central second differences with h = rel_step * |mu_p|; where the active set
/// differs between the three points a one-sided stencil on the side that keeps
/// the nominal active set is used instead.
HessianDiagonal hessian_diag_f(const ParameterMap& f, const Eigen::VectorXd& mu, double rel_step = 1e-3,
                               const std::optional<MapEvaluation>& at_mu = std::nullopt);

enum class MeanCorrection {
  kHalf,     ///< mu_K = f + 1/2 sum_p f_pp sigma_p^2
  kLiteral,  ///< mu_K = f + sum_p f_pp sigma_p^2
  kNone,
};

std::string to_string(MeanCorrection m);
MeanCorrection mean_correction_from_string(const std::string& s);

struct MomentEstimate {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  MeanCorrection correction = MeanCorrection::kHalf;
  double hessian_rel_step = 1e-3;
  int fallbacks = 0;
  std::vector<std::string> notes;
};

MomentEstimate propagate_moments(const Eigen::MatrixXd& grad, const Eigen::MatrixXd& hessian_diag,
                                 const UncertainParameterSpec& spec, const Eigen::VectorXd& f_mu,
                                 MeanCorrection correction = MeanCorrection::kHalf);

}  // namespace stabdro
