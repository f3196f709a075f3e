#pragma once

// End-to-end map p -> K: relabel the frozen dataset at reactances p and refit
// the smoothed regression with the configuration frozen at the nominal point.

#include <Eigen/Dense>

#include <vector>

#include "stabdro/grid.hpp"
#include "stabdro/regression.hpp"
#include "stabdro/sensitivity.hpp"

namespace stabdro {

struct PipelineSettings {
  int wind_levels = 20;
  CommitmentPolicy policy;
  SmoothRegressionConfig regression;
  bool prune = false;
};

struct Pipeline {
  GridModel grid;
  Dataset data;
  Eigen::MatrixXd design;
  SmoothRegressionConfig cfg;  ///< s, M and the column mask resolved at nominal labels
  std::vector<int> sources;    ///< uncertain source indices
};

/// Generates the dataset at nominal reactances and freezes the regression
/// configuration. With `prune`, a first fit sets the column mask.
Pipeline make_pipeline(const GridModel& grid, const PipelineSettings& settings, const std::vector<int>& sources);
/// Same, on a dataset generated earlier (nominal labels).
Pipeline make_pipeline(const GridModel& grid, Dataset data, const PipelineSettings& settings,
                       const std::vector<int>& sources);

Eigen::VectorXd pipeline_labels(const Pipeline& pl, const Eigen::VectorXd& p);
CoefficientFit pipeline_fit(const Pipeline& pl, const Eigen::VectorXd& p);
MapEvaluation pipeline_map(const Pipeline& pl, const Eigen::VectorXd& p);
ParameterMap as_parameter_map(const Pipeline& pl);

struct AnalyticResult {
  CoefficientFit fit;
  IndexSensitivity index;
  CoefficientJacobian jacobian;
  Eigen::MatrixXd grad;
  HessianDiagonal hessian;
  MomentEstimate moments;
};

AnalyticResult analytic_moments(const Pipeline& pl, const UncertainParameterSpec& spec,
                                MeanCorrection correction = MeanCorrection::kHalf, double hessian_rel_step = 1e-3);

/// Central retrain difference of the whole map, one column per parameter.
Eigen::MatrixXd end_to_end_gradient(const Pipeline& pl, const Eigen::VectorXd& mu, double rel_step = 1e-4);

}  // namespace stabdro
