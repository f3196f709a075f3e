#pragma once

// Boundary-aware linear surrogate of the stability index: training data
// generation, region partition, the hard (region-partitioned) fit and the
// smoothed differentiable fit.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "stabdro/grid.hpp"
#include "stabdro/qp.hpp"

namespace stabdro {

/// [1 | source flags | total wind (p.u.) | flag * wind]
Eigen::VectorXd make_augmented(const std::vector<int>& commitment, double wind);

/// Number of augmented entries for `num_sources` sources.
inline int augmented_size(int num_sources) { return 2 * num_sources + 2; }

struct TrainingSample {
  Eigen::VectorXd x;
  double g = 0.0;
  std::vector<int> commitment;
  double wind = 0.0;
};

struct SkippedSample {
  std::vector<int> commitment;
  double wind = 0.0;
  std::string reason;
};

struct Dataset {
  std::vector<TrainingSample> samples;
  std::vector<SkippedSample> skipped;

  int size() const { return static_cast<int>(samples.size()); }
  Eigen::MatrixXd design() const;  ///< one row per sample
  Eigen::VectorXd labels() const;
};

struct CommitmentPolicy {
  int min_online = 0;  ///< combinations with fewer online sources are not generated
};

/// Midpoints of n equal sub-intervals of [0, 1].
std::vector<double> wind_levels(int n);

/// One sample per (commitment combination, wind level). Wind levels are
/// fractions of the installed GFL capacity; the stored wind entry is the total
/// output in per-unit. Labels use `reactances` (nominal when empty).
/// Configurations whose reduction is singular are skipped with a reason.
Dataset generate_dataset(const GridModel& grid, int n, const CommitmentPolicy& policy = {},
                         const std::vector<double>& reactances = {});

/// Index of every sample evaluated at the given source reactances.
Eigen::VectorXd relabel(const GridModel& grid, const Dataset& data, const std::vector<double>& reactances);

struct RegionPartition {
  std::vector<int> below;     ///< g < g_lim
  std::vector<int> boundary;  ///< g_lim <= g < g_lim + nu
  std::vector<int> above;     ///< g >= g_lim + nu
  double g_lim = 0.0;
  double nu = 0.0;
};

RegionPartition partition(const Eigen::VectorXd& labels, double g_lim, double nu);

enum class ConstraintFamily {
  kUpper,  ///< surrogate held below g_lim (unstable side)
  kLower,  ///< surrogate held at or above g_lim (stable side)
};

struct ActiveConstraint {
  int row = 0;
  int sample = 0;
  ConstraintFamily family = ConstraintFamily::kUpper;
  double multiplier = 0.0;
};

struct CoefficientFit {
  Eigen::VectorXd coefficients;
  std::vector<ActiveConstraint> active;
  double objective = 0.0;
  double stationarity = 0.0;     ///< ||grad L||_inf at the optimum
  double max_violation = 0.0;    ///< max(A K - b), <= 0 when feasible
  double complementarity = 0.0;  ///< max |lambda_m * slack_m|
  int iterations = 0;
  std::vector<double> objective_trace;
  std::vector<char> columns;  ///< fitted columns; pruned ones are held at zero
};

struct HardFitOptions {
  double strict_margin = 1e-6;  ///< strict "< g_lim" written as "<= g_lim - margin"
  double stable_margin = 1e-9;  ///< stable side written as ">= g_lim + margin"
};

CoefficientFit fit_hard(const Dataset& data, const RegionPartition& part, const HardFitOptions& opt = {});

struct NuSearch {
  double nu = 0.0;
  int solves = 0;
  std::vector<double> tried;
};

/// Smallest nu on the doubling grid nu0 * 2^j (nu0 = 1% of the label range,
/// capped at the range) for which the hard fit is feasible.
NuSearch choose_nu(const Dataset& data, double g_lim, const HardFitOptions& opt = {});

struct SmoothRegressionConfig {
  double g_lim = 0.0;
  double nu = 0.0;
  std::optional<double> s;  ///< Gaussian scale; default gives weight 0.5 on the band edges
  double r = 0.5;           ///< sigmoid steepness
  std::optional<double> big_m;  ///< default 10 max|g|
  bool sharp = false;           ///< exact big-M switching instead of the sigmoid
  double strict_margin = 1e-6;  ///< used by sharp switching only
  std::vector<char> columns;    ///< empty: fit every column

  double scale() const;
  /// Fills s and big_m from the dataset; an already-set value is kept.
  SmoothRegressionConfig resolved(const Eigen::VectorXd& labels) const;
};

double default_gaussian_scale(double nu);
double gaussian_weight(double g, const SmoothRegressionConfig& cfg);
double sigmoid_gamma(double x, double r);
double sigmoid_gamma_slope(double x, double r);

struct SmoothQp {
  QpProblem<double> qp;
  std::vector<int> row_sample;
  std::vector<ConstraintFamily> row_family;
  std::vector<int> column_map;  ///< reduced column -> augmented entry
};

/// The QP behind fit_smooth for given labels; exposed for sensitivity work.
SmoothQp build_smooth_qp(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                         const SmoothRegressionConfig& cfg);

CoefficientFit fit_smooth(const Dataset& data, const SmoothRegressionConfig& cfg);
CoefficientFit fit_smooth(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                          const SmoothRegressionConfig& cfg);

/// Columns kept by the optional pruning pass: |K_k| >= 0.1 median|K|.
std::vector<char> prune_columns(const Eigen::VectorXd& coefficients);

}  // namespace stabdro
