#pragma once

// Monte Carlo oracles and the experiment drivers built on them.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stabdro/pipeline.hpp"
#include "stabdro/sensitivity.hpp"
#include "stabdro/uc.hpp"

namespace stabdro {

struct McConfig {
  int samples = 15000;
  std::uint64_t seed = 1;
  int threads = 0;  ///< 0: hardware concurrency
  std::vector<double> cvs{0.05, 0.10, 0.15, 0.20};
  int trace_stride = 500;
  double max_drop_fraction = 0.01;

  void validate() const;
};

int resolve_threads(int requested);

/// Draw `index` of the stream `seed`: a Gaussian with the spec's moments,
/// redrawn until every reactance is positive. Depends only on (seed, index).
Eigen::VectorXd draw_parameters(const UncertainParameterSpec& spec, std::uint64_t seed, std::uint64_t index);

struct McResult {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  int requested = 0;
  int effective = 0;
  int dropped = 0;
  bool valid = true;  ///< drops within the allowed fraction
  std::vector<std::string> drop_reasons;
  std::vector<std::pair<int, Eigen::VectorXd>> trace;  ///< (samples used, running mean)
};

McResult mc_moments(const ParameterMap& f, const UncertainParameterSpec& spec, const McConfig& cfg);
McResult mc_moments(const Pipeline& pl, const UncertainParameterSpec& spec, const McConfig& cfg);

struct CoefficientComparison {
  int index = 0;
  double analytic_mu = 0.0, mc_mu = 0.0, e_mu = 0.0;     ///< e in percent of the MC value
  double analytic_var = 0.0, mc_var = 0.0, e_var = 0.0;
  bool excluded_mu = false, excluded_var = false;
};

struct MapeResult {
  double mape_mu = 0.0;
  double mape_var = 0.0;
  std::vector<int> excluded_mu, excluded_var;
  std::vector<CoefficientComparison> rows;
};

/// Mean |analytic - mc| / |mc| * 100 over the coefficients, for means and for
/// diagonal variances. Entries with |mc| < 1e-9 are excluded and listed.
MapeResult mape(const Eigen::VectorXd& analytic_mu, const Eigen::VectorXd& analytic_var, const Eigen::VectorXd& mc_mu,
                const Eigen::VectorXd& mc_var);
MapeResult mape(const MomentEstimate& analytic, const McResult& mc);

struct CvSweepRow {
  double cv = 0.0;
  MapeResult mape;
  MomentEstimate analytic;
  McResult mc;
};

/// Analytic and Monte Carlo moments at sigma_p = cv * mu_p for each cv. Every
/// point reuses the seed, so the draws share their standard-normal stream.
std::vector<CvSweepRow> cv_sweep(const Pipeline& pl, const McConfig& cfg,
                                 MeanCorrection correction = MeanCorrection::kHalf);

struct ViolationResult {
  double rate = 0.0;
  long violations = 0;
  long checks = 0;  ///< draws x scheduled steps
  int draws = 0;
};

/// True-index violation rate of a schedule with reactances drawn from `spec`.
ViolationResult violation_rate(const Schedule& sched, const UcInstance& inst, const GridModel& grid,
                               const UncertainParameterSpec& spec, double g_lim, int draws, std::uint64_t seed,
                               int threads = 0);

struct MarginRow {
  double margin = 0.0;  ///< fraction added to g_lim
  double cost = 0.0;
  double cost_per_hour = 0.0;
  ViolationResult violation;
  bool feasible = true;
};

struct MarginBaseline {
  std::vector<MarginRow> rows;
  std::optional<int> first_zero_violation;  ///< smallest margin with no violation
};

/// Deterministic-mode schedules with g_lim inflated to (1 + margin) g_lim.
MarginBaseline fixed_margin_baseline(const UcInstance& inst, const GridModel& grid, const Eigen::VectorXd& k,
                                     double g_lim, const std::vector<double>& margins,
                                     const UncertainParameterSpec& spec, int draws, std::uint64_t seed,
                                     const BnbOptions& bnb = {}, int threads = 0);

}  // namespace stabdro
