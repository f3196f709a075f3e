#pragma once

// Desk-scale unit commitment with an optional per-step stability constraint,
// solved by best-first branch-and-bound over the commitment binaries with an
// interior-point method at every node.

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabdro/conic.hpp"
#include "stabdro/dro.hpp"
#include "stabdro/grid.hpp"

namespace stabdro {

/// Thermal or grid-forming unit. Costs: no-load k£/h, marginal £/MWh,
/// startup k£. Startup time and inertia are carried but not modeled.
struct UnitParams {
  std::string name;
  int bus = 0;
  double pmin = 0.0;  ///< MW
  double pmax = 0.0;  ///< MW
  double no_load = 0.0;
  double marginal = 0.0;
  double startup = 0.0;
  double startup_time = 0.0;
  int min_up = 1;
  int min_down = 1;
  double inertia = 0.0;
  int initial_on = 1;
  int initial_hours = 1000;  ///< hours already spent in the initial state
};

struct UcScenario {
  double probability = 1.0;
  std::vector<double> demand;  ///< MW
  std::vector<double> wind;    ///< available MW
};

struct UcInstance {
  int horizon = 1;
  double base_mva = 100.0;
  double shed_cost = 10000.0;  ///< £/MWh
  double ramp_fraction = 0.6;  ///< of capacity per hour
  double load_damping = 0.0;
  std::vector<UnitParams> units;
  std::vector<UcScenario> scenarios;

  int num_units() const { return static_cast<int>(units.size()); }
  void validate() const;
};

UcInstance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const UcInstance& inst);
UcInstance load_instance(const std::string& path);

enum class StabilityKind { kNone, kDeterministic, kDro };

std::string to_string(StabilityKind k);
StabilityKind stability_kind_from_string(const std::string& s);

struct StabilityMode {
  StabilityKind kind = StabilityKind::kNone;
  Eigen::VectorXd k;  ///< deterministic coefficients
  double g_lim = 0.0;
  std::optional<SocStabilityConstraint<double>> soc;

  static StabilityMode none() { return {}; }
  static StabilityMode deterministic(Eigen::VectorXd k, double g_lim);
  static StabilityMode dro(SocStabilityConstraint<double> c);
};

/// Variable indices into the conic model.
struct UcLayout {
  int units = 0, horizon = 0, scenarios = 0;
  std::vector<std::vector<int>> u, v;               ///< [g][t]
  std::vector<std::vector<std::vector<int>>> p, z;  ///< [s][g][t]
  std::vector<std::vector<int>> w, shed;            ///< [s][t]
  std::vector<int> binaries;                        ///< u in (g, t) order
  std::vector<int> source_of_unit;
};

struct UcProblem {
  ConicModel model;
  UcLayout layout;
  UcInstance instance;
  StabilityMode mode;
};

/// Units are matched to grid sources by bus; every source needs a unit.
UcProblem build_uc(const UcInstance& inst, const GridModel& grid, const StabilityMode& mode);

/// [1 | flags | wind p.u. | flag * wind] for one step of a solution vector.
Eigen::VectorXd step_decision(const UcLayout& layout, const std::vector<double>& x, int scenario, int t);

struct BnbOptions {
  double gap = 1e-6;
  long node_limit = 1000000;
  ConicOptions ipm;
};

struct BnbStats {
  long nodes = 0;
  double root_bound = 0.0;
  double best_bound = 0.0;
  double gap = 0.0;
  bool node_limit_hit = false;
  int inaccurate_solves = 0;
  int failed_solves = 0;  ///< relaxations without a usable bound
};

struct Schedule {
  int horizon = 0, units = 0, scenarios = 0;
  std::vector<std::vector<int>> commitment;               ///< [g][t]
  std::vector<std::vector<std::vector<double>>> dispatch;  ///< [s][g][t] MW
  std::vector<std::vector<double>> wind, shed;            ///< [s][t] MW
  std::vector<std::vector<double>> margin;                ///< [s][t], surrogate stability margin
  std::vector<std::vector<Eigen::VectorXd>> decisions;    ///< [s][t]
  double cost = 0.0;           ///< expected total, k£
  double cost_per_hour = 0.0;  ///< k£/h
  double max_product_error = 0.0;  ///< |z - u w| over all products
  BnbStats stats;
};

/// Global optimum by branch-and-bound. Throws InfeasibleError.
Schedule solve_uc(const UcProblem& prob, const BnbOptions& opt = {});

/// Minimum over every commitment pattern of the fixed-commitment problem.
Schedule solve_uc_enumeration(const UcProblem& prob, const ConicOptions& ipm = {});

/// Solves the continuous problem for a fixed commitment ([g][t]).
std::optional<Schedule> solve_fixed_commitment(const UcProblem& prob, const std::vector<std::vector<int>>& commitment,
                                               const ConicOptions& ipm = {});

struct StepEvaluation {
  int scenario = 0, step = 0;
  double index = 0.0;
  bool violated = false;
  std::string reason;
};

struct ScheduleEvaluation {
  std::vector<StepEvaluation> steps;
  double violation_rate = 0.0;
};

/// True index at every step for the given source reactances.
ScheduleEvaluation evaluate_schedule(const Schedule& sched, const UcInstance& inst, const GridModel& grid,
                                     const std::vector<double>& reactances, double g_lim);

}  // namespace stabdro
