#pragma once

#include <random>
#include <string>

#include "stabdro/network_io.hpp"
#include "stabdro/pipeline.hpp"
#include "stabdro/uc.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(STABDRO_DATA_DIR) + "/" + name; }

inline stabdro::PipelineSettings settings(double g_lim = 3.0, double nu = 2.0) {
  stabdro::PipelineSettings st;
  st.policy.min_online = 1;
  st.regression.g_lim = g_lim;
  st.regression.nu = nu;
  return st;
}

inline std::vector<int> all_sources(const stabdro::GridModel& g) {
  std::vector<int> s(g.num_sources());
  for (int i = 0; i < g.num_sources(); ++i) s[i] = i;
  return s;
}

/// Units on the source buses of `grid`, costs loosely after the thermal types.
inline stabdro::UcInstance random_instance(const stabdro::GridModel& grid, int horizon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  stabdro::UcInstance inst;
  inst.horizon = horizon;
  double cap = 0.0;
  for (int g = 0; g < grid.num_sources(); ++g) {
    stabdro::UnitParams p;
    p.name = "U" + std::to_string(g + 1);
    p.bus = grid.sources[g].bus;
    p.pmax = 80.0 + 120.0 * u01(rng);
    p.pmin = 0.2 * p.pmax * u01(rng);
    p.no_load = 3.0 * u01(rng);
    p.marginal = 20.0 + 150.0 * u01(rng);
    p.startup = 10.0 * u01(rng);
    p.min_up = 1 + static_cast<int>(3 * u01(rng));
    p.min_down = 1 + static_cast<int>(2 * u01(rng));
    p.initial_on = u01(rng) < 0.5 ? 1 : 0;
    p.initial_hours = 1 + static_cast<int>(4 * u01(rng));
    cap += p.pmax;
    inst.units.push_back(p);
  }
  stabdro::UcScenario sc;
  for (int t = 0; t < horizon; ++t) {
    sc.demand.push_back(cap * (0.3 + 0.5 * u01(rng)));
    sc.wind.push_back(200.0 * u01(rng));
  }
  inst.scenarios.push_back(sc);
  return inst;
}

}  // namespace fixtures
