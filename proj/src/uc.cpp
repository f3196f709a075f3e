#include "stabdro/uc.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "stabdro/network_io.hpp"
#include "stabdro/regression.hpp"

namespace stabdro {

void UcInstance::validate() const {
  if (horizon < 1) throw InvalidModelError("horizon must be at least one step");
  if (!(base_mva > 0.0)) throw InvalidModelError("base power must be positive");
  if (units.empty()) throw InvalidModelError("instance has no units");
  if (scenarios.empty()) throw InvalidModelError("instance has no scenario");
  double total = 0.0;
  for (const auto& s : scenarios) {
    if (static_cast<int>(s.demand.size()) != horizon || static_cast<int>(s.wind.size()) != horizon) {
      throw InvalidModelError("profile length differs from the horizon");
    }
    for (int t = 0; t < horizon; ++t) {
      if (s.demand[t] < 0.0 || s.wind[t] < 0.0) throw InvalidModelError("profiles must be nonnegative");
    }
    if (!(s.probability > 0.0)) throw InvalidModelError("scenario probabilities must be positive");
    total += s.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidModelError("scenario probabilities must sum to one");
  for (const auto& u : units) {
    if (u.pmin < 0.0 || u.pmax < u.pmin || !(u.pmax > 0.0)) {
      throw InvalidModelError("unit " + u.name + " has invalid output limits");
    }
    if (u.min_up < 1 || u.min_down < 1) throw InvalidModelError("minimum up/down times must be >= 1 h");
    if (u.initial_on != 0 && u.initial_on != 1) throw InvalidModelError("initial state must be 0 or 1");
  }
}

UcInstance instance_from_json(const nlohmann::json& j) {
  UcInstance inst;
  try {
    inst.horizon = j.at("horizon").get<int>();
    inst.base_mva = j.value("base_mva", 100.0);
    inst.shed_cost = j.value("shed_cost", 10000.0);
    inst.ramp_fraction = j.value("ramp_fraction", 0.6);
    inst.load_damping = j.value("load_damping", 0.0);
    for (const auto& u : j.at("units")) {
      UnitParams p;
      p.name = u.value("name", "G" + std::to_string(inst.units.size() + 1));
      p.bus = u.at("bus").get<int>();
      p.pmin = u.at("pmin").get<double>();
      p.pmax = u.at("pmax").get<double>();
      p.no_load = u.value("no_load", 0.0);
      p.marginal = u.value("marginal", 0.0);
      p.startup = u.value("startup", 0.0);
      p.startup_time = u.value("startup_time", 0.0);
      p.min_up = u.value("min_up", 1);
      p.min_down = u.value("min_down", 1);
      p.inertia = u.value("inertia", 0.0);
      p.initial_on = u.value("initial_on", 1);
      p.initial_hours = u.value("initial_hours", 1000);
      inst.units.push_back(p);
    }
    if (j.contains("scenarios")) {
      for (const auto& s : j.at("scenarios")) {
        inst.scenarios.push_back({s.value("probability", 1.0), s.at("demand").get<std::vector<double>>(),
                                  s.at("wind").get<std::vector<double>>()});
      }
    } else {
      inst.scenarios.push_back({1.0, j.at("demand").get<std::vector<double>>(), j.at("wind").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidModelError(std::string("malformed instance: ") + e.what());
  }
  inst.validate();
  return inst;
}

nlohmann::json instance_to_json(const UcInstance& inst) {
  nlohmann::json j;
  j["horizon"] = inst.horizon;
  j["base_mva"] = inst.base_mva;
  j["shed_cost"] = inst.shed_cost;
  j["ramp_fraction"] = inst.ramp_fraction;
  j["load_damping"] = inst.load_damping;
  j["units"] = nlohmann::json::array();
  for (const auto& u : inst.units) {
    j["units"].push_back({{"name", u.name},
                          {"bus", u.bus},
                          {"pmin", u.pmin},
                          {"pmax", u.pmax},
                          {"no_load", u.no_load},
                          {"marginal", u.marginal},
                          {"startup", u.startup},
                          {"startup_time", u.startup_time},
                          {"min_up", u.min_up},
                          {"min_down", u.min_down},
                          {"inertia", u.inertia},
                          {"initial_on", u.initial_on},
                          {"initial_hours", u.initial_hours}});
  }
  j["scenarios"] = nlohmann::json::array();
  for (const auto& s : inst.scenarios) {
    j["scenarios"].push_back({{"probability", s.probability}, {"demand", s.demand}, {"wind", s.wind}});
  }
  return j;
}

UcInstance load_instance(const std::string& path) { return instance_from_json(read_json_file(path)); }

std::string to_string(StabilityKind k) {
  switch (k) {
    case StabilityKind::kNone:
      return "none";
    case StabilityKind::kDeterministic:
      return "det";
    case StabilityKind::kDro:
      return "dro";
  }
  return "none";
}

StabilityKind stability_kind_from_string(const std::string& s) {
  if (s == "none") return StabilityKind::kNone;
  if (s == "det") return StabilityKind::kDeterministic;
  if (s == "dro") return StabilityKind::kDro;
  throw Error("unknown stability mode '" + s + "'");
}

StabilityMode StabilityMode::deterministic(Eigen::VectorXd k, double g_lim) {
  StabilityMode m;
  m.kind = StabilityKind::kDeterministic;
  m.k = std::move(k);
  m.g_lim = g_lim;
  return m;
}

StabilityMode StabilityMode::dro(SocStabilityConstraint<double> c) {
  StabilityMode m;
  m.kind = StabilityKind::kDro;
  m.g_lim = c.g_lim;
  m.soc = std::move(c);
  return m;
}

namespace {

/// a' X(t) as an affine expression in the model variables.
LinExpr decision_expr(const UcLayout& l, const Eigen::VectorXd& a, int s, int t) {
  const int ng = l.units;
  LinExpr e;
  e.constant = a(0);
  for (int g = 0; g < ng; ++g) {
    if (a(1 + g) != 0.0) e.add(l.u[g][t], a(1 + g));
    if (a(2 + ng + g) != 0.0) e.add(l.z[s][g][t], a(2 + ng + g));
  }
  if (a(1 + ng) != 0.0) e.add(l.w[s][t], a(1 + ng));
  return e;
}

/// Commitment state before the horizon, at step t < 0.
int history_state(const UnitParams& u, int t) { return -t <= u.initial_hours ? u.initial_on : 1 - u.initial_on; }

}  // namespace

UcProblem build_uc(const UcInstance& inst, const GridModel& grid, const StabilityMode& mode) {
  inst.validate();
  const int ng = inst.num_units();
  const int nt = inst.horizon;
  const int ns = static_cast<int>(inst.scenarios.size());
  if (mode.kind != StabilityKind::kNone) {
    if (ng != grid.num_sources()) throw InvalidModelError("every grid source needs exactly one unit");
    for (int g = 0; g < ng; ++g) {
      if (inst.units[g].bus != grid.sources[g].bus) {
        throw InvalidModelError("unit " + inst.units[g].name + " does not sit on the bus of source " +
                                std::to_string(g));
      }
    }
    const int kbar = augmented_size(ng);
    const auto dim = mode.kind == StabilityKind::kDro ? mode.soc->mu.size() : mode.k.size();
    if (dim != kbar) throw InvalidModelError("stability coefficients do not match the unit set");
  }

  UcProblem prob;
  prob.instance = inst;
  prob.mode = mode;
  auto& m = prob.model;
  auto& l = prob.layout;
  l.units = ng;
  l.horizon = nt;
  l.scenarios = ns;
  const double sb = inst.base_mva;

  l.u.assign(ng, std::vector<int>(nt));
  l.v.assign(ng, std::vector<int>(nt));
  for (int g = 0; g < ng; ++g) {
    const auto& unit = inst.units[g];
    l.source_of_unit.push_back(g);
    for (int t = 0; t < nt; ++t) {
      double lo = 0.0, hi = 1.0;
      if (unit.initial_on == 1 && t < unit.min_up - unit.initial_hours) lo = 1.0;
      if (unit.initial_on == 0 && t < unit.min_down - unit.initial_hours) hi = 0.0;
      l.u[g][t] = m.add_var(lo, hi, unit.no_load, unit.name + "_u" + std::to_string(t));
      l.binaries.push_back(l.u[g][t]);
    }
    for (int t = 0; t < nt; ++t) l.v[g][t] = m.add_var(0.0, 1.0, unit.startup, unit.name + "_v" + std::to_string(t));
  }
  l.p.assign(ns, std::vector<std::vector<int>>(ng, std::vector<int>(nt)));
  l.z = l.p;
  l.w.assign(ns, std::vector<int>(nt));
  l.shed = l.w;
  for (int s = 0; s < ns; ++s) {
    const auto& sc = inst.scenarios[s];
    for (int t = 0; t < nt; ++t) {
      for (int g = 0; g < ng; ++g) {
        const auto& unit = inst.units[g];
        l.p[s][g][t] = m.add_var(0.0, unit.pmax / sb, sc.probability * unit.marginal * sb / 1000.0);
      }
      l.w[s][t] = m.add_var(0.0, sc.wind[t] / sb, 0.0);
      l.shed[s][t] = m.add_var(0.0, sc.demand[t] / sb, sc.probability * inst.shed_cost * sb / 1000.0);
      for (int g = 0; g < ng; ++g) l.z[s][g][t] = m.add_var(0.0, sc.wind[t] / sb, 0.0);
    }
  }

  for (int g = 0; g < ng; ++g) {
    const auto& unit = inst.units[g];
    for (int t = 0; t < nt; ++t) {
      // v_t >= u_t - u_{t-1}
      LinExpr st;
      st.add(l.u[g][t], 1.0).add(l.v[g][t], -1.0);
      if (t > 0) {
        st.add(l.u[g][t - 1], -1.0);
      } else {
        st.constant = -unit.initial_on;
      }
      m.add_le(st);
      if (unit.min_up > 1) {
        LinExpr up;
        for (int tau = std::max(0, t - unit.min_up + 1); tau <= t; ++tau) up.add(l.v[g][tau], 1.0);
        up.add(l.u[g][t], -1.0);
        m.add_le(up);
      }
      if (unit.min_down > 1) {
        LinExpr dn;
        for (int tau = std::max(0, t - unit.min_down + 1); tau <= t; ++tau) dn.add(l.v[g][tau], 1.0);
        const int back = t - unit.min_down;
        if (back >= 0) {
          dn.add(l.u[g][back], 1.0);
          dn.constant = -1.0;
        } else {
          dn.constant = history_state(unit, back) - 1.0;
        }
        m.add_le(dn);
      }
    }
  }

  for (int s = 0; s < ns; ++s) {
    const auto& sc = inst.scenarios[s];
    for (int t = 0; t < nt; ++t) {
      LinExpr bal;
      for (int g = 0; g < ng; ++g) bal.add(l.p[s][g][t], 1.0);
      bal.add(l.w[s][t], 1.0).add(l.shed[s][t], 1.0);
      bal.constant = -sc.demand[t] / sb;
      m.add_eq(bal);
      const double wmax = sc.wind[t] / sb;
      for (int g = 0; g < ng; ++g) {
        const auto& unit = inst.units[g];
        m.add_le(LinExpr{{{l.p[s][g][t], 1.0}, {l.u[g][t], -unit.pmax / sb}}, 0.0});
        m.add_le(LinExpr{{{l.p[s][g][t], -1.0}, {l.u[g][t], unit.pmin / sb}}, 0.0});
        if (t > 0) {
          const double ramp = inst.ramp_fraction * unit.pmax / sb;
          m.add_le(LinExpr{{{l.p[s][g][t], 1.0}, {l.p[s][g][t - 1], -1.0}}, -ramp});
          m.add_le(LinExpr{{{l.p[s][g][t], -1.0}, {l.p[s][g][t - 1], 1.0}}, -ramp});
        }
        // z = u w, exact for binary u and 0 <= w <= wmax
        const int zi = l.z[s][g][t];
        m.add_le(LinExpr{{{zi, 1.0}, {l.u[g][t], -wmax}}, 0.0});
        m.add_le(LinExpr{{{zi, 1.0}, {l.w[s][t], -1.0}}, 0.0});
        m.add_le(LinExpr{{{zi, -1.0}, {l.w[s][t], 1.0}, {l.u[g][t], wmax}}, -wmax});
      }

      if (mode.kind == StabilityKind::kNone) continue;
      const bool linear = mode.kind == StabilityKind::kDeterministic;
      const Eigen::MatrixXd f = linear ? Eigen::MatrixXd() : mode.soc->factor_rows();
      if (linear || f.rows() == 0) {
        // g_lim - K' X <= 0
        const Eigen::VectorXd& coef = linear ? mode.k : mode.soc->mu;
        LinExpr e = decision_expr(l, -coef, s, t);
        e.constant += mode.g_lim;
        m.add_le(e);
      } else {
        const double k = mode.soc->k();
        LinExpr rhs = decision_expr(l, mode.soc->mu / k, s, t);
        rhs.constant -= mode.g_lim / k;
        std::vector<LinExpr> rows;
        for (Eigen::Index r = 0; r < f.rows(); ++r) rows.push_back(decision_expr(l, f.row(r).transpose(), s, t));
        m.add_cone(rhs, rows);
      }
    }
  }
  return prob;
}

Eigen::VectorXd step_decision(const UcLayout& l, const std::vector<double>& x, int s, int t) {
  const int ng = l.units;
  Eigen::VectorXd d(2 * ng + 2);
  d(0) = 1.0;
  for (int g = 0; g < ng; ++g) {
    d(1 + g) = x[l.u[g][t]];
    d(2 + ng + g) = x[l.z[s][g][t]];
  }
  d(1 + ng) = x[l.w[s][t]];
  return d;
}

namespace {

Schedule make_schedule(const UcProblem& prob, const std::vector<double>& x, double objective) {
  const auto& l = prob.layout;
  const double sb = prob.instance.base_mva;
  Schedule sc;
  sc.horizon = l.horizon;
  sc.units = l.units;
  sc.scenarios = l.scenarios;
  sc.commitment.assign(l.units, std::vector<int>(l.horizon));
  for (int g = 0; g < l.units; ++g) {
    for (int t = 0; t < l.horizon; ++t) sc.commitment[g][t] = x[l.u[g][t]] > 0.5 ? 1 : 0;
  }
  sc.dispatch.assign(l.scenarios, std::vector<std::vector<double>>(l.units, std::vector<double>(l.horizon)));
  sc.wind.assign(l.scenarios, std::vector<double>(l.horizon));
  sc.shed = sc.wind;
  sc.margin = sc.wind;
  sc.decisions.assign(l.scenarios, std::vector<Eigen::VectorXd>(l.horizon));
  for (int s = 0; s < l.scenarios; ++s) {
    for (int t = 0; t < l.horizon; ++t) {
      for (int g = 0; g < l.units; ++g) sc.dispatch[s][g][t] = x[l.p[s][g][t]] * sb;
      sc.wind[s][t] = x[l.w[s][t]] * sb;
      sc.shed[s][t] = x[l.shed[s][t]] * sb;
      // decisions rebuilt from the rounded flags so the product entries are exact
      Eigen::VectorXd d = step_decision(l, x, s, t);
      for (int g = 0; g < l.units; ++g) {
        sc.max_product_error = std::max(sc.max_product_error, std::abs(d(2 + l.units + g) - x[l.u[g][t]] * d(1 + l.units)));
        d(1 + g) = sc.commitment[g][t];
        d(2 + l.units + g) = sc.commitment[g][t] * d(1 + l.units);
      }
      sc.decisions[s][t] = d;
      const auto& mode = prob.mode;
      switch (mode.kind) {
        case StabilityKind::kNone:
          sc.margin[s][t] = std::numeric_limits<double>::quiet_NaN();
          break;
        case StabilityKind::kDeterministic:
          sc.margin[s][t] = mode.k.dot(d) - mode.g_lim;
          break;
        case StabilityKind::kDro: {
          const auto ev = evaluate_soc(*mode.soc, d);
          sc.margin[s][t] = mode.soc->mu.dot(d) - mode.g_lim - mode.soc->k() * ev.lhs;
          break;
        }
      }
    }
  }
  sc.cost = objective;
  sc.cost_per_hour = objective / l.horizon;
  return sc;
}

bool usable(ConicStatus s) { return s == ConicStatus::kOptimal || s == ConicStatus::kInaccurate; }

}  // namespace

std::optional<Schedule> solve_fixed_commitment(const UcProblem& prob, const std::vector<std::vector<int>>& commitment,
                                               const ConicOptions& ipm) {
  auto lo = prob.model.lower;
  auto hi = prob.model.upper;
  const auto& l = prob.layout;
  for (int g = 0; g < l.units; ++g) {
    for (int t = 0; t < l.horizon; ++t) {
      const int var = l.u[g][t];
      const double val = commitment.at(g).at(t);
      if (val < lo[var] || val > hi[var]) return std::nullopt;
      lo[var] = hi[var] = val;
    }
  }
  const auto sol = solve_model(prob.model, lo, hi, ipm);
  if (!usable(sol.status)) return std::nullopt;
  auto sc = make_schedule(prob, sol.x, sol.objective);
  sc.stats.inaccurate_solves = sol.status == ConicStatus::kInaccurate ? 1 : 0;
  return sc;
}

Schedule solve_uc(const UcProblem& prob, const BnbOptions& opt) {
  const auto& l = prob.layout;
  const auto& bins = l.binaries;
  const int nb = static_cast<int>(bins.size());

  struct Node {
    double bound;
    long id;
    std::vector<signed char> fix;  // -1 free, 0, 1
  };
  auto worse = [](const Node& a, const Node& b) { return a.bound > b.bound || (a.bound == b.bound && a.id > b.id); };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

  std::optional<Schedule> best;
  BnbStats stats;
  auto commitment_of = [&](const std::vector<double>& x) {
    std::vector<std::vector<int>> c(l.units, std::vector<int>(l.horizon));
    for (int g = 0; g < l.units; ++g) {
      for (int t = 0; t < l.horizon; ++t) c[g][t] = x[l.u[g][t]] > 0.5 ? 1 : 0;
    }
    return c;
  };
  auto offer = [&](const std::vector<std::vector<int>>& c) {
    auto cand = solve_fixed_commitment(prob, c, opt.ipm);
    if (!cand) return;
    stats.inaccurate_solves += cand->stats.inaccurate_solves;
    if (!best || cand->cost < best->cost) best = std::move(cand);
  };
  auto cutoff = [&]() {
    return best ? best->cost - opt.gap * std::max(1.0, std::abs(best->cost)) : std::numeric_limits<double>::infinity();
  };

  // All units on, wherever the bounds allow.
  {
    std::vector<std::vector<int>> all_on(l.units, std::vector<int>(l.horizon));
    for (int g = 0; g < l.units; ++g) {
      for (int t = 0; t < l.horizon; ++t) all_on[g][t] = prob.model.upper[l.u[g][t]] > 0.5 ? 1 : 0;
    }
    offer(all_on);
  }

  long next_id = 0;
  open.push({-std::numeric_limits<double>::infinity(), next_id++, std::vector<signed char>(nb, -1)});
  bool root = true;
  double best_open_bound = std::numeric_limits<double>::infinity();
  while (!open.empty()) {
    if (stats.nodes >= opt.node_limit) {
      stats.node_limit_hit = true;
      best_open_bound = open.top().bound;
      break;
    }
    Node node = open.top();
    open.pop();
    if (node.bound >= cutoff()) continue;
    ++stats.nodes;
    auto lo = prob.model.lower;
    auto hi = prob.model.upper;
    bool conflict = false;
    for (int i = 0; i < nb; ++i) {
      if (node.fix[i] < 0) continue;
      const double val = node.fix[i];
      if (val < lo[bins[i]] || val > hi[bins[i]]) conflict = true;
      lo[bins[i]] = hi[bins[i]] = val;
    }
    if (conflict) continue;
    const auto sol = solve_model(prob.model, lo, hi, opt.ipm);
    if (sol.status == ConicStatus::kInaccurate) ++stats.inaccurate_solves;
    if (sol.status == ConicStatus::kPrimalInfeasible) {
      if (root) throw InfeasibleError("unit commitment relaxation is infeasible", {});
      continue;
    }
    if (!usable(sol.status)) {
      // No bound from this node: keep the parent's and split on the first free binary.
      ++stats.failed_solves;
      if (root) stats.root_bound = -std::numeric_limits<double>::infinity();
      root = false;
      const auto free = std::find(node.fix.begin(), node.fix.end(), static_cast<signed char>(-1));
      if (free == node.fix.end()) {
        std::vector<std::vector<int>> c(l.units, std::vector<int>(l.horizon));
        for (int i = 0; i < nb; ++i) c[i / l.horizon][i % l.horizon] = node.fix[i];
        offer(c);
        continue;
      }
      for (signed char val : {static_cast<signed char>(0), static_cast<signed char>(1)}) {
        Node child{node.bound, next_id++, node.fix};
        child.fix[free - node.fix.begin()] = val;
        open.push(std::move(child));
      }
      continue;
    }
    if (root) {
      stats.root_bound = sol.objective;
      root = false;
    }
    if (sol.objective >= cutoff()) continue;
    int branch = -1;
    double frac_best = 1e-6;
    for (int i = 0; i < nb; ++i) {
      const double v = sol.x[bins[i]];
      const double frac = std::min(v, 1.0 - v);
      if (frac > frac_best) {
        frac_best = frac;
        branch = i;
      }
    }
    if (branch < 0) {
      offer(commitment_of(sol.x));
      continue;
    }
    for (signed char val : {static_cast<signed char>(0), static_cast<signed char>(1)}) {
      Node child{sol.objective, next_id++, node.fix};
      child.fix[branch] = val;
      open.push(std::move(child));
    }
  }
  if (!best) throw InfeasibleError("unit commitment is infeasible", {});
  Schedule out = std::move(*best);
  const double bound = stats.node_limit_hit ? std::min(best_open_bound, out.cost) : out.cost;
  stats.best_bound = bound;
  stats.gap = (out.cost - bound) / std::max(1.0, std::abs(out.cost));
  out.stats = stats;
  return out;
}

Schedule solve_uc_enumeration(const UcProblem& prob, const ConicOptions& ipm) {
  const auto& l = prob.layout;
  const int nb = l.units * l.horizon;
  if (nb > 24) throw Error("enumeration limited to 24 binaries");
  std::optional<Schedule> best;
  long count = 0;
  for (long code = 0; code < (1L << nb); ++code) {
    std::vector<std::vector<int>> c(l.units, std::vector<int>(l.horizon));
    for (int g = 0; g < l.units; ++g) {
      for (int t = 0; t < l.horizon; ++t) c[g][t] = static_cast<int>((code >> (g * l.horizon + t)) & 1L);
    }
    auto cand = solve_fixed_commitment(prob, c, ipm);
    ++count;
    if (cand && (!best || cand->cost < best->cost)) best = std::move(cand);
  }
  if (!best) throw InfeasibleError("unit commitment is infeasible", {});
  best->stats.nodes = count;
  return *best;
}

ScheduleEvaluation evaluate_schedule(const Schedule& sched, const UcInstance& inst, const GridModel& grid,
                                     const std::vector<double>& reactances, double g_lim) {
  ScheduleEvaluation out;
  int violations = 0;
  for (int s = 0; s < sched.scenarios; ++s) {
    for (int t = 0; t < sched.horizon; ++t) {
      StepEvaluation st;
      st.scenario = s;
      st.step = t;
      std::vector<int> commitment(grid.num_sources());
      for (int g = 0; g < grid.num_sources(); ++g) commitment[g] = sched.commitment.at(g).at(t);
      OperatingPoint op{commitment, reactances, split_wind(grid, sched.wind[s][t] / inst.base_mva)};
      if (!(sched.wind[s][t] > 1e-9)) {
        // no GFL output: the index is unbounded
        st.index = std::numeric_limits<double>::infinity();
        out.steps.push_back(st);
        continue;
      }
      try {
        st.index = evaluate_index(grid, op).value;
        st.violated = st.index < g_lim;
      } catch (const ReductionSingularError& e) {
        st.index = std::numeric_limits<double>::quiet_NaN();
        st.violated = true;
        st.reason = e.what();
      }
      violations += st.violated ? 1 : 0;
      out.steps.push_back(st);
    }
  }
  out.violation_rate = out.steps.empty() ? 0.0 : static_cast<double>(violations) / out.steps.size();
  return out;
}

}  // namespace stabdro
