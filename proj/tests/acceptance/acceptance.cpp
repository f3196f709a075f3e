// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed below.

#include <CLI11.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "stabdro/dro.hpp"
#include "stabdro/mc.hpp"
#include "stabdro/network_io.hpp"
#include "stabdro/pipeline.hpp"
#include "stabdro/regression.hpp"
#include "stabdro/sensitivity.hpp"
#include "stabdro/uc.hpp"

using namespace stabdro;

namespace tol {
constexpr double kMapeMu = 10.0;  // percent
constexpr double kMapeVar = 12.0;
constexpr int kFidelitySamples = 15000;
constexpr int kSweepSamples = 2000;
constexpr double kIndexGradRel = 1e-5;
constexpr int kIndexGradConfigs = 100;
constexpr double kRetrainRel = 1e-3;
constexpr double kQpObjectiveGap = 1e-7;
constexpr double kKktResidual = 1e-7;
constexpr int kQpProblems = 50;
constexpr int kSocDraws = 50000;
constexpr double kEta = 0.8;
constexpr double kUcCostRel = 1e-6;
constexpr double kKetaUlps = 4.0;
}  // namespace tol

namespace {

std::string data_path(const std::string& name) { return std::string(STABDRO_DATA_DIR) + "/" + name; }

constexpr double kGlim = 3.0;
constexpr double kNu = 2.0;

PipelineSettings desk_settings() {
  PipelineSettings st;
  st.policy.min_online = 1;
  st.regression.g_lim = kGlim;
  st.regression.nu = kNu;
  return st;
}

std::vector<int> all_sources(const GridModel& g) {
  std::vector<int> s(g.num_sources());
  for (int i = 0; i < g.num_sources(); ++i) s[i] = i;
  return s;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double kkt_residual(const CoefficientFit& fit) {
  return std::max({fit.stationarity, std::max(0.0, fit.max_violation), fit.complementarity});
}

// 1

Outcome delta_method_fidelity(int threads) {
  const auto grid = load_grid(data_path("desk_network.json"));
  const auto pl = make_pipeline(grid, desk_settings(), all_sources(grid));
  const auto spec = UncertainParameterSpec::from_cv(grid, pl.sources, 0.05);
  const auto analytic = analytic_moments(pl, spec).moments;
  McConfig cfg;
  cfg.samples = tol::kFidelitySamples;
  cfg.seed = 1;
  cfg.threads = threads;
  const auto mc = mc_moments(pl, spec, cfg);
  const auto m = mape(analytic, mc);
  const bool pass = mc.valid && m.mape_mu <= tol::kMapeMu && m.mape_var <= tol::kMapeVar;
  return {pass, fmt("%d buses, %d uncertain reactances, CV 5%%, %d draws (%d dropped): MAPE_mu %.3f%% (<= %g), "
                    "MAPE_var %.3f%% (<= %g), %zu/%zu excluded",
                    grid.num_buses(), spec.size(), mc.requested, mc.dropped, m.mape_mu, tol::kMapeMu, m.mape_var,
                    tol::kMapeVar, m.excluded_mu.size(), m.excluded_var.size())};
}

// 2

Outcome cv_trend(int threads) {
  const auto grid = load_grid(data_path("desk_network.json"));
  const auto pl = make_pipeline(grid, desk_settings(), all_sources(grid));
  McConfig cfg;
  cfg.samples = tol::kSweepSamples;
  cfg.threads = threads;
  const auto rows = cv_sweep(pl, cfg);
  bool pass = true;
  std::string trail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].mape.mape_mu < rows[i - 1].mape.mape_mu) pass = false;
    pass = pass && rows[i].mc.valid;
    trail += fmt("%s%.0f%%: %.3f%%", i ? ", " : "", rows[i].cv * 100, rows[i].mape.mape_mu);
  }
  return {pass, "MAPE_mu " + trail + fmt(" (N = %d per point)", cfg.samples)};
}

// 3

Outcome gradient_oracles() {
  const auto grid = load_grid(data_path("desk_network.json"));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double cap = grid.total_gfl_capacity();
  int configs = 0, compared = 0, fallbacks = 0, attempts = 0;
  double worst = 0.0;
  while (configs < tol::kIndexGradConfigs && attempts < 100 * tol::kIndexGradConfigs) {
    ++attempts;
    OperatingPoint op;
    for (int g = 0; g < grid.num_sources(); ++g) {
      op.commitment.push_back(u01(rng) < 0.7 ? 1 : 0);
      op.reactances.push_back(grid.sources[g].reactance * (0.7 + 0.6 * u01(rng)));
    }
    op.gfl_power = split_wind(grid, cap * (0.05 + 0.95 * u01(rng)));
    try {
      evaluate_index(grid, op);
    } catch (const ReductionSingularError&) {
      continue;
    }
    ++configs;
    for (int g = 0; g < grid.num_sources(); ++g) {
      if (!op.commitment[g]) continue;
      const auto d = dg_dp(grid, op, g);
      if (d.finite_difference) {
        ++fallbacks;
        continue;
      }
      // Richardson-extrapolated central difference of the forward map.
      auto at = [&](double h) {
        auto shifted = op;
        shifted.reactances[g] += h;
        return evaluate_index(grid, shifted).value;
      };
      const double h = 1e-3 * op.reactances[g];
      const double d1 = (at(h) - at(-h)) / (2 * h);
      const double d2 = (at(h / 2) - at(-h / 2)) / h;
      const double fd = (4 * d2 - d1) / 3;
      worst = std::max(worst, std::abs(d.value - fd) / std::max(std::abs(fd), 1e-12));
      ++compared;
    }
  }
  bool pass = configs == tol::kIndexGradConfigs && fallbacks == 0 && worst <= tol::kIndexGradRel;
  std::string detail = fmt("dg/dX: %d configurations, %d derivatives, max rel err %.2e (<= %g), %d fallbacks", configs,
                           compared, worst, tol::kIndexGradRel, fallbacks);

  // dK/dg against refits with one label moved. A tight big-M on the desk
  // network leaves one constraint row strictly active. Columns below 1e-6 of
  // the Jacobian's largest entry sit at the refit noise level and are checked
  // against that scale instead of their own size.
  struct FitCase {
    const char* net;
    std::optional<double> big_m;
  };
  double worst_k = 0.0, worst_small = 0.0;
  int columns = 0, small_columns = 0, unstable = 0, active_total = 0;
  for (const auto& fc : {FitCase{"desk_network.json", {}}, FitCase{"small_network.json", {}},
                         FitCase{"desk_network.json", 5.0}}) {
    const auto g = load_grid(data_path(fc.net));
    auto st = desk_settings();
    st.regression.big_m = fc.big_m;
    const auto pl = make_pipeline(g, st, all_sources(g));
    const Eigen::VectorXd labels = pl.data.labels();
    const auto fit = fit_smooth(pl.design, labels, pl.cfg);
    active_total += static_cast<int>(fit.active.size());
    const auto jac = dk_dg(fit, pl.design, labels, pl.cfg);
    const double jac_scale = jac.dk_dg.cwiseAbs().maxCoeff();
    auto rows_of = [](const CoefficientFit& f) {
      std::set<int> r;
      for (const auto& a : f.active) r.insert(a.row);
      return r;
    };
    const auto active_rows = rows_of(fit);
    const int stride = std::max(1, static_cast<int>(labels.size()) / 60);
    for (int w = 0; w < labels.size(); w += stride) {
      bool stable = true;
      auto diff = [&](double h) {
        Eigen::VectorXd plus = labels, minus = labels;
        plus(w) += h;
        minus(w) -= h;
        const auto fp = fit_smooth(pl.design, plus, pl.cfg);
        const auto fm = fit_smooth(pl.design, minus, pl.cfg);
        stable = stable && rows_of(fp) == active_rows && rows_of(fm) == active_rows;
        return Eigen::VectorXd((fp.coefficients - fm.coefficients) / (2 * h));
      };
      const double h = 1e-3 * std::max(1.0, std::abs(labels(w)));
      const Eigen::VectorXd fd = (4 * diff(h / 2) - diff(h)) / 3;
      if (!stable) {
        ++unstable;
        continue;
      }
      const double err = (jac.dk_dg.col(w) - fd).cwiseAbs().maxCoeff();
      const double size = fd.cwiseAbs().maxCoeff();
      if (size >= 1e-6 * jac_scale) {
        worst_k = std::max(worst_k, err / size);
        ++columns;
      } else {
        worst_small = std::max(worst_small, err / jac_scale);
        ++small_columns;
      }
    }
  }
  pass = pass && columns > 0 && active_total > 0 && worst_k <= tol::kRetrainRel && worst_small <= tol::kRetrainRel;
  detail += fmt("; dK/dg: %d label columns over 3 fits (%d active rows), max rel err %.2e (<= %g); "
                "%d near-zero columns, max err %.2e of the Jacobian scale; %d skipped for active-set change",
                columns, active_total, worst_k, tol::kRetrainRel, small_columns, worst_small, unstable);
  return {pass, detail};
}

// 4

/// Global optimum of a strictly convex QP by trying every working set: the
/// minimizer on each face that is feasible; the best of those is the optimum.
double enumerate_qp(const QpProblem<double>& qp) {
  const auto n = qp.H.rows();
  const auto m = qp.A.rows();
  double best = std::numeric_limits<double>::infinity();
  for (long mask = 0; mask < (1L << m); ++mask) {
    std::vector<int> rows;
    for (int i = 0; i < m; ++i) {
      if (mask >> i & 1) rows.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(rows.size());
    if (k > n) continue;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs(n + k);
    kkt.topLeftCorner(n, n) = qp.H;
    rhs.head(n) = -qp.f;
    for (Eigen::Index r = 0; r < k; ++r) {
      kkt.block(0, n + r, n, 1) = qp.A.row(rows[r]).transpose();
      kkt.block(n + r, 0, 1, n) = qp.A.row(rows[r]);
      rhs(n + r) = qp.b(rows[r]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd x = lu.solve(rhs).head(n);
    if ((qp.A * x - qp.b).maxCoeff() > 1e-9) continue;
    best = std::min(best, 0.5 * x.dot(qp.H * x) + qp.f.dot(x));
  }
  return best;
}

Outcome qp_correctness() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst_gap = 0.0, worst_kkt = 0.0;
  int solved = 0;
  for (int trial = 0; trial < tol::kQpProblems; ++trial) {
    constexpr int n = 5, m = 8;
    QpProblem<double> qp;
    Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng); });
    qp.H = b.transpose() * b + 0.1 * Eigen::MatrixXd::Identity(n, n);
    qp.f = Eigen::VectorXd::NullaryExpr(n, [&] { return 3.0 * normal(rng); });
    qp.A = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return normal(rng); });
    const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
    qp.b = qp.A * x0 + Eigen::VectorXd::NullaryExpr(m, [&] { return u01(rng); });
    const auto sol = solve_qp(qp);
    const double ref = enumerate_qp(qp);
    worst_gap = std::max(worst_gap, std::abs(sol.objective - ref) / std::max(1.0, std::abs(ref)));
    const Eigen::VectorXd slack = qp.b - qp.A * sol.x;
    const double comp = (sol.multipliers.array() * slack.array()).abs().maxCoeff();
    const double kkt = std::max({sol.stationarity, std::max(0.0, -slack.minCoeff()), comp,
                                 std::max(0.0, -sol.multipliers.minCoeff())});
    worst_kkt = std::max(worst_kkt, kkt);
    ++solved;
  }

  // Regression fits on the bundled networks.
  double worst_fit = 0.0;
  int fits = 0;
  for (const char* net : {"desk_network.json", "small_network.json"}) {
    const auto g = load_grid(data_path(net));
    const auto pl = make_pipeline(g, desk_settings(), all_sources(g));
    worst_fit = std::max(worst_fit, kkt_residual(fit_smooth(pl.design, pl.data.labels(), pl.cfg)));
    auto sharp = pl.cfg;
    sharp.sharp = true;
    worst_fit = std::max(worst_fit, kkt_residual(fit_smooth(pl.design, pl.data.labels(), sharp)));
    const auto nu = choose_nu(pl.data, kGlim);
    worst_fit = std::max(worst_fit, kkt_residual(fit_hard(pl.data, partition(pl.data.labels(), kGlim, nu.nu))));
    fits += 3;
  }
  const bool pass = solved == tol::kQpProblems && worst_gap <= tol::kQpObjectiveGap &&
                    worst_kkt <= tol::kKktResidual && worst_fit <= tol::kKktResidual;
  return {pass, fmt("%d random 5-variable QPs: max objective gap %.2e (<= %g), max KKT residual %.2e; "
                    "%d regression fits: max KKT residual %.2e (<= %g)",
                    solved, worst_gap, tol::kQpObjectiveGap, worst_kkt, fits, worst_fit, tol::kKktResidual)};
}

// 5

GridModel random_grid(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  GridModel g;
  const int n = 5 + static_cast<int>(4 * u01(rng));
  for (int i = 1; i <= n; ++i) g.buses.push_back(i);
  for (int i = 2; i <= n; ++i) {
    const int j = 1 + static_cast<int>((i - 1) * u01(rng));
    g.branches.push_back({j, i, 0.05 + 0.2 * u01(rng)});
  }
  for (int e = 0; e < n / 2; ++e) {
    const int a = 1 + static_cast<int>(n * u01(rng));
    const int b = 1 + static_cast<int>(n * u01(rng));
    if (a != b) g.branches.push_back({a, b, 0.05 + 0.2 * u01(rng)});
  }
  std::vector<int> order(g.buses);
  std::shuffle(order.begin(), order.end(), rng);
  const int nsrc = 2 + static_cast<int>(2 * u01(rng));
  const int ngfl = 1 + static_cast<int>(2 * u01(rng));
  for (int s = 0; s < nsrc; ++s) {
    const auto kind = s + 1 == nsrc ? SourceKind::kGridForming : SourceKind::kSynchronous;
    g.sources.push_back({order[s], 0.15 + 0.25 * u01(rng), kind, "S" + std::to_string(s + 1)});
  }
  for (int c = 0; c < ngfl; ++c) g.gfl.push_back({order[nsrc + c], 1.0, 0.5 + u01(rng), "W" + std::to_string(c + 1)});
  g.validate();
  return g;
}

Outcome hard_fit_conservative() {
  std::vector<std::pair<std::string, GridModel>> nets{
      {"desk", load_grid(data_path("desk_network.json"))},
      {"small", load_grid(data_path("small_network.json"))},
  };
  std::mt19937_64 rng(5);
  for (int i = 0; i < 8; ++i) nets.emplace_back("random" + std::to_string(i + 1), random_grid(rng));
  int datasets = 0, wrong_low = 0, wrong_high = 0, band_miss = 0, samples = 0;
  std::string failures;
  for (const auto& [name, grid] : nets) {
    CommitmentPolicy policy;
    policy.min_online = 1;
    const auto data = generate_dataset(grid, 12, policy);
    if (data.size() == 0) continue;
    const Eigen::VectorXd labels = data.labels();
    std::vector<double> sorted(labels.data(), labels.data() + labels.size());
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.3, 0.5}) {
      const double g_lim = sorted[static_cast<std::size_t>(q * (sorted.size() - 1))];
      try {
        const auto nu = choose_nu(data, g_lim);
        const auto part = partition(labels, g_lim, nu.nu);
        const auto fit = fit_hard(data, part);
        const Eigen::VectorXd pred = data.design() * fit.coefficients;
        for (int i : part.below) wrong_low += pred(i) >= g_lim ? 1 : 0;
        for (int i : part.above) wrong_high += pred(i) < g_lim ? 1 : 0;
        for (int i : part.boundary) band_miss += (pred(i) >= g_lim) != (labels(i) >= g_lim) ? 1 : 0;
        samples += data.size();
        ++datasets;
      } catch (const Error& e) {
        failures += " " + name + ": " + e.what() + ";";
      }
    }
  }
  const bool pass = datasets > 0 && wrong_low == 0 && wrong_high == 0 && failures.empty();
  return {pass, fmt("%d datasets (%d samples): %d unstable and %d stable samples misclassified, "
                    "%d band samples on the other side",
                    datasets, samples, wrong_low, wrong_high, band_miss) +
                    (failures.empty() ? "" : ";" + failures)};
}

// 6

Outcome soc_guarantee() {
  const auto grid = load_grid(data_path("desk_network.json"));
  const auto pl = make_pipeline(grid, desk_settings(), all_sources(grid));
  const auto spec = UncertainParameterSpec::from_cv(grid, pl.sources, 0.05);
  const auto m = analytic_moments(pl, spec).moments;
  const auto soc = make_soc_constraint<double>(m.mu, m.sigma, kGlim, tol::kEta);

  // Accepted decisions pushed onto the cone boundary: for each commitment,
  // the wind level at which the constraint becomes tight, when it exists.
  std::vector<Eigen::VectorXd> accepted;
  const int ns = grid.num_sources();
  const double cap = grid.total_gfl_capacity();
  for (int mask = 1; mask < (1 << ns); ++mask) {
    std::vector<int> u(ns);
    for (int g = 0; g < ns; ++g) u[g] = mask >> g & 1;
    auto margin = [&](double w) { return evaluate_soc(soc, make_augmented(u, w)).margin; };
    double lo = 1e-3 * cap, hi = 2.0 * cap;
    if (margin(lo) < 0) continue;
    if (margin(hi) >= 0) {
      accepted.push_back(make_augmented(u, hi));
      continue;
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (margin(mid) >= 0 ? lo : hi) = mid;
    }
    accepted.push_back(make_augmented(u, lo));
  }

  const Eigen::MatrixXd factor = soc.q * soc.tau.cwiseSqrt().asDiagonal();
  const auto nk = static_cast<Eigen::Index>(m.mu.size());
  struct Dist {
    const char* name;
    std::function<double(std::mt19937_64&)> z;  // zero mean, unit variance
  };
  const Dist dists[] = {
      {"gaussian", [](std::mt19937_64& r) { return std::normal_distribution<double>()(r); }},
      {"uniform", [](std::mt19937_64& r) { return std::uniform_real_distribution<double>(-std::sqrt(3.0), std::sqrt(3.0))(r); }},
      {"two-point", [](std::mt19937_64& r) { return std::bernoulli_distribution(0.5)(r) ? 1.0 : -1.0; }},
  };
  const double allowed = 1.0 - tol::kEta;
  bool pass = !accepted.empty();
  std::string detail = fmt("%zu accepted decisions on the cone boundary, %d draws each:", accepted.size(), tol::kSocDraws);
  std::uint64_t seed = 6;
  for (const auto& d : dists) {
    std::mt19937_64 rng(seed++);
    std::vector<long> hits(accepted.size(), 0);
    Eigen::VectorXd z(nk);
    for (int s = 0; s < tol::kSocDraws; ++s) {
      for (Eigen::Index i = 0; i < nk; ++i) z(i) = d.z(rng);
      const Eigen::VectorXd k = m.mu + factor * z;
      for (std::size_t a = 0; a < accepted.size(); ++a) hits[a] += k.dot(accepted[a]) < kGlim ? 1 : 0;
    }
    double worst = 0.0, worst_bound = 0.0;
    for (long h : hits) {
      const double p = static_cast<double>(h) / tol::kSocDraws;
      const double bound = allowed + 3.0 * std::sqrt(p * (1 - p) / tol::kSocDraws);
      if (p > bound) pass = false;
      if (p >= worst) {
        worst = p;
        worst_bound = bound;
      }
    }
    detail += fmt(" %s max %.4f (bound %.4f);", d.name, worst, worst_bound);
  }
  detail.pop_back();
  return {pass, detail};
}

// 7

Outcome uc_exactness() {
  const auto grid = load_grid(data_path("small_network.json"));
  const auto pl = make_pipeline(grid, desk_settings(), all_sources(grid));
  const auto spec = UncertainParameterSpec::from_cv(grid, pl.sources, 0.05);
  const auto am = analytic_moments(pl, spec);
  const Eigen::VectorXd k = am.fit.coefficients;
  const auto soc = make_soc_constraint<double>(am.moments.mu, am.moments.sigma, kGlim, tol::kEta);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int instances = 0, solves = 0, mismatches = 0;
  double worst = 0.0;
  bool bitwise = true;
  for (int trial = 0; trial < 12; ++trial) {
    const int horizon = 1 + trial % 4;
    UcInstance inst;
    inst.horizon = horizon;
    double cap = 0.0;
    for (int g = 0; g < grid.num_sources(); ++g) {
      UnitParams p;
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
    UcScenario sc;
    for (int t = 0; t < horizon; ++t) {
      sc.demand.push_back(cap * (0.3 + 0.5 * u01(rng)));
      sc.wind.push_back(200.0 * u01(rng));
    }
    inst.scenarios.push_back(sc);
    ++instances;
    for (const auto& mode : {StabilityMode::none(), StabilityMode::deterministic(k, kGlim), StabilityMode::dro(soc)}) {
      const auto prob = build_uc(inst, grid, mode);
      double bnb = std::numeric_limits<double>::infinity(), ref = bnb;
      try {
        bnb = solve_uc(prob).cost;
      } catch (const InfeasibleError&) {
      }
      try {
        ref = solve_uc_enumeration(prob).cost;
      } catch (const InfeasibleError&) {
      }
      ++solves;
      if (std::isinf(bnb) != std::isinf(ref)) {
        ++mismatches;
        continue;
      }
      if (std::isinf(bnb)) continue;
      const double rel = std::abs(bnb - ref) / std::max(1.0, std::abs(ref));
      worst = std::max(worst, rel);
      if (rel > tol::kUcCostRel) ++mismatches;
    }
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(k.size(), k.size());
    try {
      const auto det = solve_uc(build_uc(inst, grid, StabilityMode::deterministic(k, kGlim)));
      const auto dro =
          solve_uc(build_uc(inst, grid, StabilityMode::dro(make_soc_constraint<double>(k, zero, kGlim, tol::kEta))));
      bitwise = bitwise && det.cost == dro.cost && det.commitment == dro.commitment && det.dispatch == dro.dispatch &&
                det.wind == dro.wind && det.shed == dro.shed;
    } catch (const InfeasibleError&) {
    }
  }
  const bool pass = mismatches == 0 && worst <= tol::kUcCostRel && bitwise;
  return {pass, fmt("%d instances (3 units, T 1-4) x 3 modes: %d mismatches, max rel cost gap %.2e (<= %g); "
                    "dro with zero covariance %s deterministic",
                    instances, mismatches, worst, tol::kUcCostRel, bitwise ? "bitwise equals" : "DIFFERS from")};
}

// 8

Outcome case_study(int threads) {
  const auto grid = load_grid(data_path("desk_network.json"));
  const auto inst = load_instance(data_path("uc_weak_grid.json"));
  const auto pl = make_pipeline(grid, desk_settings(), all_sources(grid));
  const auto spec = UncertainParameterSpec::from_cv(grid, pl.sources, 0.05);
  const auto am = analytic_moments(pl, spec);
  const Eigen::VectorXd k = am.fit.coefficients;
  const auto soc = make_soc_constraint<double>(am.moments.mu, am.moments.sigma, kGlim, tol::kEta);
  constexpr int draws = 2000;
  constexpr std::uint64_t seed = 8;

  const auto none = solve_uc(build_uc(inst, grid, StabilityMode::none()));
  const auto det = solve_uc(build_uc(inst, grid, StabilityMode::deterministic(k, kGlim)));
  const auto dro = solve_uc(build_uc(inst, grid, StabilityMode::dro(soc)));
  const auto v_none = violation_rate(none, inst, grid, spec, kGlim, draws, seed, threads);
  const auto v_det = violation_rate(det, inst, grid, spec, kGlim, draws, seed, threads);
  const auto v_dro = violation_rate(dro, inst, grid, spec, kGlim, draws, seed, threads);

  std::vector<double> margins;
  for (int i = 0; i <= 40; ++i) margins.push_back(0.01 * i);
  const auto mb = fixed_margin_baseline(inst, grid, k, kGlim, margins, spec, draws, seed, {}, threads);
  const double allowed = 1.0 - tol::kEta;
  bool pass = none.cost <= det.cost && det.cost <= dro.cost && v_dro.rate <= allowed && v_det.rate > allowed &&
              mb.first_zero_violation.has_value();
  std::string detail = fmt("cost none/det/dro %.3f/%.3f/%.3f k£, violation rate %.3f/%.3f/%.3f (limit %.2f)",
                           none.cost, det.cost, dro.cost, v_none.rate, v_det.rate, v_dro.rate, allowed);
  if (mb.first_zero_violation) {
    const auto& row = mb.rows[*mb.first_zero_violation];
    pass = pass && dro.cost <= row.cost;
    detail += fmt("; smallest zero-violation fixed margin %.0f%% costs %.3f k£ vs dro %.3f", row.margin * 100,
                  row.cost, dro.cost);
  } else {
    detail += "; no fixed margin up to 40% reached zero violations";
  }
  return {pass, detail};
}

// 9

Outcome k_eta_table() {
  const double eps = std::numeric_limits<double>::epsilon();
  struct Row {
    double eta;
    bool symmetric;
    double expect;
  };
  const Row rows[] = {{0.5, false, 1.0}, {0.9, false, 3.0}, {0.875, true, 2.0}};
  bool pass = true;
  std::string detail;
  for (const auto& r : rows) {
    const double k = k_eta(r.eta, r.symmetric);
    const double ulps = std::abs(k - r.expect) / (eps * r.expect);
    pass = pass && ulps <= tol::kKetaUlps;
    detail += fmt("%sk%s(%g) = %.17g (%.1f ulp)", detail.empty() ? "" : ", ", r.symmetric ? "_sym" : "", r.eta, k,
                  ulps);
  }
  return {pass, detail + fmt(" (<= %g ulp)", tol::kKetaUlps)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  int threads = 0;
  std::vector<int> only;
  app.add_option("--threads", threads, "Worker cap for Monte Carlo work (0: all cores)");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "delta-method fidelity", [&] { return delta_method_fidelity(threads); }},
      {2, "CV degradation trend", [&] { return cv_trend(threads); }},
      {3, "gradient oracles", gradient_oracles},
      {4, "QP and KKT correctness", qp_correctness},
      {5, "hard-fit conservativeness", hard_fit_conservative},
      {6, "SOC guarantee", soc_guarantee},
      {7, "UC solver exactness", uc_exactness},
      {8, "case-study trends", [&] { return case_study(threads); }},
      {9, "k_eta table", k_eta_table},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %s  %s: %s [%.1f s]\n", c.id, out.pass ? "PASS" : "FAIL", c.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += out.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
