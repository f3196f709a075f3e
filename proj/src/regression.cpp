#include "stabdro/regression.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace stabdro {

Eigen::VectorXd make_augmented(const std::vector<int>& commitment, double wind) {
  const int ns = static_cast<int>(commitment.size());
  Eigen::VectorXd x(augmented_size(ns));
  x(0) = 1.0;
  for (int g = 0; g < ns; ++g) {
    x(1 + g) = commitment[g];
    x(2 + ns + g) = commitment[g] * wind;
  }
  x(1 + ns) = wind;
  return x;
}

Eigen::MatrixXd Dataset::design() const {
  if (samples.empty()) return {};
  Eigen::MatrixXd d(size(), samples.front().x.size());
  for (int i = 0; i < size(); ++i) d.row(i) = samples[i].x.transpose();
  return d;
}

Eigen::VectorXd Dataset::labels() const {
  Eigen::VectorXd g(size());
  for (int i = 0; i < size(); ++i) g(i) = samples[i].g;
  return g;
}

std::vector<double> wind_levels(int n) {
  if (n < 2) throw Error("at least two wind levels are required");
  std::vector<double> levels(n);
  for (int i = 0; i < n; ++i) levels[i] = (i + 0.5) / n;
  return levels;
}

namespace {

// With wind split by capacity, P scales linearly with total wind w and
// g(w) = g(1) / w, so one reduction per commitment serves every level.
struct UnitWindIndex {
  bool ok = false;
  double value = 0.0;
  std::string reason;
};

UnitWindIndex index_at_unit_wind(const GridModel& grid, const std::vector<int>& commitment,
                                 const std::vector<double>& reactances) {
  UnitWindIndex out;
  OperatingPoint op{commitment, reactances, split_wind(grid, 1.0)};
  try {
    auto ev = evaluate_index(grid, op);
    if (!ev.has_gfl || !std::isfinite(ev.value)) {
      out.reason = "no GFL unit online";
      return out;
    }
    out.ok = true;
    out.value = ev.value;
  } catch (const ReductionSingularError& e) {
    out.reason = e.what();
  }
  return out;
}

std::vector<std::vector<int>> commitment_combinations(int ns, int min_online) {
  std::vector<std::vector<int>> combos;
  const long total = 1L << ns;
  for (long code = 0; code < total; ++code) {
    std::vector<int> c(ns);
    int online = 0;
    for (int g = 0; g < ns; ++g) {
      c[g] = static_cast<int>((code >> (ns - 1 - g)) & 1L);
      online += c[g];
    }
    if (online >= min_online) combos.push_back(c);
  }
  return combos;
}

}  // namespace

Dataset generate_dataset(const GridModel& grid, int n, const CommitmentPolicy& policy,
                         const std::vector<double>& reactances) {
  grid.validate();
  if (grid.gfl.empty()) throw InvalidModelError("dataset generation needs at least one GFL unit");
  const auto levels = wind_levels(n);
  const auto x = reactances.empty() ? grid.nominal_reactances() : reactances;
  const double cap = grid.total_gfl_capacity();
  Dataset data;
  for (const auto& combo : commitment_combinations(grid.num_sources(), policy.min_online)) {
    const auto unit = index_at_unit_wind(grid, combo, x);
    for (double level : levels) {
      const double wind = level * cap;
      if (!unit.ok) {
        data.skipped.push_back({combo, wind, unit.reason});
        continue;
      }
      data.samples.push_back({make_augmented(combo, wind), unit.value / wind, combo, wind});
    }
  }
  return data;
}

Eigen::VectorXd relabel(const GridModel& grid, const Dataset& data, const std::vector<double>& reactances) {
  std::map<std::vector<int>, UnitWindIndex> cache;
  Eigen::VectorXd g(data.size());
  for (int i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    auto it = cache.find(s.commitment);
    if (it == cache.end()) it = cache.emplace(s.commitment, index_at_unit_wind(grid, s.commitment, reactances)).first;
    if (!it->second.ok) throw ReductionSingularError(it->second.reason, {});
    g(i) = it->second.value / s.wind;
  }
  return g;
}

RegionPartition partition(const Eigen::VectorXd& labels, double g_lim, double nu) {
  if (!(nu > 0.0)) throw DomainError("nu must be positive");
  RegionPartition p;
  p.g_lim = g_lim;
  p.nu = nu;
  for (int i = 0; i < labels.size(); ++i) {
    const double g = labels(i);
    if (g < g_lim) {
      p.below.push_back(i);
    } else if (g < g_lim + nu) {
      p.boundary.push_back(i);
    } else {
      p.above.push_back(i);
    }
  }
  return p;
}

namespace {

CoefficientFit finish_fit(const QpProblem<double>& qp, const QpSolution<double>& sol,
                          const std::vector<int>& row_sample, const std::vector<ConstraintFamily>& row_family,
                          const std::vector<int>& column_map, int full_size) {
  CoefficientFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(full_size);
  fit.columns.assign(full_size, 0);
  for (std::size_t c = 0; c < column_map.size(); ++c) {
    fit.coefficients(column_map[c]) = sol.x(static_cast<Eigen::Index>(c));
    fit.columns[column_map[c]] = 1;
  }
  for (int row : sol.active) {
    fit.active.push_back({row, row_sample[row], row_family[row], sol.multipliers(row)});
  }
  fit.stationarity = sol.stationarity;
  fit.iterations = sol.iterations;
  fit.objective_trace = sol.objective_trace;
  if (qp.A.rows() > 0) {
    const Eigen::VectorXd slack = qp.b - qp.A * sol.x;
    fit.max_violation = (-slack).maxCoeff();
    fit.complementarity = (sol.multipliers.array() * slack.array()).abs().maxCoeff();
  }
  return fit;
}

}  // namespace

CoefficientFit fit_hard(const Dataset& data, const RegionPartition& part, const HardFitOptions& opt) {
  if (part.boundary.empty()) {
    throw DegenerateObjectiveError("no sample lies in the boundary band; increase nu");
  }
  const Eigen::MatrixXd x = data.design();
  const Eigen::VectorXd g = data.labels();
  const auto k = x.cols();
  QpProblem<double> qp;
  qp.H = Eigen::MatrixXd::Zero(k, k);
  qp.f = Eigen::VectorXd::Zero(k);
  for (int i : part.boundary) {
    qp.H.noalias() += 2.0 * x.row(i).transpose() * x.row(i);
    qp.f.noalias() -= 2.0 * g(i) * x.row(i).transpose();
  }
  const auto m = static_cast<Eigen::Index>(part.below.size() + part.above.size());
  qp.A.resize(m, k);
  qp.b.resize(m);
  std::vector<int> row_sample;
  std::vector<ConstraintFamily> row_family;
  Eigen::Index r = 0;
  for (int i : part.below) {
    qp.A.row(r) = x.row(i);
    qp.b(r++) = part.g_lim - opt.strict_margin;
    row_sample.push_back(i);
    row_family.push_back(ConstraintFamily::kUpper);
  }
  for (int i : part.above) {
    qp.A.row(r) = -x.row(i);
    qp.b(r++) = -(part.g_lim + opt.stable_margin);
    row_sample.push_back(i);
    row_family.push_back(ConstraintFamily::kLower);
  }
  QpSolution<double> sol;
  try {
    sol = solve_qp(qp);
  } catch (const InfeasibleError& e) {
    std::vector<int> samples;
    for (int row : e.rows()) samples.push_back(row_sample[row]);
    throw InfeasibleError("hard regression is infeasible at nu = " + std::to_string(part.nu) +
                              "; choose a larger nu",
                          samples);
  }
  std::vector<int> cols(k);
  for (Eigen::Index c = 0; c < k; ++c) cols[c] = static_cast<int>(c);
  auto fit = finish_fit(qp, sol, row_sample, row_family, cols, static_cast<int>(k));
  double sse = 0.0;
  for (int i : part.boundary) sse += std::pow(g(i) - x.row(i).dot(sol.x), 2);
  fit.objective = sse;
  return fit;
}

NuSearch choose_nu(const Dataset& data, double g_lim, const HardFitOptions& opt) {
  const Eigen::VectorXd g = data.labels();
  if (g.size() == 0 || !(g.minCoeff() < g_lim) || !(g.maxCoeff() >= g_lim)) {
    throw DataInseparableError("labels do not span both sides of g_lim");
  }
  const double range = g.maxCoeff() - g.minCoeff();
  const double nu0 = 0.01 * range;
  NuSearch out;
  for (int j = 0;; ++j) {
    const double nu = std::min(nu0 * std::ldexp(1.0, j), range);
    out.tried.push_back(nu);
    const auto part = partition(g, g_lim, nu);
    if (!part.boundary.empty()) {
      ++out.solves;
      try {
        fit_hard(data, part, opt);
        out.nu = nu;
        return out;
      } catch (const InfeasibleError&) {
      }
    }
    if (nu >= range) break;
  }
  throw DataInseparableError("hard regression infeasible for every nu up to the label range");
}

double default_gaussian_scale(double nu) { return nu / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

double SmoothRegressionConfig::scale() const { return s ? *s : default_gaussian_scale(nu); }

SmoothRegressionConfig SmoothRegressionConfig::resolved(const Eigen::VectorXd& labels) const {
  SmoothRegressionConfig c = *this;
  if (!c.s) c.s = default_gaussian_scale(nu);
  if (!c.big_m) {
    const double gmax = labels.size() > 0 ? labels.cwiseAbs().maxCoeff() : 0.0;
    c.big_m = gmax > 0.0 ? 10.0 * gmax : 1.0;
  }
  return c;
}

double gaussian_weight(double g, const SmoothRegressionConfig& cfg) {
  const double s = cfg.scale();
  if (!(s > 0.0)) throw DomainError("Gaussian scale must be positive");
  const double d = g - (cfg.g_lim + cfg.nu / 2.0);
  return std::exp(-d * d / (2.0 * s * s));
}

double sigmoid_gamma(double x, double r) { return 1.0 / (1.0 + std::exp(-2.0 * r * x)); }

double sigmoid_gamma_slope(double x, double r) {
  const double e = std::exp(-2.0 * r * std::abs(x));
  return 2.0 * r * e / ((1.0 + e) * (1.0 + e));
}

SmoothQp build_smooth_qp(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                         const SmoothRegressionConfig& cfg_in) {
  if (design.rows() != labels.size()) throw Error("design and labels disagree in length");
  if (!(cfg_in.nu > 0.0)) throw DomainError("nu must be positive");
  const auto cfg = cfg_in.resolved(labels);
  const double big_m = *cfg.big_m;
  SmoothQp out;
  const auto full = design.cols();
  for (Eigen::Index c = 0; c < full; ++c) {
    if (cfg.columns.empty() || cfg.columns.at(c)) out.column_map.push_back(static_cast<int>(c));
  }
  const auto k = static_cast<Eigen::Index>(out.column_map.size());
  Eigen::MatrixXd x(design.rows(), k);
  for (Eigen::Index c = 0; c < k; ++c) x.col(c) = design.col(out.column_map[c]);

  const auto n = x.rows();
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = gaussian_weight(labels(i), cfg);
  out.qp.H = 2.0 * x.transpose() * e.asDiagonal() * x;
  out.qp.f = -2.0 * x.transpose() * e.cwiseProduct(labels);
  out.qp.A.resize(2 * n, k);
  out.qp.b.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = labels(i);
    double ga, gb;
    double ra = cfg.g_lim, rb = -cfg.g_lim;
    if (cfg.sharp) {
      ga = g - cfg.g_lim >= 0.0 ? 1.0 : 0.0;
      gb = cfg.g_lim + cfg.nu - g > 0.0 ? 1.0 : 0.0;
      if (ga == 0.0) ra -= cfg.strict_margin;
    } else {
      ga = sigmoid_gamma(g - cfg.g_lim, cfg.r);
      gb = sigmoid_gamma(cfg.g_lim + cfg.nu - g, cfg.r);
    }
    out.qp.A.row(2 * i) = x.row(i);
    out.qp.b(2 * i) = ra + ga * big_m;
    out.qp.A.row(2 * i + 1) = -x.row(i);
    out.qp.b(2 * i + 1) = rb + gb * big_m;
    out.row_sample.push_back(static_cast<int>(i));
    out.row_sample.push_back(static_cast<int>(i));
    out.row_family.push_back(ConstraintFamily::kUpper);
    out.row_family.push_back(ConstraintFamily::kLower);
  }
  return out;
}

CoefficientFit fit_smooth(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                          const SmoothRegressionConfig& cfg) {
  auto sq = build_smooth_qp(design, labels, cfg);
  QpSolution<double> sol;
  try {
    sol = solve_qp(sq.qp);
  } catch (const InfeasibleError& e) {
    std::vector<int> samples;
    for (int row : e.rows()) samples.push_back(sq.row_sample[row]);
    throw InfeasibleError("smoothed regression is infeasible; raise M", samples);
  }
  auto fit = finish_fit(sq.qp, sol, sq.row_sample, sq.row_family, sq.column_map, static_cast<int>(design.cols()));
  const auto resolved = cfg.resolved(labels);
  const Eigen::VectorXd resid = labels - design * fit.coefficients;
  double c = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) c += gaussian_weight(labels(i), resolved) * resid(i) * resid(i);
  fit.objective = c;
  return fit;
}

CoefficientFit fit_smooth(const Dataset& data, const SmoothRegressionConfig& cfg) {
  return fit_smooth(data.design(), data.labels(), cfg);
}

std::vector<char> prune_columns(const Eigen::VectorXd& coefficients) {
  std::vector<double> mags(coefficients.size());
  for (Eigen::Index i = 0; i < coefficients.size(); ++i) mags[i] = std::abs(coefficients(i));
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n == 0 ? 0.0 : (n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]));
  std::vector<char> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = mags[i] >= 0.1 * median ? 1 : 0;
  return keep;
}

}  // namespace stabdro
