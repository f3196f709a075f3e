#include "stabdro/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <thread>

namespace stabdro {

void McConfig::validate() const {
  if (samples < 1) throw DomainError("sample count must be at least 1");
  for (double cv : cvs) {
    if (!(cv > 0.0)) throw DomainError("coefficients of variation must be positive");
  }
  if (trace_stride < 1) throw DomainError("trace stride must be at least 1");
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after every worker has stopped.
template <typename Body>
void parallel_for(long n, int threads, Body&& body) {
  const int workers = static_cast<int>(std::min<long>(resolve_threads(threads), std::max(1L, n)));
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      (void)w;
      for (long i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Eigen::MatrixXd covariance_factor(const UncertainParameterSpec& spec) {
  if (!spec.covariance) return spec.variance.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*spec.covariance);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::VectorXd draw_with_factor(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, std::uint64_t seed,
                                 std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(mean.size());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    Eigen::VectorXd p = mean + factor * z;
    if ((p.array() > 0.0).all()) return p;
  }
  throw DomainError("no positive reactance draw in 1000 attempts");
}

}  // namespace

Eigen::VectorXd draw_parameters(const UncertainParameterSpec& spec, std::uint64_t seed, std::uint64_t index) {
  return draw_with_factor(spec.mean, covariance_factor(spec), seed, index);
}

McResult mc_moments(const ParameterMap& f, const UncertainParameterSpec& spec, const McConfig& cfg) {
  cfg.validate();
  spec.validate();
  const Eigen::MatrixXd factor = covariance_factor(spec);
  std::vector<Eigen::VectorXd> values(cfg.samples);
  std::vector<std::string> errors(cfg.samples);
  parallel_for(cfg.samples, cfg.threads, [&](long i) {
    try {
      values[i] = f(draw_with_factor(spec.mean, factor, cfg.seed, static_cast<std::uint64_t>(i))).value;
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  McResult out;
  out.requested = cfg.samples;
  Eigen::VectorXd sum;
  for (int i = 0; i < cfg.samples; ++i) {
    if (values[i].size() == 0) {
      ++out.dropped;
      out.drop_reasons.push_back("sample " + std::to_string(i) + ": " + errors[i]);
      continue;
    }
    if (sum.size() == 0) sum = Eigen::VectorXd::Zero(values[i].size());
    sum += values[i];
    ++out.effective;
    if (out.effective % cfg.trace_stride == 0) out.trace.emplace_back(out.effective, sum / out.effective);
  }
  out.valid = out.dropped <= cfg.max_drop_fraction * cfg.samples;
  if (out.effective == 0) {
    out.valid = false;
    return out;
  }
  out.mu = sum / out.effective;
  if (out.trace.empty() || out.trace.back().first != out.effective) out.trace.emplace_back(out.effective, out.mu);
  out.sigma = Eigen::MatrixXd::Zero(out.mu.size(), out.mu.size());
  for (const auto& v : values) {
    if (v.size() == 0) continue;
    const Eigen::VectorXd d = v - out.mu;
    out.sigma.noalias() += d * d.transpose();
  }
  out.sigma /= std::max(1, out.effective - 1);
  return out;
}

McResult mc_moments(const Pipeline& pl, const UncertainParameterSpec& spec, const McConfig& cfg) {
  if (spec.sources != pl.sources) throw Error("parameter spec and pipeline disagree on the uncertain sources");
  return mc_moments(as_parameter_map(pl), spec, cfg);
}

MapeResult mape(const Eigen::VectorXd& analytic_mu, const Eigen::VectorXd& analytic_var, const Eigen::VectorXd& mc_mu,
                const Eigen::VectorXd& mc_var) {
  if (analytic_mu.size() != mc_mu.size() || analytic_var.size() != mc_var.size() ||
      analytic_mu.size() != analytic_var.size()) {
    throw Error("moment dimensions differ");
  }
  constexpr double kFloor = 1e-9;
  MapeResult out;
  double sum_mu = 0.0, sum_var = 0.0;
  for (Eigen::Index i = 0; i < analytic_mu.size(); ++i) {
    CoefficientComparison row;
    row.index = static_cast<int>(i);
    row.analytic_mu = analytic_mu(i);
    row.mc_mu = mc_mu(i);
    row.analytic_var = analytic_var(i);
    row.mc_var = mc_var(i);
    row.excluded_mu = std::abs(row.mc_mu) < kFloor;
    row.excluded_var = std::abs(row.mc_var) < kFloor;
    if (row.excluded_mu) {
      out.excluded_mu.push_back(row.index);
    } else {
      row.e_mu = (row.analytic_mu - row.mc_mu) / row.mc_mu * 100.0;
      sum_mu += std::abs(row.e_mu);
    }
    if (row.excluded_var) {
      out.excluded_var.push_back(row.index);
    } else {
      row.e_var = (row.analytic_var - row.mc_var) / row.mc_var * 100.0;
      sum_var += std::abs(row.e_var);
    }
    out.rows.push_back(row);
  }
  const auto n = analytic_mu.size();
  const auto used_mu = n - static_cast<Eigen::Index>(out.excluded_mu.size());
  const auto used_var = n - static_cast<Eigen::Index>(out.excluded_var.size());
  if (used_mu == 0 || used_var == 0) throw UndefinedMapeError("every coefficient is excluded from the MAPE");
  out.mape_mu = sum_mu / used_mu;
  out.mape_var = sum_var / used_var;
  return out;
}

MapeResult mape(const MomentEstimate& analytic, const McResult& mc) {
  if (mc.mu.size() == 0) throw UndefinedMapeError("Monte Carlo run has no valid sample");
  return mape(analytic.mu, analytic.sigma.diagonal(), mc.mu, mc.sigma.diagonal());
}

std::vector<CvSweepRow> cv_sweep(const Pipeline& pl, const McConfig& cfg, MeanCorrection correction) {
  cfg.validate();
  std::vector<CvSweepRow> rows;
  for (double cv : cfg.cvs) {
    const auto spec = UncertainParameterSpec::from_cv(pl.grid, pl.sources, cv);
    CvSweepRow row;
    row.cv = cv;
    row.analytic = analytic_moments(pl, spec, correction).moments;
    row.mc = mc_moments(pl, spec, cfg);
    row.mape = mape(row.analytic, row.mc);
    rows.push_back(std::move(row));
  }
  return rows;
}

ViolationResult violation_rate(const Schedule& sched, const UcInstance& inst, const GridModel& grid,
                               const UncertainParameterSpec& spec, double g_lim, int draws, std::uint64_t seed,
                               int threads) {
  if (draws < 1) throw DomainError("violation experiment needs at least one draw");
  spec.validate();
  const Eigen::MatrixXd factor = covariance_factor(spec);
  std::vector<long> counts(draws, 0);
  std::vector<long> steps(draws, 0);
  parallel_for(draws, threads, [&](long d) {
    const auto p = draw_with_factor(spec.mean, factor, seed, static_cast<std::uint64_t>(d));
    const auto ev = evaluate_schedule(sched, inst, grid, reactances_with(grid, spec.sources, p), g_lim);
    for (const auto& st : ev.steps) counts[d] += st.violated ? 1 : 0;
    steps[d] = static_cast<long>(ev.steps.size());
  });
  ViolationResult out;
  out.draws = draws;
  for (int d = 0; d < draws; ++d) {
    out.violations += counts[d];
    out.checks += steps[d];
  }
  out.rate = out.checks > 0 ? static_cast<double>(out.violations) / out.checks : 0.0;
  return out;
}

MarginBaseline fixed_margin_baseline(const UcInstance& inst, const GridModel& grid, const Eigen::VectorXd& k,
                                     double g_lim, const std::vector<double>& margins,
                                     const UncertainParameterSpec& spec, int draws, std::uint64_t seed,
                                     const BnbOptions& bnb, int threads) {
  MarginBaseline out;
  for (double m : margins) {
    if (m < 0.0) throw DomainError("margins must be nonnegative");
    MarginRow row;
    row.margin = m;
    try {
      const auto sched = solve_uc(build_uc(inst, grid, StabilityMode::deterministic(k, g_lim * (1.0 + m))), bnb);
      row.cost = sched.cost;
      row.cost_per_hour = sched.cost_per_hour;
      row.violation = violation_rate(sched, inst, grid, spec, g_lim, draws, seed, threads);
      if (!out.first_zero_violation && row.violation.violations == 0) {
        out.first_zero_violation = static_cast<int>(out.rows.size());
      }
    } catch (const InfeasibleError&) {
      row.feasible = false;
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace stabdro
