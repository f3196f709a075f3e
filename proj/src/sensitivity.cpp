#include "stabdro/sensitivity.hpp"

#include <cmath>
#include <map>

namespace stabdro {

Eigen::MatrixXd UncertainParameterSpec::sigma() const {
  if (covariance) return *covariance;
  return variance.asDiagonal();
}

void UncertainParameterSpec::validate() const {
  const auto p = static_cast<Eigen::Index>(sources.size());
  if (mean.size() != p || variance.size() != p) throw Error("uncertainty spec dimensions disagree");
  if ((variance.array() < 0.0).any()) throw DomainError("variances must be nonnegative");
  if (covariance && (covariance->rows() != p || covariance->cols() != p)) {
    throw InvalidCovarianceError("parameter covariance has the wrong size");
  }
}

UncertainParameterSpec UncertainParameterSpec::from_cv(const GridModel& grid, const std::vector<int>& sources,
                                                       double cv) {
  if (cv < 0.0) throw DomainError("coefficient of variation must be nonnegative");
  UncertainParameterSpec spec;
  spec.sources = sources;
  spec.mean.resize(static_cast<Eigen::Index>(sources.size()));
  spec.variance.resize(spec.mean.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const double mu = grid.sources.at(sources[i]).reactance;
    spec.mean(static_cast<Eigen::Index>(i)) = mu;
    spec.variance(static_cast<Eigen::Index>(i)) = (cv * mu) * (cv * mu);
  }
  return spec;
}

std::vector<double> reactances_with(const GridModel& grid, const std::vector<int>& sources,
                                    const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(sources.size())) throw Error("parameter vector has the wrong size");
  auto x = grid.nominal_reactances();
  for (std::size_t i = 0; i < sources.size(); ++i) x.at(sources[i]) = p(static_cast<Eigen::Index>(i));
  return x;
}

IndexDerivative dg_dp(const GridModel& grid, const OperatingPoint& op, int source, double fd_rel_step) {
  const auto ev = evaluate_index(grid, op);
  if (!ev.has_gfl) return {};
  const auto dydd = d_ydd_dxg<double>(grid, op, source, ev.reduced.eliminated);
  if (op.commitment.at(source) == 0) return {};

  if (ev.gscr.gap < 1e-8) {
    const double h = fd_rel_step * op.reactances[source];
    OperatingPoint up = op, dn = op;
    up.reactances[source] += h;
    dn.reactances[source] -= h;
    return {(evaluate_index(grid, up).value - evaluate_index(grid, dn).value) / (2.0 * h), true};
  }

  const auto& keep = ev.reduced.retained;
  const auto& elim = ev.reduced.eliminated;
  const Eigen::MatrixXd ydd = detail::submatrix(ev.admittance.y, elim, elim);
  const Eigen::MatrixXd yld = detail::submatrix(ev.admittance.y, keep, elim);
  const Eigen::MatrixXd t = Eigen::LDLT<Eigen::MatrixXd>(ydd).solve(yld.transpose());
  const Eigen::MatrixXd dy_red = t.transpose() * dydd * t;

  Eigen::VectorXd scale(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < ev.gfl_units.size(); ++i) {
    const auto& u = grid.gfl[ev.gfl_units[i]];
    scale(static_cast<Eigen::Index>(i)) = u.voltage * u.voltage / op.gfl_power[ev.gfl_units[i]];
  }
  const Eigen::VectorXd& w = ev.gscr.left;
  const Eigen::VectorXd& v = ev.gscr.right;
  return {w.dot(scale.asDiagonal() * (dy_red * v)) / w.dot(v), false};
}

IndexSensitivity index_sensitivity(const GridModel& grid, const Dataset& data, const std::vector<int>& sources,
                                   const std::vector<double>& reactances) {
  IndexSensitivity out;
  const auto np = static_cast<Eigen::Index>(sources.size());
  out.dg_dp.resize(data.size(), np);
  // g scales as 1/w under the capacity split, and so does its derivative.
  std::map<std::vector<int>, Eigen::RowVectorXd> cache;
  for (int i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    auto it = cache.find(s.commitment);
    if (it == cache.end()) {
      OperatingPoint op{s.commitment, reactances, split_wind(grid, 1.0)};
      Eigen::RowVectorXd row(np);
      for (Eigen::Index p = 0; p < np; ++p) {
        const auto d = dg_dp(grid, op, sources[p]);
        row(p) = d.value;
        out.fallbacks += d.finite_difference ? 1 : 0;
      }
      it = cache.emplace(s.commitment, row).first;
    }
    out.dg_dp.row(i) = it->second / s.wind;
  }
  return out;
}

KktPerturbation assemble_kkt_perturbation(const CoefficientFit& fit, const Eigen::MatrixXd& design,
                                          const Eigen::VectorXd& labels, const SmoothRegressionConfig& cfg_in) {
  const auto cfg = cfg_in.resolved(labels);
  const double s = cfg.scale();
  const double big_m = *cfg.big_m;
  const double g_mid = cfg.g_lim + cfg.nu / 2.0;
  KktPerturbation out;
  for (std::size_t c = 0; c < fit.columns.size(); ++c) {
    if (fit.columns[c]) out.column_map.push_back(static_cast<int>(c));
  }
  const auto k = static_cast<Eigen::Index>(out.column_map.size());
  const auto n = design.rows();
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd kv(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    x.col(c) = design.col(out.column_map[c]);
    kv(c) = fit.coefficients(out.column_map[c]);
  }
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = gaussian_weight(labels(i), cfg);

  out.a = 2.0 * x.transpose() * e.asDiagonal() * x;

  std::vector<const ActiveConstraint*> strict;
  for (const auto& ac : fit.active) {
    if (ac.multiplier > 1e-8) {
      strict.push_back(&ac);
      out.active_rows.push_back(ac.row);
    } else {
      out.weak_rows.push_back(ac.row);
    }
  }
  const auto ma = static_cast<Eigen::Index>(strict.size());
  out.n.resize(k, ma);
  out.d = Eigen::MatrixXd::Zero(ma, n);
  for (Eigen::Index j = 0; j < ma; ++j) {
    const auto& ac = *strict[j];
    const double g = labels(ac.sample);
    if (ac.family == ConstraintFamily::kUpper) {
      out.n.col(j) = x.row(ac.sample).transpose();
      if (!cfg.sharp) out.d(j, ac.sample) = -big_m * sigmoid_gamma_slope(g - cfg.g_lim, cfg.r);
    } else {
      out.n.col(j) = -x.row(ac.sample).transpose();
      if (!cfg.sharp) out.d(j, ac.sample) = big_m * sigmoid_gamma_slope(cfg.g_lim + cfg.nu - g, cfg.r);
    }
  }

  out.c.resize(k, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double resid = x.row(i).dot(kv) - labels(i);
    const double factor = 1.0 + resid * (labels(i) - g_mid) / (s * s);
    out.c.col(i) = -2.0 * e(i) * factor * x.row(i).transpose();
  }
  return out;
}

Eigen::VectorXd retrain_difference(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                                   const SmoothRegressionConfig& cfg, int sample, double step) {
  const auto frozen = cfg.resolved(labels);
  Eigen::VectorXd up = labels, dn = labels;
  up(sample) += step;
  dn(sample) -= step;
  return (fit_smooth(design, up, frozen).coefficients - fit_smooth(design, dn, frozen).coefficients) / (2.0 * step);
}

CoefficientJacobian dk_dg(const CoefficientFit& fit, const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                          const SmoothRegressionConfig& cfg, double retrain_step) {
  const auto sys = assemble_kkt_perturbation(fit, design, labels, cfg);
  const auto k = sys.a.rows();
  const auto ma = sys.n.cols();
  const auto n = design.rows();
  CoefficientJacobian out;
  out.active_rows = sys.active_rows;
  out.dk_dg = Eigen::MatrixXd::Zero(design.cols(), n);

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + ma, k + ma);
  kkt.topLeftCorner(k, k) = sys.a;
  kkt.topRightCorner(k, ma) = sys.n;
  kkt.bottomLeftCorner(ma, k) = sys.n.transpose();
  Eigen::MatrixXd rhs(k + ma, n);
  rhs.topRows(k) = -sys.c;
  rhs.bottomRows(ma) = -sys.d;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  lu.setThreshold(1e-12);
  if (lu.isInvertible()) {
    const Eigen::MatrixXd sol = lu.solve(rhs);
    out.residual = n > 0 ? (kkt * sol - rhs).cwiseAbs().maxCoeff() : 0.0;
    for (Eigen::Index c = 0; c < k; ++c) out.dk_dg.row(sys.column_map[c]) = sol.row(c);
    out.dlambda_dg = sol.bottomRows(ma);
    return out;
  }
  out.retrained = true;
  out.dlambda_dg = Eigen::MatrixXd::Zero(ma, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.dk_dg.col(i) = retrain_difference(design, labels, cfg, static_cast<int>(i), retrain_step);
  }
  return out;
}

Eigen::MatrixXd grad_f(const Eigen::MatrixXd& dk_dg, const Eigen::MatrixXd& dg_dp) {
  if (dk_dg.cols() != dg_dp.rows()) throw Error("Jacobian dimensions do not conform");
  return dk_dg * dg_dp;
}

HessianDiagonal hessian_diag_f(const ParameterMap& f, const Eigen::VectorXd& mu, double rel_step,
                               const std::optional<MapEvaluation>& at_mu) {
  const MapEvaluation f0 = at_mu ? *at_mu : f(mu);
  const auto np = mu.size();
  HessianDiagonal out;
  out.d2.resize(f0.value.size(), np);
  out.steps.resize(np);
  out.one_sided.assign(np, 0);
  for (Eigen::Index p = 0; p < np; ++p) {
    const double h = rel_step * (mu(p) != 0.0 ? std::abs(mu(p)) : 1.0);
    out.steps(p) = h;
    auto at = [&](double t) {
      Eigen::VectorXd q = mu;
      q(p) += t;
      return f(q);
    };
    const auto fp = at(h);
    const auto fm = at(-h);
    const bool up_ok = fp.active == f0.active;
    const bool dn_ok = fm.active == f0.active;
    if ((up_ok && dn_ok) || (!up_ok && !dn_ok)) {
      out.d2.col(p) = (fp.value - 2.0 * f0.value + fm.value) / (h * h);
      out.one_sided[p] = (!up_ok && !dn_ok) ? 1 : 0;
    } else if (dn_ok) {
      out.d2.col(p) = (f0.value - 2.0 * fm.value + at(-2.0 * h).value) / (h * h);
      out.one_sided[p] = 1;
    } else {
      out.d2.col(p) = (at(2.0 * h).value - 2.0 * fp.value + f0.value) / (h * h);
      out.one_sided[p] = 1;
    }
  }
  return out;
}

std::string to_string(MeanCorrection m) {
  switch (m) {
    case MeanCorrection::kHalf:
      return "half";
    case MeanCorrection::kLiteral:
      return "literal";
    case MeanCorrection::kNone:
      return "none";
  }
  return "half";
}

MeanCorrection mean_correction_from_string(const std::string& s) {
  if (s == "half") return MeanCorrection::kHalf;
  if (s == "literal") return MeanCorrection::kLiteral;
  if (s == "none") return MeanCorrection::kNone;
  throw Error("unknown mean correction '" + s + "'");
}

MomentEstimate propagate_moments(const Eigen::MatrixXd& grad, const Eigen::MatrixXd& hessian_diag,
                                 const UncertainParameterSpec& spec, const Eigen::VectorXd& f_mu,
                                 MeanCorrection correction) {
  spec.validate();
  const Eigen::MatrixXd sp = spec.sigma();
  if (grad.rows() != f_mu.size() || grad.cols() != sp.rows()) throw Error("gradient dimensions do not conform");
  MomentEstimate out;
  out.correction = correction;
  out.mu = f_mu;
  if (correction != MeanCorrection::kNone) {
    if (hessian_diag.rows() != f_mu.size() || hessian_diag.cols() != sp.rows()) {
      throw Error("Hessian dimensions do not conform");
    }
    const double factor = correction == MeanCorrection::kHalf ? 0.5 : 1.0;
    out.mu += factor * hessian_diag * sp.diagonal();
  }
  out.sigma = grad * sp * grad.transpose();
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  return out;
}

}  // namespace stabdro
