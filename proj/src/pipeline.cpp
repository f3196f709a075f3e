#include "stabdro/pipeline.hpp"

namespace stabdro {

Pipeline make_pipeline(const GridModel& grid, Dataset data, const PipelineSettings& settings,
                       const std::vector<int>& sources) {
  Pipeline pl;
  pl.grid = grid;
  pl.sources = sources;
  for (int s : sources) {
    if (s < 0 || s >= grid.num_sources()) throw Error("uncertain source index out of range");
  }
  pl.data = std::move(data);
  if (pl.data.size() == 0) throw Error("dataset is empty");
  pl.design = pl.data.design();
  pl.cfg = settings.regression.resolved(pl.data.labels());
  if (settings.prune) {
    auto first = fit_smooth(pl.design, pl.data.labels(), pl.cfg);
    pl.cfg.columns = prune_columns(first.coefficients);
  }
  return pl;
}

Pipeline make_pipeline(const GridModel& grid, const PipelineSettings& settings, const std::vector<int>& sources) {
  return make_pipeline(grid, generate_dataset(grid, settings.wind_levels, settings.policy), settings, sources);
}

Eigen::VectorXd pipeline_labels(const Pipeline& pl, const Eigen::VectorXd& p) {
  return relabel(pl.grid, pl.data, reactances_with(pl.grid, pl.sources, p));
}

CoefficientFit pipeline_fit(const Pipeline& pl, const Eigen::VectorXd& p) {
  return fit_smooth(pl.design, pipeline_labels(pl, p), pl.cfg);
}

MapEvaluation pipeline_map(const Pipeline& pl, const Eigen::VectorXd& p) {
  const auto fit = pipeline_fit(pl, p);
  MapEvaluation out;
  out.value = fit.coefficients;
  for (const auto& a : fit.active) out.active.push_back(a.row);
  return out;
}

ParameterMap as_parameter_map(const Pipeline& pl) {
  return [&pl](const Eigen::VectorXd& p) { return pipeline_map(pl, p); };
}

AnalyticResult analytic_moments(const Pipeline& pl, const UncertainParameterSpec& spec, MeanCorrection correction,
                                double hessian_rel_step) {
  spec.validate();
  if (spec.sources != pl.sources) throw Error("uncertainty spec does not match the pipeline parameters");
  AnalyticResult out;
  const Eigen::VectorXd labels = pipeline_labels(pl, spec.mean);
  out.fit = fit_smooth(pl.design, labels, pl.cfg);
  out.index = index_sensitivity(pl.grid, pl.data, pl.sources, reactances_with(pl.grid, pl.sources, spec.mean));
  out.jacobian = dk_dg(out.fit, pl.design, labels, pl.cfg);
  out.grad = grad_f(out.jacobian.dk_dg, out.index.dg_dp);
  MapEvaluation at_mu;
  at_mu.value = out.fit.coefficients;
  for (const auto& a : out.fit.active) at_mu.active.push_back(a.row);
  if (correction != MeanCorrection::kNone) {
    out.hessian = hessian_diag_f(as_parameter_map(pl), spec.mean, hessian_rel_step, at_mu);
  } else {
    out.hessian.d2 = Eigen::MatrixXd::Zero(out.grad.rows(), out.grad.cols());
  }
  out.moments = propagate_moments(out.grad, out.hessian.d2, spec, out.fit.coefficients, correction);
  out.moments.hessian_rel_step = hessian_rel_step;
  out.moments.fallbacks = out.index.fallbacks + (out.jacobian.retrained ? 1 : 0);
  if (out.jacobian.retrained) out.moments.notes.push_back("singular KKT matrix; coefficient Jacobian from retraining");
  if (out.index.fallbacks > 0) {
    out.moments.notes.push_back(std::to_string(out.index.fallbacks) + " index derivatives by finite difference");
  }
  for (std::size_t p = 0; p < out.hessian.one_sided.size(); ++p) {
    if (out.hessian.one_sided[p]) out.moments.notes.push_back("one-sided Hessian stencil for parameter " + std::to_string(p));
  }
  return out;
}

Eigen::MatrixXd end_to_end_gradient(const Pipeline& pl, const Eigen::VectorXd& mu, double rel_step) {
  Eigen::MatrixXd g(pl.design.cols(), mu.size());
  for (Eigen::Index p = 0; p < mu.size(); ++p) {
    const double h = rel_step * std::abs(mu(p));
    Eigen::VectorXd up = mu, dn = mu;
    up(p) += h;
    dn(p) -= h;
    g.col(p) = (pipeline_fit(pl, up).coefficients - pipeline_fit(pl, dn).coefficients) / (2.0 * h);
  }
  return g;
}

}  // namespace stabdro
