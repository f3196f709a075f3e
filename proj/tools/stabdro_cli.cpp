// stabdro: dataset generation, surrogate fit, moment propagation, Monte Carlo
// validation and stability-constrained scheduling from one config file.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "stabdro/artifacts.hpp"
#include "stabdro/mc.hpp"
#include "stabdro/network_io.hpp"
#include "stabdro/pipeline.hpp"
#include "stabdro/uc.hpp"

namespace fs = std::filesystem;
using namespace stabdro;
using nlohmann::json;

namespace {

struct Config {
  fs::path base;
  std::string network;
  std::string instance;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 0;

  PipelineSettings pipeline;
  std::vector<int> sources;  ///< empty: every source
  double cv = 0.05;
  MeanCorrection correction = MeanCorrection::kHalf;
  double hessian_rel_step = 1e-3;

  double eta = 0.8;
  bool symmetric = false;
  StabilityKind mode = StabilityKind::kDro;
  McConfig mc;
  int eval_draws = 2000;
  std::vector<double> margins{0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
  BnbOptions bnb;

  std::string resolve(const std::string& p) const {
    if (p.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (base / path).string();
  }
  std::string out(const std::string& name) const { return (fs::path(resolve(out_dir)) / name).string(); }

  json dataset_section() const {
    return {{"wind_levels", pipeline.wind_levels}, {"min_online", pipeline.policy.min_online}};
  }
  json regression_section() const {
    const auto& r = pipeline.regression;
    json j{{"g_lim", r.g_lim}, {"nu", r.nu}, {"r", r.r}, {"sharp", r.sharp}, {"prune", pipeline.prune}};
    if (r.s) j["s"] = *r.s;
    if (r.big_m) j["big_m"] = *r.big_m;
    return j;
  }
  json uncertainty_section() const {
    return {{"sources", sources},
            {"cv", cv},
            {"correction", to_string(correction)},
            {"hessian_rel_step", hessian_rel_step}};
  }
  json mc_section() const {
    return {{"samples", mc.samples}, {"cvs", mc.cvs}, {"trace_stride", mc.trace_stride}, {"seed", seed}};
  }
};

std::string section_hash(const json& j) { return fnv1a_hex(j.dump()); }

Config load_config(const std::string& path) {
  Config c;
  c.base = fs::absolute(fs::path(path)).parent_path();
  const json j = read_json_file(path);
  try {
    c.network = j.value("network", "");
    c.instance = j.value("instance", "");
    c.out_dir = j.value("output_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      c.pipeline.wind_levels = d.value("wind_levels", c.pipeline.wind_levels);
      c.pipeline.policy.min_online = d.value("min_online", 1);
    } else {
      c.pipeline.policy.min_online = 1;
    }
    if (j.contains("regression")) {
      const auto& r = j["regression"];
      auto& cfg = c.pipeline.regression;
      cfg.g_lim = r.at("g_lim").get<double>();
      cfg.nu = r.at("nu").get<double>();
      cfg.r = r.value("r", cfg.r);
      cfg.sharp = r.value("sharp", false);
      if (r.contains("s")) cfg.s = r["s"].get<double>();
      if (r.contains("big_m")) cfg.big_m = r["big_m"].get<double>();
      c.pipeline.prune = r.value("prune", false);
    } else {
      throw InputError("config has no regression section");
    }
    if (j.contains("uncertainty")) {
      const auto& u = j["uncertainty"];
      if (u.contains("sources") && u["sources"].is_array()) c.sources = u["sources"].get<std::vector<int>>();
      c.cv = u.value("cv", c.cv);
      c.correction = mean_correction_from_string(u.value("correction", std::string("half")));
      c.hessian_rel_step = u.value("hessian_rel_step", c.hessian_rel_step);
    }
    c.eta = j.value("eta", c.eta);
    c.symmetric = j.value("symmetric", c.symmetric);
    if (j.contains("mode")) c.mode = stability_kind_from_string(j["mode"].get<std::string>());
    if (j.contains("mc")) {
      const auto& m = j["mc"];
      c.mc.samples = m.value("samples", c.mc.samples);
      if (m.contains("cvs")) c.mc.cvs = m["cvs"].get<std::vector<double>>();
      c.mc.trace_stride = m.value("trace_stride", c.mc.trace_stride);
    }
    if (j.contains("evaluation")) c.eval_draws = j["evaluation"].value("draws", c.eval_draws);
    if (j.contains("margins")) c.margins = j["margins"].get<std::vector<double>>();
    if (j.contains("bnb")) {
      c.bnb.gap = j["bnb"].value("gap", c.bnb.gap);
      c.bnb.node_limit = j["bnb"].value("node_limit", c.bnb.node_limit);
    }
  } catch (const json::exception& e) {
    throw InputError("malformed config " + path + ": " + e.what());
  }
  if (!(c.eta > 0.0 && c.eta < 1.0)) throw DomainError("eta must lie in (0, 1)");
  return c;
}

struct Context {
  Config cfg;
  GridModel grid;
  std::string network_hash;

  std::vector<int> sources() const {
    if (!cfg.sources.empty()) return cfg.sources;
    std::vector<int> all(grid.num_sources());
    for (int i = 0; i < grid.num_sources(); ++i) all[i] = i;
    return all;
  }
  UncertainParameterSpec spec() const { return UncertainParameterSpec::from_cv(grid, sources(), cfg.cv); }
};

Context open_context(const Config& cfg) {
  if (cfg.network.empty()) throw InputError("config names no network file");
  Context ctx{cfg, load_grid(cfg.resolve(cfg.network)), file_hash(cfg.resolve(cfg.network))};
  return ctx;
}

// Lineage checks, upstream first.

std::string check_dataset(const Context& ctx) {
  return verify_artifact(ctx.cfg.out("dataset.csv"),
                         {{"network", ctx.network_hash}, {"dataset_settings", section_hash(ctx.cfg.dataset_section())}});
}

std::string check_fit(const Context& ctx) {
  const auto dataset = check_dataset(ctx);
  return verify_artifact(ctx.cfg.out("fit.json"),
                         {{"dataset.csv", dataset}, {"regression_settings", section_hash(ctx.cfg.regression_section())}});
}

std::string check_moments(const Context& ctx) {
  const auto fit = check_fit(ctx);
  return verify_artifact(ctx.cfg.out("moments.json"),
                         {{"fit.json", fit}, {"uncertainty_settings", section_hash(ctx.cfg.uncertainty_section())}});
}

Pipeline load_pipeline(const Context& ctx) {
  auto data = dataset_from_csv(read_text_file(ctx.cfg.out("dataset.csv")), ctx.grid);
  return make_pipeline(ctx.grid, std::move(data), ctx.cfg.pipeline, ctx.sources());
}

Eigen::VectorXd nominal_parameters(const Context& ctx) {
  const auto s = ctx.spec();
  return s.mean;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_gen_data(const Config& cfg) {
  const auto ctx = open_context(cfg);
  const auto data = generate_dataset(ctx.grid, cfg.pipeline.wind_levels, cfg.pipeline.policy);
  write_artifact(cfg.out("dataset.csv"), dataset_to_csv(data, ctx.grid),
                 {{"network", ctx.network_hash}, {"dataset_settings", section_hash(cfg.dataset_section())}});
  const auto part = partition(data.labels(), cfg.pipeline.regression.g_lim, cfg.pipeline.regression.nu);
  std::printf("samples %d, skipped %zu\n", data.size(), data.skipped.size());
  for (const auto& s : data.skipped) std::printf("  skipped wind %g: %s\n", s.wind, s.reason.c_str());
  std::printf("class balance at nu = %g: below %zu, band %zu, above %zu\n", cfg.pipeline.regression.nu,
              part.below.size(), part.boundary.size(), part.above.size());
  return 0;
}

int cmd_fit(const Config& cfg) {
  const auto ctx = open_context(cfg);
  const auto dataset = check_dataset(ctx);
  const auto pl = load_pipeline(ctx);
  const auto fit = fit_smooth(pl.design, pl.data.labels(), pl.cfg);
  const json j = fit_to_json(fit, pl.cfg);
  write_artifact(cfg.out("fit.json"), dump_json(j),
                 {{"dataset.csv", dataset}, {"regression_settings", section_hash(cfg.regression_section())}});
  std::printf("fit: %zu active rows, stationarity %.3e, objective %.6g\n", fit.active.size(), fit.stationarity,
              fit.objective);
  print_json(j["coefficients"]);
  return 0;
}

int cmd_propagate(const Config& cfg) {
  const auto ctx = open_context(cfg);
  const auto fit_hash = check_fit(ctx);
  const auto pl = load_pipeline(ctx);
  const auto spec = ctx.spec();
  const auto res = analytic_moments(pl, spec, cfg.correction, cfg.hessian_rel_step);
  write_artifact(cfg.out("moments.json"), dump_json(moments_to_json(res.moments, spec)),
                 {{"fit.json", fit_hash}, {"uncertainty_settings", section_hash(cfg.uncertainty_section())}});
  std::printf("moments: %lld coefficients, %d fallbacks\n", static_cast<long long>(res.moments.mu.size()),
              res.moments.fallbacks);
  for (const auto& n : res.moments.notes) std::printf("  note: %s\n", n.c_str());
  return 0;
}

McConfig mc_config(const Config& cfg) {
  McConfig m = cfg.mc;
  m.seed = cfg.seed;
  m.threads = cfg.threads;
  return m;
}

int cmd_validate_mc(const Config& cfg) {
  const auto ctx = open_context(cfg);
  const auto moments_hash = check_moments(ctx);
  const auto analytic = moments_from_json(read_json_file(cfg.out("moments.json")));
  const auto pl = load_pipeline(ctx);
  const auto mc = mc_moments(pl, ctx.spec(), mc_config(cfg));
  const auto m = mape(analytic, mc);
  const InputHashes inputs{{"moments.json", moments_hash}, {"mc_settings", section_hash(cfg.mc_section())}};
  write_artifact(cfg.out("mc_table.csv"), mc_table_csv(m), inputs);
  write_artifact(cfg.out("mc_trace.csv"), mc_trace_csv(mc), inputs);
  json summary{{"mape_mu", m.mape_mu},        {"mape_var", m.mape_var},    {"samples", mc.requested},
               {"effective", mc.effective},   {"dropped", mc.dropped},     {"valid", mc.valid},
               {"excluded_mu", m.excluded_mu}, {"excluded_var", m.excluded_var}, {"seed", cfg.seed},
               {"cv", cfg.cv}};
  write_artifact(cfg.out("mc_summary.json"), dump_json(summary), inputs);
  print_json(summary);
  return mc.valid ? 0 : 1;
}

int cmd_cv_sweep(const Config& cfg) {
  const auto ctx = open_context(cfg);
  const auto dataset = check_dataset(ctx);
  const auto pl = load_pipeline(ctx);
  const auto rows = cv_sweep(pl, mc_config(cfg), cfg.correction);
  write_artifact(cfg.out("cv_sweep.csv"), cv_sweep_csv(rows),
                 {{"dataset.csv", dataset},
                  {"regression_settings", section_hash(cfg.regression_section())},
                  {"mc_settings", section_hash(cfg.mc_section())}});
  for (const auto& r : rows) std::printf("cv %.2f: MAPE mu %.4f%%, var %.4f%%\n", r.cv, r.mape.mape_mu, r.mape.mape_var);
  return 0;
}

struct Modeled {
  StabilityMode mode;
  InputHashes inputs;
  std::optional<SocStabilityConstraint<double>> soc;
};

Modeled stability_mode(const Context& ctx, StabilityKind kind) {
  const auto& cfg = ctx.cfg;
  Modeled m;
  const double g_lim = cfg.pipeline.regression.g_lim;
  m.inputs["mode"] = to_string(kind);
  switch (kind) {
    case StabilityKind::kNone:
      m.mode = StabilityMode::none();
      break;
    case StabilityKind::kDeterministic: {
      m.inputs["fit.json"] = check_fit(ctx);
      m.mode = StabilityMode::deterministic(coefficients_from_json(read_json_file(cfg.out("fit.json"))), g_lim);
      break;
    }
    case StabilityKind::kDro: {
      m.inputs["moments.json"] = check_moments(ctx);
      m.inputs["eta"] = format_double(cfg.eta) + (cfg.symmetric ? " symmetric" : "");
      const auto mom = moments_from_json(read_json_file(cfg.out("moments.json")));
      m.soc = make_soc_constraint<double>(mom.mu, mom.sigma, g_lim, cfg.eta, cfg.symmetric);
      m.mode = StabilityMode::dro(*m.soc);
      break;
    }
  }
  return m;
}

std::string schedule_name(StabilityKind k) { return "schedule_" + to_string(k); }

int cmd_schedule(const Config& cfg) {
  const auto ctx = open_context(cfg);
  if (cfg.instance.empty()) throw InputError("config names no instance file");
  const auto inst_path = cfg.resolve(cfg.instance);
  const auto inst = load_instance(inst_path);
  auto modeled = stability_mode(ctx, cfg.mode);
  modeled.inputs["instance"] = file_hash(inst_path);
  modeled.inputs["network"] = ctx.network_hash;
  const auto sched = solve_uc(build_uc(inst, ctx.grid, modeled.mode), cfg.bnb);

  const double g_lim = cfg.pipeline.regression.g_lim;
  const auto viol = violation_rate(sched, inst, ctx.grid, ctx.spec(), g_lim, cfg.eval_draws, cfg.seed, cfg.threads);
  double g_lim_eq = g_lim;
  if (modeled.soc) {
    std::vector<Eigen::VectorXd> steps;
    for (const auto& per_scenario : sched.decisions) steps.insert(steps.end(), per_scenario.begin(), per_scenario.end());
    g_lim_eq = equivalent_limit(*modeled.soc, steps);
  }
  json summary{{"mode", to_string(cfg.mode)},
               {"cost", sched.cost},
               {"cost_per_hour", sched.cost_per_hour},
               {"violation_rate", viol.rate},
               {"violation_draws", viol.draws},
               {"g_lim", g_lim},
               {"g_lim_eq", g_lim_eq},
               {"nodes", sched.stats.nodes},
               {"gap", sched.stats.gap},
               {"node_limit_hit", sched.stats.node_limit_hit},
               {"max_product_error", sched.max_product_error},
               {"seed", cfg.seed}};
  if (cfg.mode == StabilityKind::kDro) summary["eta"] = cfg.eta;
  const auto name = schedule_name(cfg.mode);
  write_artifact(cfg.out(name + ".csv"), schedule_to_csv(sched, inst), modeled.inputs);
  auto summary_inputs = modeled.inputs;
  summary_inputs["seed"] = std::to_string(cfg.seed);
  write_artifact(cfg.out(name + "_summary.json"), dump_json(summary), summary_inputs);
  print_json(summary);
  return sched.stats.node_limit_hit ? 1 : 0;
}

int cmd_evaluate(const Config& cfg) {
  const auto ctx = open_context(cfg);
  if (cfg.instance.empty()) throw InputError("config names no instance file");
  const auto inst_path = cfg.resolve(cfg.instance);
  const auto inst = load_instance(inst_path);
  const auto name = schedule_name(cfg.mode);
  const auto sched_hash =
      verify_artifact(cfg.out(name + ".csv"), {{"instance", file_hash(inst_path)}, {"network", ctx.network_hash}});
  const auto sched = schedule_from_csv(read_text_file(cfg.out(name + ".csv")), inst);
  const double g_lim = cfg.pipeline.regression.g_lim;
  const auto spec = ctx.spec();
  const auto nominal = evaluate_schedule(sched, inst, ctx.grid, reactances_with(ctx.grid, spec.sources, spec.mean), g_lim);
  const auto viol = violation_rate(sched, inst, ctx.grid, spec, g_lim, cfg.eval_draws, cfg.seed, cfg.threads);
  const InputHashes inputs{{name + ".csv", sched_hash}, {"seed", std::to_string(cfg.seed)}};
  write_artifact(cfg.out("evaluation_" + to_string(cfg.mode) + ".csv"), evaluation_csv(nominal), inputs);
  json summary{{"mode", to_string(cfg.mode)},
               {"nominal_violation_rate", nominal.violation_rate},
               {"violation_rate", viol.rate},
               {"violations", viol.violations},
               {"checks", viol.checks},
               {"g_lim", g_lim}};
  write_artifact(cfg.out("evaluation_" + to_string(cfg.mode) + "_summary.json"), dump_json(summary), inputs);
  print_json(summary);
  return 0;
}

int cmd_margin_baseline(const Config& cfg) {
  const auto ctx = open_context(cfg);
  if (cfg.instance.empty()) throw InputError("config names no instance file");
  const auto inst_path = cfg.resolve(cfg.instance);
  const auto inst = load_instance(inst_path);
  const auto det = stability_mode(ctx, StabilityKind::kDeterministic);
  const auto dro = stability_mode(ctx, StabilityKind::kDro);
  const double g_lim = cfg.pipeline.regression.g_lim;
  const auto spec = ctx.spec();
  const auto mb = fixed_margin_baseline(inst, ctx.grid, det.mode.k, g_lim, cfg.margins, spec, cfg.eval_draws, cfg.seed,
                                        cfg.bnb, cfg.threads);
  const auto dro_sched = solve_uc(build_uc(inst, ctx.grid, dro.mode), cfg.bnb);
  const auto dro_viol = violation_rate(dro_sched, inst, ctx.grid, spec, g_lim, cfg.eval_draws, cfg.seed, cfg.threads);
  InputHashes inputs{{"fit.json", det.inputs.at("fit.json")},
                     {"moments.json", dro.inputs.at("moments.json")},
                     {"instance", file_hash(inst_path)},
                     {"seed", std::to_string(cfg.seed)}};
  write_artifact(cfg.out("margin_baseline.csv"), margin_baseline_csv(mb), inputs);
  json summary{{"dro_cost", dro_sched.cost}, {"dro_violation_rate", dro_viol.rate}, {"eta", cfg.eta}};
  if (mb.first_zero_violation) {
    const auto& row = mb.rows[*mb.first_zero_violation];
    summary["zero_violation_margin_percent"] = row.margin * 100.0;
    summary["zero_violation_cost"] = row.cost;
  } else {
    summary["zero_violation_margin_percent"] = nullptr;
    summary["zero_violation_cost"] = nullptr;
  }
  write_artifact(cfg.out("margin_baseline_summary.json"), dump_json(summary), inputs);
  print_json(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability-constrained scheduling under dynamic-parameter uncertainty"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path = "config.json";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> mode;
  std::optional<double> eta;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "Configuration file")->capture_default_str();
  app.add_option("--seed", seed, "Root seed");
  app.add_option("--threads", threads, "Worker cap (0: all cores)");
  app.add_option("--mode", mode, "Stability mode")->check(CLI::IsMember({"none", "det", "dro"}));
  app.add_option("--eta", eta, "Chance-constraint confidence level");
  app.add_option("--out", out_dir, "Output directory (overrides the config)");

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Config&);
  };
  const Sub subs[] = {
      {"gen-data", "Generate the labeled dataset", cmd_gen_data},
      {"fit", "Fit the smoothed surrogate on the dataset", cmd_fit},
      {"propagate", "Propagate parameter moments to the coefficients", cmd_propagate},
      {"validate-mc", "Monte Carlo check of the propagated moments", cmd_validate_mc},
      {"schedule", "Solve the unit commitment in the configured mode", cmd_schedule},
      {"evaluate", "True-index evaluation of a written schedule", cmd_evaluate},
      {"cv-sweep", "Moment accuracy over coefficients of variation", cmd_cv_sweep},
      {"margin-baseline", "Fixed stability margins against the robust schedule", cmd_margin_baseline},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    Config cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (mode) cfg.mode = stability_kind_from_string(*mode);
    if (eta) {
      if (!(*eta > 0.0 && *eta < 1.0)) throw DomainError("eta must lie in (0, 1)");
      cfg.eta = *eta;
    }
    if (out_dir) cfg.out_dir = fs::absolute(*out_dir).string();
    for (const auto& s : subs) {
      if (app.got_subcommand(s.name)) return s.run(cfg);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const StaleArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
