#include "stabdro/artifacts.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace stabdro {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
  if (!out) throw InputError("write failed for " + path);
}

std::string file_hash(const std::string& path) { return fnv1a_hex(read_text_file(path)); }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string meta_path(const std::string& path) { return path + ".meta.json"; }

void write_artifact(const std::string& path, const std::string& content, const InputHashes& inputs) {
  write_text_file(path, content);
  nlohmann::json meta;
  meta["file"] = std::filesystem::path(path).filename().string();
  meta["hash"] = fnv1a_hex(content);
  meta["inputs"] = inputs;
  write_text_file(meta_path(path), dump_json(meta));
}

std::string verify_artifact(const std::string& path, const InputHashes& expected) {
  const std::string content = read_text_file(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(meta_path(path)));
  } catch (const nlohmann::json::exception&) {
    throw StaleArtifactError("unreadable lineage record for " + path);
  }
  const std::string hash = fnv1a_hex(content);
  if (meta.value("hash", "") != hash) throw StaleArtifactError(path + " was modified after it was written");
  const auto recorded = meta.value("inputs", nlohmann::json::object());
  for (const auto& [name, h] : expected) {
    if (!recorded.contains(name) || recorded.at(name).get<std::string>() != h) {
      throw StaleArtifactError(path + " is stale: input '" + name + "' changed; rerun the producing command");
    }
  }
  return hash;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (in_row_ > 0) out_ += ',';
  if (s.find_first_of(",\"\n") != std::string::npos) {
    out_ += '"';
    for (char c : s) {
      if (c == '"') out_ += '"';
      out_ += c;
    }
    out_ += '"';
  } else {
    out_ += s;
  }
  ++in_row_;
  return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }
CsvWriter& CsvWriter::cell(long v) { return cell(std::to_string(v)); }

void CsvWriter::end_row() {
  if (in_row_ != columns_) throw Error("csv row has the wrong number of cells");
  out_ += '\n';
  in_row_ = 0;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("empty csv");
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw InputError("ragged csv row");
  }
  return rows;
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InputError("bad number '" + s + "' in csv");
  return v;
}

int column_of(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw InputError("csv has no column '" + name + "'");
}

nlohmann::json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) j.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return j;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = vector_from_json(j.at(i));
    if (row.size() != n) throw InputError("covariance matrix is not square");
    m.row(i) = row.transpose();
  }
  return m;
}

}  // namespace

std::string dataset_to_csv(const Dataset& data, const GridModel& grid) {
  std::vector<std::string> header{"sample"};
  for (const auto& s : grid.sources) header.push_back(s.name);
  header.insert(header.end(), {"wind", "g"});
  CsvWriter w(header);
  for (int i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    w.cell(i);
    for (int c : s.commitment) w.cell(c);
    w.cell(s.wind).cell(s.g);
    w.end_row();
  }
  return w.str();
}

Dataset dataset_from_csv(const std::string& text, const GridModel& grid) {
  const auto rows = parse_csv(text);
  const auto& header = rows.front();
  std::vector<int> flag_cols;
  for (const auto& s : grid.sources) flag_cols.push_back(column_of(header, s.name));
  const int wind_col = column_of(header, "wind");
  const int g_col = column_of(header, "g");
  Dataset data;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    TrainingSample s;
    for (int c : flag_cols) {
      const double f = parse_double(rows[r][c]);
      if (f != 0.0 && f != 1.0) throw InputError("commitment flag must be 0 or 1");
      s.commitment.push_back(static_cast<int>(f));
    }
    s.wind = parse_double(rows[r][wind_col]);
    s.g = parse_double(rows[r][g_col]);
    s.x = make_augmented(s.commitment, s.wind);
    data.samples.push_back(std::move(s));
  }
  return data;
}

nlohmann::json fit_to_json(const CoefficientFit& fit, const SmoothRegressionConfig& cfg) {
  nlohmann::json j;
  j["coefficients"] = to_json(fit.coefficients);
  j["objective"] = fit.objective;
  j["stationarity"] = fit.stationarity;
  j["max_violation"] = fit.max_violation;
  j["complementarity"] = fit.complementarity;
  j["iterations"] = fit.iterations;
  auto active = nlohmann::json::array();
  for (const auto& a : fit.active) {
    active.push_back({{"row", a.row},
                      {"sample", a.sample},
                      {"family", a.family == ConstraintFamily::kUpper ? "upper" : "lower"},
                      {"multiplier", a.multiplier}});
  }
  j["active"] = active;
  std::vector<int> cols;
  for (char c : fit.columns) cols.push_back(c ? 1 : 0);
  j["columns"] = cols;
  j["config"] = {{"g_lim", cfg.g_lim}, {"nu", cfg.nu},        {"s", cfg.scale()},
                 {"r", cfg.r},         {"big_m", *cfg.big_m}, {"sharp", cfg.sharp}};
  return j;
}

Eigen::VectorXd coefficients_from_json(const nlohmann::json& j) {
  try {
    return vector_from_json(j.at("coefficients"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fit artifact: ") + e.what());
  }
}

nlohmann::json spec_to_json(const UncertainParameterSpec& spec) {
  nlohmann::json j;
  j["sources"] = spec.sources;
  j["mean"] = to_json(spec.mean);
  j["variance"] = to_json(spec.variance);
  if (spec.covariance) j["covariance"] = to_json(*spec.covariance);
  return j;
}

UncertainParameterSpec spec_from_json(const nlohmann::json& j) {
  UncertainParameterSpec spec;
  spec.sources = j.at("sources").get<std::vector<int>>();
  spec.mean = vector_from_json(j.at("mean"));
  spec.variance = vector_from_json(j.at("variance"));
  if (j.contains("covariance")) spec.covariance = matrix_from_json(j.at("covariance"));
  spec.validate();
  return spec;
}

nlohmann::json moments_to_json(const MomentEstimate& m, const UncertainParameterSpec& spec) {
  nlohmann::json j;
  j["mu"] = to_json(m.mu);
  j["sigma"] = to_json(m.sigma);
  j["correction"] = to_string(m.correction);
  j["hessian_rel_step"] = m.hessian_rel_step;
  j["fallbacks"] = m.fallbacks;
  j["notes"] = m.notes;
  j["spec"] = spec_to_json(spec);
  return j;
}

MomentEstimate moments_from_json(const nlohmann::json& j) {
  try {
    MomentEstimate m;
    m.mu = vector_from_json(j.at("mu"));
    m.sigma = matrix_from_json(j.at("sigma"));
    if (m.sigma.rows() != m.mu.size()) throw InputError("moment dimensions differ");
    m.correction = mean_correction_from_string(j.at("correction").get<std::string>());
    m.hessian_rel_step = j.at("hessian_rel_step").get<double>();
    m.fallbacks = j.at("fallbacks").get<int>();
    m.notes = j.at("notes").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed moments artifact: ") + e.what());
  }
}

std::string mc_table_csv(const MapeResult& r) {
  CsvWriter w({"coefficient", "analytic_mu", "mc_mu", "e_mu_percent", "analytic_var", "mc_var", "e_var_percent",
               "excluded"});
  for (const auto& row : r.rows) {
    std::string excluded = row.excluded_mu ? (row.excluded_var ? "mu+var" : "mu") : (row.excluded_var ? "var" : "");
    w.cell(row.index).cell(row.analytic_mu).cell(row.mc_mu).cell(row.e_mu);
    w.cell(row.analytic_var).cell(row.mc_var).cell(row.e_var).cell(excluded);
    w.end_row();
  }
  return w.str();
}

std::string mc_trace_csv(const McResult& r) {
  std::vector<std::string> header{"n"};
  const auto k = r.mu.size();
  for (Eigen::Index i = 0; i < k; ++i) header.push_back("mean_k" + std::to_string(i));
  CsvWriter w(header);
  for (const auto& [n, mean] : r.trace) {
    w.cell(n);
    for (Eigen::Index i = 0; i < k; ++i) w.cell(mean(i));
    w.end_row();
  }
  return w.str();
}

std::string cv_sweep_csv(const std::vector<CvSweepRow>& rows) {
  CsvWriter w({"cv", "mape_mu", "mape_var", "mc_effective", "mc_dropped"});
  for (const auto& r : rows) {
    w.cell(r.cv).cell(r.mape.mape_mu).cell(r.mape.mape_var).cell(r.mc.effective).cell(r.mc.dropped);
    w.end_row();
  }
  return w.str();
}

std::string schedule_to_csv(const Schedule& sched, const UcInstance& inst) {
  std::vector<std::string> header{"step", "scenario"};
  for (const auto& u : inst.units) header.push_back("on_" + u.name);
  for (const auto& u : inst.units) header.push_back("p_" + u.name);
  header.insert(header.end(), {"wind", "shed", "margin"});
  CsvWriter w(header);
  for (int s = 0; s < sched.scenarios; ++s) {
    for (int t = 0; t < sched.horizon; ++t) {
      w.cell(t).cell(s);
      for (int g = 0; g < sched.units; ++g) w.cell(sched.commitment[g][t]);
      for (int g = 0; g < sched.units; ++g) w.cell(sched.dispatch[s][g][t]);
      w.cell(sched.wind[s][t]).cell(sched.shed[s][t]).cell(sched.margin[s][t]);
      w.end_row();
    }
  }
  return w.str();
}

Schedule schedule_from_csv(const std::string& text, const UcInstance& inst) {
  const auto rows = parse_csv(text);
  const auto& header = rows.front();
  const int step_col = column_of(header, "step");
  const int scen_col = column_of(header, "scenario");
  const int wind_col = column_of(header, "wind");
  const int shed_col = column_of(header, "shed");
  const int margin_col = column_of(header, "margin");
  std::vector<int> on_cols, p_cols;
  for (const auto& u : inst.units) {
    on_cols.push_back(column_of(header, "on_" + u.name));
    p_cols.push_back(column_of(header, "p_" + u.name));
  }
  Schedule sc;
  sc.horizon = inst.horizon;
  sc.units = inst.num_units();
  sc.scenarios = static_cast<int>(inst.scenarios.size());
  sc.commitment.assign(sc.units, std::vector<int>(sc.horizon, 0));
  sc.dispatch.assign(sc.scenarios, std::vector<std::vector<double>>(sc.units, std::vector<double>(sc.horizon)));
  sc.wind.assign(sc.scenarios, std::vector<double>(sc.horizon));
  sc.shed = sc.wind;
  sc.margin = sc.wind;
  if (rows.size() != static_cast<std::size_t>(sc.horizon * sc.scenarios) + 1) {
    throw InputError("schedule does not cover the instance horizon");
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const int t = static_cast<int>(parse_double(rows[r][step_col]));
    const int s = static_cast<int>(parse_double(rows[r][scen_col]));
    if (t < 0 || t >= sc.horizon || s < 0 || s >= sc.scenarios) throw InputError("schedule row out of range");
    for (int g = 0; g < sc.units; ++g) {
      sc.commitment[g][t] = static_cast<int>(parse_double(rows[r][on_cols[g]]));
      sc.dispatch[s][g][t] = parse_double(rows[r][p_cols[g]]);
    }
    sc.wind[s][t] = parse_double(rows[r][wind_col]);
    sc.shed[s][t] = parse_double(rows[r][shed_col]);
    sc.margin[s][t] = parse_double(rows[r][margin_col]);
  }
  return sc;
}

std::string evaluation_csv(const ScheduleEvaluation& ev) {
  CsvWriter w({"step", "scenario", "index", "violated", "reason"});
  for (const auto& st : ev.steps) {
    w.cell(st.step).cell(st.scenario).cell(st.index).cell(st.violated ? 1 : 0).cell(st.reason);
    w.end_row();
  }
  return w.str();
}

std::string margin_baseline_csv(const MarginBaseline& mb) {
  CsvWriter w({"margin_percent", "feasible", "cost", "cost_per_hour", "violation_rate"});
  for (const auto& r : mb.rows) {
    w.cell(r.margin * 100.0).cell(r.feasible ? 1 : 0).cell(r.cost).cell(r.cost_per_hour).cell(r.violation.rate);
    w.end_row();
  }
  return w.str();
}

}  // namespace stabdro
