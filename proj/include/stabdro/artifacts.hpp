#pragma once

// On-disk artifacts: CSV tables, JSON documents with sorted keys, and a
// sidecar "<file>.meta.json" holding the FNV-1a hash of the file and of every
// input it was derived from. Downstream commands check the sidecar before use.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stabdro/mc.hpp"
#include "stabdro/regression.hpp"
#include "stabdro/sensitivity.hpp"
#include "stabdro/uc.hpp"

namespace stabdro {

std::uint64_t fnv1a(std::string_view bytes);
std::string fnv1a_hex(std::string_view bytes);

/// InputError when the file cannot be read.
std::string read_text_file(const std::string& path);
/// Creates missing parent directories.
void write_text_file(const std::string& path, const std::string& content);
std::string file_hash(const std::string& path);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// 2-space indented dump with a trailing newline; keys are sorted.
std::string dump_json(const nlohmann::json& j);

using InputHashes = std::map<std::string, std::string>;

std::string meta_path(const std::string& path);

/// Writes the artifact and its sidecar.
void write_artifact(const std::string& path, const std::string& content, const InputHashes& inputs);

/// Checks that the file matches its sidecar and that every expected input
/// hash matches the recorded one. InputError when missing, StaleArtifactError
/// on any mismatch. Returns the artifact's hash.
std::string verify_artifact(const std::string& path, const InputHashes& expected);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& cell(const std::string& s);
  CsvWriter& cell(double v);
  CsvWriter& cell(long v);
  CsvWriter& cell(int v) { return cell(static_cast<long>(v)); }
  void end_row();
  std::string str() const { return out_; }

 private:
  std::size_t columns_;
  std::size_t in_row_ = 0;
  std::string out_;
};

/// Header row then data rows; InputError on ragged rows.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Dataset: sample, one flag column per source, wind, g.
std::string dataset_to_csv(const Dataset& data, const GridModel& grid);
Dataset dataset_from_csv(const std::string& text, const GridModel& grid);

nlohmann::json fit_to_json(const CoefficientFit& fit, const SmoothRegressionConfig& cfg);
Eigen::VectorXd coefficients_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const UncertainParameterSpec& spec);
UncertainParameterSpec spec_from_json(const nlohmann::json& j);

nlohmann::json moments_to_json(const MomentEstimate& m, const UncertainParameterSpec& spec);
MomentEstimate moments_from_json(const nlohmann::json& j);

std::string mc_table_csv(const MapeResult& r);
std::string mc_trace_csv(const McResult& r);
std::string cv_sweep_csv(const std::vector<CvSweepRow>& rows);

/// step, scenario, one flag and dispatch column per unit, wind, shed, margin
std::string schedule_to_csv(const Schedule& sched, const UcInstance& inst);
/// Commitments and wind of a schedule written by schedule_to_csv.
Schedule schedule_from_csv(const std::string& text, const UcInstance& inst);

std::string evaluation_csv(const ScheduleEvaluation& ev);
std::string margin_baseline_csv(const MarginBaseline& mb);

}  // namespace stabdro
