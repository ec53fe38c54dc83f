#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppfactor/pursuit.hpp"
#include "json.hpp"

namespace ppfactor {

using Json = nlohmann::ordered_json;

enum class ExperimentMode { Simulate, Ingest };
enum class MethodChoice { Ours, Huber, Both };

// Outlier injection: the last `count` rows of a simulated sample are replaced by `point`.
struct OutlierSpec {
  int count = 0;
  Vec point;
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::Simulate;
  Json density_spec;  // kept as given, echoed in the report
  std::string data_path;
  int d = 0;
  int m = 0;
  MethodChoice method = MethodChoice::Ours;
  OutlierSpec outliers;
  std::string instrumental_generator = "gaussian";
  double generator_param = 1.0;
  int kl_mc = 20000;  // Monte-Carlo size of the KL-to-truth row; 0 disables it
  PursuitConfig pursuit;
  std::string output_dir = "out";
  Json echo;  // the parsed document with defaults filled in

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct RunArtifacts {
  std::filesystem::path report_json, table_csv, trace_csv, log;
  bool pursuit_failed = false;  // some pursuit aborted on a numerical error; artifacts hold the partial report
  std::string failure;
};

// Parses and validates a config document. Unknown keys are rejected. Relative data paths
// are resolved against `base_dir`.
ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config_file(const std::filesystem::path& path);

// Config document for the built-in simulations "sim1", "sim2", "sim3".
Json preset_config(const std::string& name);

// Builds the ground-truth density described by a density_spec object.
AnalyticPtr build_density(const Json& spec, int d);

// Draws the configured simulated sample (outliers included); simulate mode only.
Mat simulate_sample(const ExperimentConfig& cfg);

struct IngestResult {
  Mat data;
  int dropped_nonfinite = 0;
  bool had_header = false;
};

// Reads a comma-separated file with d numeric columns and an optional header line.
// Rows holding NaN or infinite values are dropped and counted. A row with the wrong
// number of columns raises ConfigError citing its line number.
IngestResult ingest_sample(const std::filesystem::path& path, int d);

// Rounds to the six significant digits used in every artifact.
double round6(double x);

Json report_to_json(const PursuitReport& report);

// Runs the configured experiment and writes report.json, table.csv, trace.csv and run.log
// under cfg.output_dir. Errors after the output directory exists leave a report.json with
// "failed": true before rethrowing.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

}  // namespace ppfactor
