#pragma once

// Config-driven pipeline: simulate -> train forecaster -> calibrate/evaluate
// -> (adapt/evaluate) -> report. Residual caches are the contract between the
// forecaster stage and the conformal stage.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcp/adaptation.hpp"
#include "relcp/core_data.hpp"
#include "relcp/forecaster.hpp"
#include "relcp/gpvar.hpp"
#include "relcp/intervals.hpp"
#include "relcp/relqn.hpp"

namespace relcp {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct DatasetConfig {
  std::string kind = "gpvar";  // gpvar | csv
  std::string name = "gpvar";
  std::size_t nodes = 60;
  std::size_t communities = 5;
  std::size_t steps = 40000;
  std::size_t burn_in = 100;
  gpvar::GPVARParams params = gpvar::GPVARParams::benchmark();
  std::uint64_t seed = 0;
  std::filesystem::path values_csv;
  std::vector<std::filesystem::path> covariate_csvs;
};

struct MethodConfig {
  std::string name = "scp";  // scp | nexcp | seqcp | cornn | corel
  double rho = 0.999;
  std::size_t window = 500;
  bool stream = false;
  bool true_graph = false;
  RelQNConfig relqn;

  [[nodiscard]] bool learned() const { return name == "corel" || name == "cornn"; }
  /// Label used in reports and file names, e.g. "corel-true-graph".
  [[nodiscard]] std::string label() const;
};

struct ExperimentConfig {
  nlohmann::json source;  // the document after command-line overrides
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  SplitSpec split;
  std::string base_model = "rnn";
  ForecasterConfig forecaster;
  MethodConfig method;
  std::vector<double> alphas{0.1};
  bool beta_intervals = false;
  AdaptationConfig adaptation;
  std::filesystem::path output_dir = "runs/default";

  [[nodiscard]] std::string hash() const;
  /// Hashes of the parts each stage depends on.
  [[nodiscard]] std::string data_hash() const;
  [[nodiscard]] std::string forecaster_hash() const;
  [[nodiscard]] std::string method_hash() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::vector<double> alphas;
  std::optional<std::string> method;
  bool true_graph = false;
  bool beta_intervals = false;
  std::optional<std::filesystem::path> out;
};

/// Parses a config document (throws ConfigError on invalid content).
ExperimentConfig parse_config(nlohmann::json doc, const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

struct RunOptions {
  bool resume = false;
  bool verbose = true;
};

/// Artifact layout under the output directory.
struct RunPaths {
  std::filesystem::path root;
  [[nodiscard]] std::filesystem::path data_csv() const { return root / "data" / "values.csv"; }
  [[nodiscard]] std::filesystem::path data_sidecar() const { return root / "data" / "sidecar.json"; }
  [[nodiscard]] std::filesystem::path forecaster() const { return root / "models" / "forecaster.json"; }
  [[nodiscard]] std::filesystem::path residuals(const std::string& part) const {
    return root / "residuals" / (part + ".csv");
  }
  [[nodiscard]] std::filesystem::path residual_meta() const { return root / "residuals" / "meta.json"; }
  [[nodiscard]] std::filesystem::path relqn(const std::string& label) const {
    return root / "models" / (label + ".json");
  }
  [[nodiscard]] std::filesystem::path graph_export(const std::string& label) const {
    return root / "reports" / (label + "_graph.csv");
  }
  [[nodiscard]] std::filesystem::path report(const std::string& stem) const {
    return root / "reports" / stem;
  }
  [[nodiscard]] std::filesystem::path manifest() const { return root / "manifest.json"; }
};

struct ResidualCache {
  ResidualSet calibration;
  ResidualSet test;
};

void cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt);
void cmd_train_forecaster(const ExperimentConfig& cfg, const RunOptions& opt);
std::vector<MetricReport> cmd_calibrate_evaluate(const ExperimentConfig& cfg, const RunOptions& opt);
std::vector<AdaptiveEvalResult> cmd_adapt_evaluate(const ExperimentConfig& cfg, const RunOptions& opt);

struct ReportRow {
  std::string dataset;
  std::string base_model;
  std::string method;
  double alpha = 0.0;
  std::size_t runs = 0;
  double delta_cov_mean = 0.0, delta_cov_std = 0.0;
  double pi_width_mean = 0.0, pi_width_std = 0.0;
  double winkler_mean = 0.0, winkler_std = 0.0;
};

/// Merges every metric report found under the run directories.
std::vector<ReportRow> aggregate_reports(const std::vector<std::filesystem::path>& run_dirs);
void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
/// One line per (row, metric): dataset,base_model,method,alpha,metric,mean,std.
void write_report_long_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
std::string format_report_table(const std::vector<ReportRow>& rows);

/// Loads the dataset a config refers to (simulated CSV or external CSVs).
TimeSeriesCollection load_dataset(const ExperimentConfig& cfg);
/// True adjacency of a simulated dataset (from the config, not the sidecar).
Matrix<double> true_adjacency(const ExperimentConfig& cfg);
ResidualCache load_residual_cache(const ExperimentConfig& cfg);

/// Residuals for every target step of `targets` (inputs may precede it).
ResidualSet residuals_for(const PointForecaster& model, const TimeSeriesCollection& data,
                          StepRange targets);

}  // namespace relcp
