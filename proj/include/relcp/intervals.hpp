#pragma once

// Quantile grids, prediction intervals (plain and beta-shifted) and the
// evaluation metrics: coverage gap, mean width and Winkler score.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcp/matrix.hpp"

namespace relcp {

/// Ordered quantile levels in (0, 1).
struct QuantileGrid {
  std::vector<double> levels;

  /// Levels i / divisions for i = 1 .. divisions - 1 (39 levels for 40).
  static QuantileGrid uniform(std::size_t divisions = 40);

  [[nodiscard]] std::size_t size() const noexcept { return levels.size(); }
  /// Index of a level within 1e-9, if present.
  [[nodiscard]] std::optional<std::size_t> index_of(double level) const;
  /// Value at `level` from per-level values `q`, linear between adjacent levels.
  /// Throws std::out_of_range outside [levels.front(), levels.back()].
  [[nodiscard]] double interpolate(std::span<const double> q, double level) const;
  void validate() const;
};

/// Predicted quantiles, laid out [step][node][level], in data units.
struct QuantilePrediction {
  QuantileGrid grid;
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::vector<double> values;
  std::vector<std::size_t> target_steps;

  [[nodiscard]] std::span<const double> at(std::size_t t, std::size_t i) const {
    return {values.data() + (t * nodes + i) * grid.size(), grid.size()};
  }
  [[nodiscard]] std::span<double> at(std::size_t t, std::size_t i) {
    return {values.data() + (t * nodes + i) * grid.size(), grid.size()};
  }
};

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t node = 0;
  std::size_t target_step = 0;
  double alpha = 0.1;

  [[nodiscard]] double width() const noexcept { return upper - lower; }
  [[nodiscard]] bool covers(double x) const noexcept { return x >= lower && x <= upper; }
};

/// Lower and upper bounds for every (step, node); T' x N each.
struct IntervalSet {
  Matrix<double> lower;
  Matrix<double> upper;
  std::vector<std::size_t> target_steps;
  double alpha = 0.1;
  std::size_t beta_fallbacks = 0;  // beta mode: cells that fell back to the plain interval

  [[nodiscard]] std::size_t steps() const noexcept { return lower.rows(); }
  [[nodiscard]] std::size_t nodes() const noexcept { return lower.cols(); }
  [[nodiscard]] PredictionInterval at(std::size_t t, std::size_t i) const {
    return {lower(t, i), upper(t, i), i, target_steps.empty() ? t : target_steps[t], alpha};
  }
};

/// [forecast + q(alpha/2), forecast + q(1 - alpha/2)].
PredictionInterval build_interval(double forecast, std::span<const double> quantiles,
                                  const QuantileGrid& grid, double alpha, bool interpolate = false);

struct BetaInterval {
  PredictionInterval interval;
  double beta = 0.0;
  bool fallback = false;  // no admissible shift: plain interval returned
};

/// Shifts the level pair by beta (both shifted levels must be grid levels) and
/// keeps the narrowest; ties prefer |beta| smallest, then the smaller beta.
BetaInterval build_interval_beta(double forecast, std::span<const double> quantiles,
                                 const QuantileGrid& grid, double alpha);

/// Intervals for every (step, node) of a quantile prediction.
IntervalSet build_intervals(const Matrix<double>& forecasts, const QuantilePrediction& quantiles,
                            double alpha, bool beta);

/// Mean of 100 * (1{x in C} - (1 - alpha)); closed intervals.
double delta_cov(const IntervalSet& intervals, const Matrix<double>& actuals);
double pi_width(const IntervalSet& intervals);
/// Width plus (2 / alpha) times the distance to the interval when missed.
double winkler(const IntervalSet& intervals, const Matrix<double>& actuals);
double winkler_score(double lower, double upper, double x, double alpha);

struct NodeMetrics {
  double delta_cov = 0.0;
  double pi_width = 0.0;
  double winkler = 0.0;
};

struct MetricReport {
  std::string method;
  std::string dataset;
  std::string base_model;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  double delta_cov = 0.0;
  double pi_width = 0.0;
  double winkler = 0.0;
  std::size_t count = 0;
  std::vector<NodeMetrics> per_node;

  [[nodiscard]] nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  static std::string csv_header();
  [[nodiscard]] std::string csv_row() const;
};

MetricReport evaluate_intervals(const IntervalSet& intervals, const Matrix<double>& actuals);

}  // namespace relcp
