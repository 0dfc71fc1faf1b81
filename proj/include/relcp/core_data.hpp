#pragma once

// Time series containers, chronological splits, scaling, sliding windows and
// residual extraction.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relcp/matrix.hpp"

namespace relcp {

/// Half-open range of time steps [begin, end).
struct StepRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  [[nodiscard]] bool empty() const noexcept { return size() == 0; }
  [[nodiscard]] bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
  bool operator==(const StepRange&) const = default;
};

/// T x N x D block of exogenous covariates, stored step-major.
struct Covariates {
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  [[nodiscard]] double at(std::size_t t, std::size_t i, std::size_t c) const {
    return data[(t * nodes + i) * channels + c];
  }
};

/// T x N target observations plus optional covariates sharing the T and N axes.
class TimeSeriesCollection {
 public:
  TimeSeriesCollection() = default;
  /// Throws std::invalid_argument on non-finite values or mismatched covariates.
  explicit TimeSeriesCollection(Matrix<double> values,
                                std::optional<Covariates> covariates = std::nullopt);

  [[nodiscard]] std::size_t steps() const noexcept { return values_.rows(); }
  [[nodiscard]] std::size_t nodes() const noexcept { return values_.cols(); }
  [[nodiscard]] const Matrix<double>& values() const noexcept { return values_; }
  [[nodiscard]] const std::optional<Covariates>& covariates() const noexcept { return covariates_; }
  [[nodiscard]] std::size_t covariate_channels() const noexcept {
    return covariates_ ? covariates_->channels : 0;
  }

 private:
  Matrix<double> values_;
  std::optional<Covariates> covariates_;
};

struct SplitSpec {
  double train_frac = 0.4;
  double cal_frac = 0.4;
  double test_frac = 0.2;
  double val_frac_of_cal = 0.25;

  void validate() const;
};

struct SplitIndex {
  StepRange train;
  StepRange val;
  StepRange cal;
  StepRange test;
};

/// Chronological split. Boundaries at floor(frac * T); validation is carved
/// from the front of the calibration block.
SplitIndex make_splits(std::size_t steps, const SplitSpec& spec);

/// Global standard scaler pooled over every node and step of a range.
struct Scaler {
  double mean = 0.0;
  double std = 1.0;

  static constexpr double kMinStd = 1e-8;

  [[nodiscard]] double transform(double x) const noexcept { return (x - mean) / std; }
  [[nodiscard]] double inverse(double z) const noexcept { return z * std + mean; }
};

Scaler fit_scaler(const TimeSeriesCollection& collection, StepRange range);
/// Population mean/std of all entries of a matrix (std floored at kMinStd).
Scaler fit_scaler(const Matrix<double>& values);

/// A batch of sliding windows.
/// inputs is laid out [B][W][N][d_in] with channel 0 the (raw) target value
/// followed by the covariate channels.
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t window = 0;
  std::size_t nodes = 0;
  std::size_t channels = 0;
  std::vector<double> inputs;
  Matrix<double> targets;  // B x N
  std::vector<std::size_t> target_steps;

  [[nodiscard]] double input(std::size_t b, std::size_t w, std::size_t i, std::size_t c) const {
    return inputs[((b * window + w) * nodes + i) * channels + c];
  }
};

/// Window sample k covers input steps [first + k, first + k + W) and targets
/// step first + k + W - 1 + H.
struct WindowSpec {
  std::size_t window = 1;
  std::size_t horizon = 0;

  [[nodiscard]] std::size_t samples_in(StepRange range) const noexcept {
    return range.size() >= window + horizon ? range.size() - window - horizon + 1 : 0;
  }
  /// First admissible target step of a range.
  [[nodiscard]] std::size_t first_target(StepRange range) const noexcept {
    return range.begin + window - 1 + horizon;
  }
};

/// Gathers the windows whose target steps are listed.
WindowBatch gather_windows(const TimeSeriesCollection& collection, WindowSpec spec,
                           std::span<const std::size_t> target_steps);

/// All admissible windows of `range` in chronological order, split into
/// batches of at most `batch_size`.
std::vector<WindowBatch> window_iter(const TimeSeriesCollection& collection, WindowSpec spec,
                                     StepRange range, std::size_t batch_size);

/// Residuals (actual minus forecast) indexed by target step.
struct ResidualSet {
  Matrix<double> residuals;  // T' x N
  std::vector<std::size_t> target_steps;
  std::size_t horizon = 0;

  [[nodiscard]] std::size_t size() const noexcept { return residuals.rows(); }
  [[nodiscard]] std::size_t nodes() const noexcept { return residuals.cols(); }
  /// Subset with target steps inside `range`, order preserved.
  [[nodiscard]] ResidualSet restrict(StepRange range) const;
  /// Row of the given target step; throws std::out_of_range when absent.
  [[nodiscard]] std::size_t row_of(std::size_t step) const;
};

ResidualSet compute_residuals(const Matrix<double>& actuals, const Matrix<double>& forecasts,
                              std::vector<std::size_t> target_steps, std::size_t horizon);

// ------------------------------------------------------------------ CSV I/O

/// Wide CSV: header row, first column integer step index, then one column per node.
TimeSeriesCollection read_collection_csv(const std::filesystem::path& values_path,
                                         std::span<const std::filesystem::path> covariate_paths = {});
void write_matrix_csv(const std::filesystem::path& path, const Matrix<double>& values,
                      std::span<const std::size_t> steps, const std::string& index_name = "step");
/// Reads a wide CSV into (steps, values).
std::pair<std::vector<std::size_t>, Matrix<double>> read_matrix_csv(
    const std::filesystem::path& path);

}  // namespace relcp
