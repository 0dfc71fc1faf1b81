#pragma once

// Base point predictors: a node-wise GRU with an MLP readout and a
// time-then-space graph variant (GRU encoder, message passing over a fixed
// adjacency, readout). Trained with an MAE objective on standardized values.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "relcp/core_data.hpp"
#include "relcp/nn.hpp"

namespace relcp {

struct ForecasterConfig {
  std::size_t hidden_size = 32;
  std::size_t window = 5;
  std::size_t horizon = 1;  // steps after the last input step
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  std::size_t max_batches_per_epoch = 0;  // 0 = full pass over the training windows
  bool use_graph = false;
  std::size_t mp_layers = 2;
  std::size_t embedding_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static ForecasterConfig from_json(const nlohmann::json& j);
};

struct TrainingLog {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
};

class PointForecaster {
 public:
  PointForecaster(ForecasterConfig config, std::size_t nodes, std::size_t covariate_channels,
                  Scaler scaler, std::optional<Matrix<double>> adjacency);

  [[nodiscard]] const ForecasterConfig& config() const noexcept { return config_; }
  [[nodiscard]] const Scaler& scaler() const noexcept { return scaler_; }
  [[nodiscard]] std::size_t nodes() const noexcept { return nodes_; }
  [[nodiscard]] std::size_t covariate_channels() const noexcept { return covariate_channels_; }
  [[nodiscard]] nn::ParameterSet<float>& params() noexcept { return params_; }
  [[nodiscard]] const nn::ParameterSet<float>& params() const noexcept { return params_; }
  [[nodiscard]] const std::optional<Matrix<double>>& adjacency() const noexcept { return adjacency_; }
  [[nodiscard]] const TrainingLog& log() const noexcept { return log_; }
  void set_log(TrainingLog log) { log_ = std::move(log); }

  /// Forecasts in data units, B x N.
  [[nodiscard]] Matrix<double> predict(const WindowBatch& batch) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static PointForecaster from_json(const nlohmann::json& j);

 private:
  ForecasterConfig config_;
  std::size_t nodes_;
  std::size_t covariate_channels_;
  Scaler scaler_;
  std::optional<Matrix<double>> adjacency_;
  nn::ParameterSet<float> params_;
  TrainingLog log_;
};

/// Creates the parameters of a forecaster (used by the constructor and tests).
template <typename S>
nn::ParameterSet<S> make_forecaster_params(const ForecasterConfig& cfg, std::size_t nodes,
                                           std::size_t covariate_channels);

/// Forward pass in standardized units; returns (B*N) x 1 predictions, rows b*N + i.
/// `row_norm_adjacency` is the mean-aggregation operator (graph variant only).
template <typename S>
ad::Var<S> forecaster_forward(ad::Tape<S>& tape, nn::ParameterSet<S>& params,
                              const ForecasterConfig& cfg, const Scaler& scaler,
                              const WindowBatch& batch, const Matrix<S>* row_norm_adjacency);

/// Standardized targets of a batch as a (B*N) x 1 matrix.
template <typename S>
Matrix<S> scaled_targets(const WindowBatch& batch, const Scaler& scaler);

/// Mean aggregation operator A / deg (rows with no neighbours stay zero).
Matrix<double> row_normalize(const Matrix<double>& adjacency);

PointForecaster train_point_forecaster(const TimeSeriesCollection& collection,
                                       const SplitIndex& split, const ForecasterConfig& config,
                                       const std::optional<Matrix<double>>& graph);

struct ForecastResult {
  Matrix<double> forecasts;  // T' x N
  Matrix<double> actuals;    // T' x N
  std::vector<std::size_t> target_steps;
};

/// One forecast per admissible target step of `range`, in data units.
ForecastResult forecast(const PointForecaster& model, const TimeSeriesCollection& collection,
                        StepRange range);

}  // namespace relcp
