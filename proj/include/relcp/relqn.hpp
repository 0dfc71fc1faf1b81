#pragma once

// Relational quantile network over residual windows.
//
// Per node and step the encoder maps [scaled residual, scaled value, v_i]
// through a linear layer and ReLU; a GRU rolls over the window; message
// passing layers mix the final states over a (sampled or fixed) adjacency;
// an MLP over [state, v_i] emits one value per quantile level. The CoRNN
// ablation drops the message passing and the embeddings.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "relcp/core_data.hpp"
#include "relcp/graph_learn.hpp"
#include "relcp/intervals.hpp"
#include "relcp/nn.hpp"

namespace relcp {

struct RelQNConfig {
  std::size_t hidden_size = 32;
  std::size_t embedding_size = 16;
  std::size_t mp_layers = 2;
  std::size_t window = 5;
  std::size_t horizon = 1;
  std::size_t k_neighbors = 20;
  std::size_t dummies = 0;
  double sparsify_frac = 0.1;
  QuantileGrid grid = QuantileGrid::uniform(40);
  std::size_t epochs = 100;
  std::size_t batches_per_epoch = 50;
  std::size_t batch_size = 64;
  double learning_rate = 0.003;
  double lr_decay_factor = 0.25;
  std::size_t lr_decay_period = 20;
  double val_frac = 0.1;          // trailing share of calibration steps used for model selection
  double selection_alpha = 0.1;   // Winkler level used for model selection
  bool use_values = true;         // feed the observed series alongside the residuals
  bool corn_mode = false;
  bool resample_test_graph = false;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static RelQNConfig from_json(const nlohmann::json& j);
};

/// Residuals on a contiguous run of target steps, with the observed series at
/// the same steps.
struct ResidualSeries {
  std::size_t first_step = 0;
  std::size_t horizon = 0;
  Matrix<double> residuals;  // S x N
  Matrix<double> values;     // S x N, or empty

  [[nodiscard]] std::size_t steps() const noexcept { return residuals.rows(); }
  [[nodiscard]] std::size_t nodes() const noexcept { return residuals.cols(); }
  [[nodiscard]] std::size_t end_step() const noexcept { return first_step + steps(); }
};

/// Joins residual sets (in order) into one contiguous series; `data` supplies
/// the observed values. Throws when target steps have gaps.
ResidualSeries make_residual_series(std::span<const ResidualSet* const> parts,
                                    const TimeSeriesCollection* data);

/// Encoder input features for B windows: one (B*N) x C matrix per window step.
template <typename S>
struct RelQNInput {
  std::size_t batch = 0;
  std::size_t nodes = 0;
  std::vector<Matrix<S>> steps;
  Matrix<S> targets;  // (B*N) x 1 scaled residual targets (empty when unknown)
};

/// Adjacency used by the message-passing layers.
template <typename S>
struct AdjacencyArg {
  ad::Var<S> adjacency;           // N x N
  std::vector<S> inverse_degree;  // per node 1 / max(deg, 1), treated as a constant
};

template <typename S>
nn::ParameterSet<S> make_relqn_params(const RelQNConfig& cfg, std::size_t nodes,
                                      std::size_t input_channels, bool learn_graph);

/// Quantile outputs in scaled residual units, (B*N) x |grid|, rows b*N + i.
template <typename S>
ad::Var<S> relqn_forward(ad::Tape<S>& tape, nn::ParameterSet<S>& params, const RelQNConfig& cfg,
                         const RelQNInput<S>& input, const std::optional<AdjacencyArg<S>>& adjacency);

template <typename S>
AdjacencyArg<S> fixed_adjacency(ad::Tape<S>& tape, const Matrix<S>& adjacency);

template <typename S>
std::vector<S> inverse_degrees(const Matrix<S>& hard);

struct RelQNTrainingLog {
  std::vector<double> train_loss;
  std::vector<double> val_score;  // Winkler on the validation slice (pinball if the grid lacks the levels)
  std::size_t best_epoch = 0;
  double best_score = 0.0;
};

class RelQNModel {
 public:
  RelQNModel(RelQNConfig config, std::size_t nodes, Scaler residual_scaler, Scaler value_scaler,
             std::optional<Matrix<double>> fixed_graph);

  [[nodiscard]] const RelQNConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t nodes() const noexcept { return nodes_; }
  [[nodiscard]] std::size_t input_channels() const noexcept { return config_.use_values ? 2 : 1; }
  [[nodiscard]] const Scaler& residual_scaler() const noexcept { return residual_scaler_; }
  [[nodiscard]] const Scaler& value_scaler() const noexcept { return value_scaler_; }
  [[nodiscard]] nn::ParameterSet<float>& params() noexcept { return params_; }
  [[nodiscard]] const nn::ParameterSet<float>& params() const noexcept { return params_; }
  [[nodiscard]] const std::optional<Matrix<double>>& fixed_graph() const noexcept { return fixed_graph_; }
  [[nodiscard]] bool learns_graph() const noexcept { return !config_.corn_mode && !fixed_graph_; }
  [[nodiscard]] const RelQNTrainingLog& log() const noexcept { return log_; }
  void set_log(RelQNTrainingLog log) { log_ = std::move(log); }

  /// Builds encoder inputs for windows whose targets are `target_steps`.
  [[nodiscard]] RelQNInput<float> make_input(const ResidualSeries& series,
                                             std::span<const std::size_t> target_steps) const;

  /// Deterministic top-K (or resampled) binary adjacency used at inference.
  [[nodiscard]] Matrix<float> inference_adjacency(std::mt19937_64* rng) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static RelQNModel from_json(const nlohmann::json& j);

 private:
  RelQNConfig config_;
  std::size_t nodes_;
  Scaler residual_scaler_;
  Scaler value_scaler_;
  std::optional<Matrix<double>> fixed_graph_;
  nn::ParameterSet<float> params_;
  RelQNTrainingLog log_;
};

/// Fits a model on a calibration residual series. `fixed_graph` replaces
/// graph learning with a given adjacency.
RelQNModel train_relqn(const ResidualSeries& calibration, const RelQNConfig& config,
                       const std::optional<Matrix<double>>& fixed_graph = std::nullopt);

/// One optimisation step on the given windows; returns the batch loss.
/// Used by training and by embedding adaptation.
double relqn_step(RelQNModel& model, nn::Adam<float>& opt, const RelQNInput<float>& input,
                  std::mt19937_64& rng, bool sample_graph);

/// Quantiles (data units, sorted along the grid) for the listed target steps.
QuantilePrediction predict_quantiles(const RelQNModel& model, const ResidualSeries& series,
                                     std::span<const std::size_t> target_steps,
                                     std::mt19937_64* rng = nullptr);

/// Target steps of `series` whose input windows lie inside it, limited to `range`.
std::vector<std::size_t> admissible_targets(const ResidualSeries& series, std::size_t window,
                                            std::size_t horizon, StepRange range);

}  // namespace relcp
