#pragma once

// Test-time adaptation: the node embeddings are re-fitted on the most recent
// fold of observed residuals while every shared weight stays frozen.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "relcp/intervals.hpp"
#include "relcp/relqn.hpp"

namespace relcp {

struct AdaptationConfig {
  std::size_t n_folds = 6;
  std::size_t finetune_epochs = 25;
  std::size_t max_batches_per_epoch = 10;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static AdaptationConfig from_json(const nlohmann::json& j);
};

/// Returns a copy of `model` whose embeddings were fine-tuned on windows
/// targeting `target_steps`. The graph is the deterministic top-K.
RelQNModel adapt_embeddings(const RelQNModel& model, const ResidualSeries& series,
                            std::span<const std::size_t> target_steps, const AdaptationConfig& config);

/// Contiguous folds of [0, count); the last fold absorbs the remainder.
std::vector<StepRange> make_folds(std::size_t count, std::size_t n_folds);

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t first_step = 0;
  std::size_t last_step = 0;
  MetricReport adapted;
  MetricReport frozen;
};

struct AdaptiveEvalResult {
  MetricReport adapted;
  MetricReport frozen;
  IntervalSet adapted_intervals;
  IntervalSet frozen_intervals;
  std::vector<FoldMetrics> folds;

  void write_fold_csv(const std::filesystem::path& path) const;
};

/// Evaluates the frozen model and the fold-wise adapted model on the same
/// test stream. `forecasts` and `actuals` are aligned with `target_steps`;
/// `series` must hold the residuals of every step the windows touch.
AdaptiveEvalResult rolling_adaptive_eval(const RelQNModel& model, const ResidualSeries& series,
                                         std::span<const std::size_t> target_steps,
                                         const Matrix<double>& forecasts, const Matrix<double>& actuals,
                                         double alpha, bool beta_intervals,
                                         const AdaptationConfig& config);

}  // namespace relcp
