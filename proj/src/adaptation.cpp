#include "relcp/adaptation.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "relcp/errors.hpp"

namespace relcp {

void AdaptationConfig::validate() const {
  if (n_folds < 1) throw ConfigError("adaptation: n_folds must be >= 1");
  if (batch_size < 1) throw ConfigError("adaptation: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("adaptation: learning_rate must be positive");
}

nlohmann::json AdaptationConfig::to_json() const {
  return {{"n_folds", n_folds},
          {"finetune_epochs", finetune_epochs},
          {"max_batches_per_epoch", max_batches_per_epoch},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"seed", seed}};
}

AdaptationConfig AdaptationConfig::from_json(const nlohmann::json& j) {
  AdaptationConfig c;
  c.n_folds = j.value("n_folds", c.n_folds);
  c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
  c.max_batches_per_epoch = j.value("max_batches_per_epoch", c.max_batches_per_epoch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

RelQNModel adapt_embeddings(const RelQNModel& model, const ResidualSeries& series,
                            std::span<const std::size_t> target_steps, const AdaptationConfig& config) {
  config.validate();
  if (model.config().corn_mode) throw ConfigError("adaptation: the model has no node embeddings");
  if (target_steps.empty()) throw ConfigError("adaptation: no fine-tuning windows");
  RelQNModel out = model;
  if (config.finetune_epochs == 0 || config.max_batches_per_epoch == 0) return out;

  auto& params = out.params();
  for (std::size_t k = 0; k < params.size(); ++k) params[k].frozen = params[k].name != "embedding";
  // Fresh optimizer state every round.
  nn::Adam<float> opt(params, {.lr = config.learning_rate});
  std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dull);

  std::vector<std::size_t> order(target_steps.begin(), target_steps.end());
  const std::size_t full = (order.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t per_epoch = std::min(full, config.max_batches_per_epoch);
  for (std::size_t epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(lo + config.batch_size, order.size());
      const auto input = out.make_input(series, std::span<const std::size_t>(order).subspan(lo, hi - lo));
      relqn_step(out, opt, input, rng, false);
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].frozen = false;
  return out;
}

std::vector<StepRange> make_folds(std::size_t count, std::size_t n_folds) {
  if (n_folds < 1) throw ConfigError("folds: need at least one fold");
  const std::size_t size = count / n_folds;
  std::vector<StepRange> folds;
  for (std::size_t k = 0; k < n_folds; ++k) {
    const std::size_t begin = k * size;
    folds.push_back({begin, k + 1 == n_folds ? count : begin + size});
  }
  return folds;
}

namespace {

IntervalSet slice_rows(const IntervalSet& iv, StepRange rows) {
  IntervalSet out;
  out.alpha = iv.alpha;
  out.lower.resize(rows.size(), iv.nodes());
  out.upper.resize(rows.size(), iv.nodes());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < iv.nodes(); ++i) {
      out.lower(r, i) = iv.lower(rows.begin + r, i);
      out.upper(r, i) = iv.upper(rows.begin + r, i);
    }
    out.target_steps.push_back(iv.target_steps[rows.begin + r]);
  }
  return out;
}

Matrix<double> slice_rows(const Matrix<double>& m, StepRange rows) {
  Matrix<double> out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < m.cols(); ++i) out(r, i) = m(rows.begin + r, i);
  return out;
}

void copy_rows(IntervalSet& dst, const IntervalSet& src, std::size_t offset) {
  for (std::size_t r = 0; r < src.steps(); ++r)
    for (std::size_t i = 0; i < src.nodes(); ++i) {
      dst.lower(offset + r, i) = src.lower(r, i);
      dst.upper(offset + r, i) = src.upper(r, i);
    }
}

}  // namespace

AdaptiveEvalResult rolling_adaptive_eval(const RelQNModel& model, const ResidualSeries& series,
                                         std::span<const std::size_t> target_steps,
                                         const Matrix<double>& forecasts, const Matrix<double>& actuals,
                                         double alpha, bool beta_intervals,
                                         const AdaptationConfig& config) {
  config.validate();
  const std::size_t count = target_steps.size();
  const std::size_t need = config.n_folds * (model.config().window + model.config().horizon);
  if (count < need) {
    throw ConfigError("adaptation: test stream of " + std::to_string(count) + " steps is shorter than " +
                      std::to_string(need) + " (n_folds x (window + horizon))");
  }
  if (forecasts.rows() != count || !forecasts.same_shape(actuals)) {
    throw std::invalid_argument("adaptation: forecasts and actuals must align with the target steps");
  }

  AdaptiveEvalResult res;
  const auto frozen_q = predict_quantiles(model, series, target_steps);
  res.frozen_intervals = build_intervals(forecasts, frozen_q, alpha, beta_intervals);
  res.adapted_intervals = res.frozen_intervals;

  const auto folds = make_folds(count, config.n_folds);
  RelQNModel current = model;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const auto rows = folds[k];
    const auto steps = target_steps.subspan(rows.begin, rows.size());
    if (k > 0) {
      const auto prev = folds[k - 1];
      AdaptationConfig round = config;
      round.seed = config.seed + k;
      current = adapt_embeddings(current, series, target_steps.subspan(prev.begin, prev.size()), round);
      const auto q = predict_quantiles(current, series, steps);
      copy_rows(res.adapted_intervals,
                build_intervals(slice_rows(forecasts, rows), q, alpha, beta_intervals), rows.begin);
    }
    FoldMetrics fm;
    fm.fold = k;
    fm.first_step = steps.front();
    fm.last_step = steps.back();
    const auto act = slice_rows(actuals, rows);
    fm.adapted = evaluate_intervals(slice_rows(res.adapted_intervals, rows), act);
    fm.frozen = evaluate_intervals(slice_rows(res.frozen_intervals, rows), act);
    res.folds.push_back(std::move(fm));
  }
  res.adapted = evaluate_intervals(res.adapted_intervals, actuals);
  res.frozen = evaluate_intervals(res.frozen_intervals, actuals);
  return res;
}

void AdaptiveEvalResult::write_fold_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "fold,first_step,last_step,variant,delta_cov,pi_width,winkler\n";
  for (const auto& f : folds) {
    for (const auto* variant : {"frozen", "adapted"}) {
      const auto& m = std::string(variant) == "frozen" ? f.frozen : f.adapted;
      out << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f}\n", f.fold, f.first_step, f.last_step,
                         variant, m.delta_cov, m.pi_width, m.winkler);
    }
  }
}

}  // namespace relcp
