#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "relcp/adaptation.hpp"
#include "relcp/errors.hpp"
#include "support.hpp"

using namespace relcp;

namespace {

RelQNConfig small_config() {
  RelQNConfig c;
  c.hidden_size = 32;
  c.embedding_size = 32;
  c.mp_layers = 1;
  c.window = 3;
  c.horizon = 1;
  c.k_neighbors = 1;
  c.grid = QuantileGrid::uniform(20);
  c.epochs = 15;
  c.batches_per_epoch = 20;
  c.batch_size = 32;
  c.learning_rate = 0.01;
  c.use_values = false;
  c.val_frac = 0.0;
  c.seed = 2;
  return c;
}

ResidualSeries noise_series(std::size_t first, std::size_t steps, std::size_t nodes, std::uint64_t seed,
                            double shift_from = -1.0, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  ResidualSeries s;
  s.first_step = first;
  s.horizon = 1;
  s.residuals = testing::random_matrix(steps, nodes, rng);
  if (shift_from >= 0.0)
    for (std::size_t t = static_cast<std::size_t>(shift_from); t < steps; ++t)
      for (std::size_t i = 0; i < nodes; ++i) s.residuals(t, i) += shift;
  return s;
}

const RelQNModel& trained_model() {
  static const RelQNModel model = train_relqn(noise_series(0, 800, 3, 1), small_config());
  return model;
}

double mean_median(const RelQNModel& m, const ResidualSeries& s, std::span<const std::size_t> targets) {
  const auto q = predict_quantiles(m, s, targets);
  const auto k = *q.grid.index_of(0.5);
  double acc = 0.0;
  for (std::size_t t = 0; t < q.steps; ++t)
    for (std::size_t i = 0; i < q.nodes; ++i) acc += q.at(t, i)[k];
  return acc / static_cast<double>(q.steps * q.nodes);
}

}  // namespace

TEST_SUITE("adaptation") {

TEST_CASE("folds are contiguous and the last absorbs the remainder") {
  const auto f = make_folds(10, 3);
  REQUIRE(f.size() == 3);
  CHECK(f[0].begin == 0);
  CHECK(f[0].end == 3);
  CHECK(f[1].begin == 3);
  CHECK(f[1].end == 6);
  CHECK(f[2].begin == 6);
  CHECK(f[2].end == 10);
  CHECK(make_folds(7, 1).front().end == 7);
  CHECK_THROWS_AS(make_folds(10, 0), ConfigError);
}

TEST_CASE("only the embeddings move") {
  const auto& model = trained_model();
  const auto s = noise_series(0, 200, 3, 7);
  const auto targets = admissible_targets(s, 3, 1, {0, 200});
  AdaptationConfig cfg;
  cfg.finetune_epochs = 3;
  cfg.learning_rate = 0.01;
  const auto adapted = adapt_embeddings(model, s, targets, cfg);
  for (std::size_t k = 0; k < model.params().size(); ++k) {
    const auto& before = model.params()[k];
    const auto& after = adapted.params()[k];
    INFO(before.name);
    if (before.name == "embedding") {
      CHECK(before.value != after.value);
    } else {
      CHECK(before.value == after.value);
    }
    CHECK_FALSE(after.frozen);
  }
  CHECK(adapted.residual_scaler().mean == model.residual_scaler().mean);
}

TEST_CASE("zero epochs return the model unchanged") {
  const auto& model = trained_model();
  const auto s = noise_series(0, 100, 3, 8);
  const auto targets = admissible_targets(s, 3, 1, {0, 100});
  AdaptationConfig cfg;
  cfg.finetune_epochs = 0;
  CHECK(adapt_embeddings(model, s, targets, cfg).params().to_json() == model.params().to_json());
  cfg.finetune_epochs = 2;
  cfg.max_batches_per_epoch = 0;
  CHECK(adapt_embeddings(model, s, targets, cfg).params().to_json() == model.params().to_json());
}

TEST_CASE("adaptation is deterministic for a seed") {
  const auto& model = trained_model();
  const auto s = noise_series(0, 150, 3, 9);
  const auto targets = admissible_targets(s, 3, 1, {0, 150});
  AdaptationConfig cfg;
  cfg.finetune_epochs = 2;
  cfg.seed = 4;
  const auto a = adapt_embeddings(model, s, targets, cfg);
  const auto b = adapt_embeddings(model, s, targets, cfg);
  CHECK(a.params().at("embedding").value == b.params().at("embedding").value);
}

TEST_CASE("adapted embeddings follow a level shift") {
  const auto& model = trained_model();
  const double c = 2.0;
  const auto s = noise_series(0, 400, 3, 10, 0.0, c);
  const auto targets = admissible_targets(s, 3, 1, {0, 400});
  const double before = mean_median(model, s, targets);
  AdaptationConfig cfg;
  cfg.finetune_epochs = 200;
  cfg.max_batches_per_epoch = 10;
  cfg.learning_rate = 0.05;
  const double after = mean_median(adapt_embeddings(model, s, targets, cfg), s, targets);
  INFO("median before " << before << ", after " << after);
  CHECK(std::abs(before) < 0.3);
  CHECK(after - before >= 0.5 * (c - before));
}

TEST_CASE("rolling evaluation") {
  const auto& model = trained_model();
  const std::size_t n = 3, steps = 600;
  const auto s = noise_series(0, steps, n, 11, 300.0, 2.0);
  const auto targets = admissible_targets(s, 3, 1, {0, steps});
  // Zero forecasts make the actuals equal to the residuals.
  const Matrix<double> forecasts(targets.size(), n);
  Matrix<double> actuals(targets.size(), n);
  for (std::size_t r = 0; r < targets.size(); ++r)
    for (std::size_t i = 0; i < n; ++i) actuals(r, i) = s.residuals(targets[r], i);

  AdaptationConfig cfg;
  cfg.n_folds = 6;
  cfg.finetune_epochs = 20;
  cfg.learning_rate = 0.05;

  SUBCASE("a single fold leaves the frozen intervals") {
    cfg.n_folds = 1;
    const auto res = rolling_adaptive_eval(model, s, targets, forecasts, actuals, 0.1, false, cfg);
    CHECK(res.adapted_intervals.lower == res.frozen_intervals.lower);
    CHECK(res.adapted_intervals.upper == res.frozen_intervals.upper);
    CHECK(res.adapted.winkler == res.frozen.winkler);
    CHECK(res.folds.size() == 1);
  }
  SUBCASE("the first fold is never adapted and a shift is tracked") {
    const auto res = rolling_adaptive_eval(model, s, targets, forecasts, actuals, 0.1, false, cfg);
    REQUIRE(res.folds.size() == 6);
    CHECK(res.folds[0].adapted.winkler == res.folds[0].frozen.winkler);
    CHECK(res.folds[0].first_step == targets.front());
    CHECK(res.folds[5].last_step == targets.back());
    CHECK(res.adapted.winkler < res.frozen.winkler);
    CHECK(res.folds[5].adapted.winkler < res.folds[5].frozen.winkler);
  }
  SUBCASE("too short a stream is a configuration error") {
    cfg.n_folds = 200;
    CHECK_THROWS_AS(rolling_adaptive_eval(model, s, targets, forecasts, actuals, 0.1, false, cfg), ConfigError);
  }
}

TEST_CASE("the node-wise ablation cannot adapt") {
  auto cfg = small_config();
  cfg.corn_mode = true;
  cfg.epochs = 1;
  cfg.batches_per_epoch = 1;
  const auto s = noise_series(0, 60, 3, 12);
  const auto m = train_relqn(s, cfg);
  const auto targets = admissible_targets(s, 3, 1, {0, 60});
  CHECK_THROWS_AS(adapt_embeddings(m, s, targets, AdaptationConfig{}), ConfigError);
}

TEST_CASE("configuration round trip and checks") {
  AdaptationConfig c;
  c.n_folds = 4;
  c.learning_rate = 0.02;
  const auto r = AdaptationConfig::from_json(c.to_json());
  CHECK(r.n_folds == 4);
  CHECK(r.learning_rate == 0.02);
  c.n_folds = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.n_folds = 1;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
