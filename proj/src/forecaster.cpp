#include "relcp/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "relcp/errors.hpp"

namespace relcp {

void ForecasterConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("forecaster: hidden_size must be >= 1");
  if (window < 1) throw ConfigError("forecaster: window must be >= 1");
  if (epochs < 1) throw ConfigError("forecaster: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("forecaster: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("forecaster: learning_rate must be positive");
  if (use_graph && embedding_size < 1) throw ConfigError("forecaster: embedding_size must be >= 1");
}

nlohmann::json ForecasterConfig::to_json() const {
  return {{"hidden_size", hidden_size},
          {"window", window},
          {"horizon", horizon},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"patience", patience},
          {"max_batches_per_epoch", max_batches_per_epoch},
          {"use_graph", use_graph},
          {"mp_layers", mp_layers},
          {"embedding_size", embedding_size},
          {"seed", seed}};
}

ForecasterConfig ForecasterConfig::from_json(const nlohmann::json& j) {
  ForecasterConfig c;
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.window = j.value("window", c.window);
  c.horizon = j.value("horizon", c.horizon);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.patience = j.value("patience", c.patience);
  c.max_batches_per_epoch = j.value("max_batches_per_epoch", c.max_batches_per_epoch);
  c.use_graph = j.value("use_graph", c.use_graph);
  c.mp_layers = j.value("mp_layers", c.mp_layers);
  c.embedding_size = j.value("embedding_size", c.embedding_size);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Matrix<double> row_normalize(const Matrix<double>& adjacency) {
  Matrix<double> out(adjacency.rows(), adjacency.cols());
  for (std::size_t i = 0; i < adjacency.rows(); ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < adjacency.cols(); ++j) deg += adjacency(i, j);
    if (deg <= 0.0) continue;
    for (std::size_t j = 0; j < adjacency.cols(); ++j) out(i, j) = adjacency(i, j) / deg;
  }
  return out;
}

template <typename S>
nn::ParameterSet<S> make_forecaster_params(const ForecasterConfig& cfg, std::size_t nodes,
                                           std::size_t covariate_channels) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  nn::ParameterSet<S> ps;
  const std::size_t h = cfg.hidden_size;
  std::size_t d_in = 1 + covariate_channels;
  if (cfg.use_graph) {
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.embedding_size)));
    Matrix<S> emb(nodes, cfg.embedding_size);
    for (auto& v : emb.flat()) v = static_cast<S>(init(rng));
    ps.add("embedding", std::move(emb));
    d_in += cfg.embedding_size;
  }
  nn::GRUCell<S>::create(ps, "gru", d_in, h, rng);
  if (cfg.use_graph) {
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      const std::string name = "mp" + std::to_string(l);
      nn::Linear<S>::create(ps, name + ".self", h, h, rng);
      ps.add(name + ".neigh", nn::uniform_init<S>(h, h, h, rng));
    }
  }
  nn::Linear<S>::create(ps, "readout0", h, h, rng);
  nn::Linear<S>::create(ps, "readout1", h, 1, rng);
  return ps;
}

template <typename S>
Matrix<S> scaled_targets(const WindowBatch& batch, const Scaler& scaler) {
  Matrix<S> t(batch.batch * batch.nodes, 1);
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t i = 0; i < batch.nodes; ++i)
      t(b * batch.nodes + i, 0) = static_cast<S>(scaler.transform(batch.targets(b, i)));
  return t;
}

template <typename S>
ad::Var<S> forecaster_forward(ad::Tape<S>& tape, nn::ParameterSet<S>& params,
                              const ForecasterConfig& cfg, const Scaler& scaler,
                              const WindowBatch& batch, const Matrix<S>* row_norm_adjacency) {
  const std::size_t n = batch.nodes;
  const std::size_t rows = batch.batch * n;
  const std::size_t d = batch.channels;

  std::optional<ad::Var<S>> emb_rows;
  if (cfg.use_graph) {
    if (row_norm_adjacency == nullptr || row_norm_adjacency->rows() != n) {
      throw std::invalid_argument("forecaster_forward: graph variant needs an N x N adjacency");
    }
    std::vector<std::size_t> index(rows);
    for (std::size_t r = 0; r < rows; ++r) index[r] = r % n;
    emb_rows = ad::gather_rows(tape.param(params.at("embedding")), std::move(index));
  }

  const auto gru = nn::GRUCell<S>::bind(params, "gru");
  ad::Var<S> h = tape.constant(Matrix<S>(rows, cfg.hidden_size));
  for (std::size_t w = 0; w < batch.window; ++w) {
    Matrix<S> x(rows, d);
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = b * n + i;
        x(r, 0) = static_cast<S>(scaler.transform(batch.input(b, w, i, 0)));
        for (std::size_t c = 1; c < d; ++c) x(r, c) = static_cast<S>(batch.input(b, w, i, c));
      }
    ad::Var<S> xv = tape.constant(std::move(x));
    if (emb_rows) xv = ad::concat_cols<S>({xv, *emb_rows});
    h = gru.step(tape, xv, h);
  }

  if (cfg.use_graph) {
    ad::Var<S> adj = tape.constant(*row_norm_adjacency);
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      const std::string name = "mp" + std::to_string(l);
      const auto self = nn::Linear<S>::bind(params, name + ".self");
      ad::Var<S> neigh = ad::matmul(h, tape.param(params.at(name + ".neigh")));
      ad::Var<S> agg = ad::batched_left_matmul(adj, neigh, batch.batch);
      h = ad::add(h, ad::relu(ad::add(self(tape, h), agg)));
    }
  }

  const auto r0 = nn::Linear<S>::bind(params, "readout0");
  const auto r1 = nn::Linear<S>::bind(params, "readout1");
  return r1(tape, ad::relu(r0(tape, h)));
}

PointForecaster::PointForecaster(ForecasterConfig config, std::size_t nodes,
                                 std::size_t covariate_channels, Scaler scaler,
                                 std::optional<Matrix<double>> adjacency)
    : config_(config),
      nodes_(nodes),
      covariate_channels_(covariate_channels),
      scaler_(scaler),
      adjacency_(std::move(adjacency)),
      params_(make_forecaster_params<float>(config, nodes, covariate_channels)) {
  if (config_.use_graph) {
    if (!adjacency_) throw ConfigError("forecaster: graph variant requires a graph");
    if (adjacency_->rows() != nodes || adjacency_->cols() != nodes) {
      throw ConfigError("forecaster: adjacency is " + shape_str(*adjacency_) + ", expected " +
                        std::to_string(nodes) + "x" + std::to_string(nodes));
    }
  }
}

Matrix<double> PointForecaster::predict(const WindowBatch& batch) const {
  if (batch.nodes != nodes_ || batch.channels != 1 + covariate_channels_) {
    throw std::invalid_argument("forecaster: batch shape does not match the model");
  }
  Matrix<float> adj;
  if (config_.use_graph) adj = row_normalize(*adjacency_).cast<float>();
  // Inference only reads the parameters; a copy keeps this method const without aliasing.
  nn::ParameterSet<float> ps = params_;
  for (std::size_t k = 0; k < ps.size(); ++k) ps[k].frozen = true;
  ad::Tape<float> tape;
  const auto out = forecaster_forward(tape, ps, config_, scaler_, batch,
                                      config_.use_graph ? &adj : nullptr);
  Matrix<double> pred(batch.batch, nodes_);
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t i = 0; i < nodes_; ++i)
      pred(b, i) = scaler_.inverse(static_cast<double>(out.value()(b * nodes_ + i, 0)));
  return pred;
}

nlohmann::json PointForecaster::to_json() const {
  nlohmann::json j;
  j["kind"] = "point_forecaster";
  j["config"] = config_.to_json();
  j["nodes"] = nodes_;
  j["covariate_channels"] = covariate_channels_;
  j["scaler"] = {{"mean", scaler_.mean}, {"std", scaler_.std}};
  if (adjacency_) {
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes_; ++i)
      for (std::size_t k = 0; k < nodes_; ++k)
        if ((*adjacency_)(i, k) != 0.0) edges.push_back({i, k, (*adjacency_)(i, k)});
    j["adjacency"] = edges;
  } else {
    j["adjacency"] = nullptr;
  }
  j["params"] = params_.to_json();
  j["training"] = {{"seed", config_.seed},
                   {"epochs_run", log_.epochs_run},
                   {"best_epoch", log_.best_epoch},
                   {"best_val_mae", log_.best_val},
                   {"train_loss", log_.train_loss},
                   {"val_loss", log_.val_loss}};
  return j;
}

PointForecaster PointForecaster::from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string{}) != "point_forecaster") {
    throw ConfigError("checkpoint is not a point forecaster");
  }
  const auto cfg = ForecasterConfig::from_json(j.at("config"));
  const std::size_t n = j.at("nodes");
  std::optional<Matrix<double>> adj;
  if (!j.at("adjacency").is_null()) {
    Matrix<double> a(n, n);
    for (const auto& e : j.at("adjacency")) a(e[0].get<std::size_t>(), e[1].get<std::size_t>()) = e[2];
    adj = std::move(a);
  }
  Scaler s{j.at("scaler").at("mean"), j.at("scaler").at("std")};
  PointForecaster m(cfg, n, j.at("covariate_channels"), s, std::move(adj));
  m.params_.load_json(j.at("params"));
  const auto& t = j.at("training");
  m.log_.epochs_run = t.at("epochs_run");
  m.log_.best_epoch = t.at("best_epoch");
  m.log_.best_val = t.at("best_val_mae");
  m.log_.train_loss = t.at("train_loss").get<std::vector<double>>();
  m.log_.val_loss = t.at("val_loss").get<std::vector<double>>();
  return m;
}

namespace {

std::vector<std::size_t> admissible_targets(WindowSpec spec, StepRange range) {
  const std::size_t count = spec.samples_in(range);
  std::vector<std::size_t> steps(count);
  std::iota(steps.begin(), steps.end(), spec.first_target(range));
  return steps;
}

double batch_mae(const PointForecaster& model, const WindowBatch& batch) {
  const auto pred = model.predict(batch);
  double acc = 0.0;
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t i = 0; i < batch.nodes; ++i)
      acc += std::abs(model.scaler().transform(pred(b, i)) -
                      model.scaler().transform(batch.targets(b, i)));
  return acc;
}

}  // namespace

PointForecaster train_point_forecaster(const TimeSeriesCollection& collection,
                                       const SplitIndex& split, const ForecasterConfig& config,
                                       const std::optional<Matrix<double>>& graph) {
  config.validate();
  if (config.use_graph && !graph) throw ConfigError("forecaster: graph variant requires a graph");
  const WindowSpec spec{config.window, config.horizon};
  auto train_targets = admissible_targets(spec, split.train);
  if (train_targets.empty()) {
    throw ConfigError("forecaster: train range of " + std::to_string(split.train.size()) +
                      " steps is shorter than window + horizon");
  }

  const Scaler scaler = fit_scaler(collection, split.train);
  PointForecaster model(config, collection.nodes(), collection.covariate_channels(), scaler,
                        config.use_graph ? graph : std::nullopt);
  auto& params = model.params();
  Matrix<float> adj;
  if (config.use_graph) adj = row_normalize(*graph).cast<float>();

  // Validation falls back to the training windows when no validation block exists.
  std::vector<WindowBatch> val_batches;
  if (spec.samples_in(split.val) > 0) {
    val_batches = window_iter(collection, spec, split.val, 512);
  }

  nn::Adam<float> opt(params, {.lr = config.learning_rate});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  TrainingLog log;
  log.best_val = std::numeric_limits<double>::infinity();
  nn::ParameterSet<float> best = params;
  std::size_t since_best = 0;

  const std::size_t bs = config.batch_size;
  const std::size_t full_batches = (train_targets.size() + bs - 1) / bs;
  const std::size_t n_batches = config.max_batches_per_epoch > 0
                                    ? std::min(full_batches, config.max_batches_per_epoch)
                                    : full_batches;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_targets.begin(), train_targets.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < n_batches; ++k) {
      const std::size_t lo = k * bs;
      const std::size_t hi = std::min(lo + bs, train_targets.size());
      const auto batch = gather_windows(
          collection, spec, std::span<const std::size_t>(train_targets.data() + lo, hi - lo));
      params.zero_grad();
      ad::Tape<float> tape;
      const auto pred = forecaster_forward(tape, params, config, scaler, batch,
                                           config.use_graph ? &adj : nullptr);
      const auto loss = ad::mae_loss(pred, scaled_targets<float>(batch, scaler));
      const double lv = loss.value()(0, 0);
      if (!std::isfinite(lv)) {
        throw NumericalError("forecaster: non-finite training loss at epoch " +
                             std::to_string(epoch + 1) + ", batch " + std::to_string(k + 1));
      }
      loss_sum += lv;
      tape.backward(loss);
      opt.step();
    }
    log.train_loss.push_back(loss_sum / static_cast<double>(n_batches));

    double val = 0.0;
    std::size_t count = 0;
    if (!val_batches.empty()) {
      for (const auto& b : val_batches) {
        val += batch_mae(model, b);
        count += b.batch * b.nodes;
      }
      val /= static_cast<double>(count);
    } else {
      val = log.train_loss.back();
    }
    log.val_loss.push_back(val);
    log.epochs_run = epoch + 1;

    if (val < log.best_val) {
      log.best_val = val;
      log.best_epoch = epoch + 1;
      best = params;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  params = best;
  model.set_log(std::move(log));
  return model;
}

ForecastResult forecast(const PointForecaster& model, const TimeSeriesCollection& collection,
                        StepRange range) {
  const WindowSpec spec{model.config().window, model.config().horizon};
  const std::size_t count = spec.samples_in(range);
  if (count == 0) {
    throw ConfigError("forecast: range of " + std::to_string(range.size()) +
                      " steps admits no window of length " + std::to_string(spec.window) +
                      " at horizon " + std::to_string(spec.horizon));
  }
  ForecastResult out;
  out.forecasts.resize(count, collection.nodes());
  out.actuals.resize(count, collection.nodes());
  out.target_steps.reserve(count);
  std::size_t row = 0;
  for (const auto& batch : window_iter(collection, spec, range, 512)) {
    const auto pred = model.predict(batch);
    for (std::size_t b = 0; b < batch.batch; ++b, ++row) {
      for (std::size_t i = 0; i < batch.nodes; ++i) {
        out.forecasts(row, i) = pred(b, i);
        out.actuals(row, i) = batch.targets(b, i);
      }
      out.target_steps.push_back(batch.target_steps[b]);
    }
  }
  return out;
}

template nn::ParameterSet<float> make_forecaster_params<float>(const ForecasterConfig&, std::size_t,
                                                               std::size_t);
template nn::ParameterSet<double> make_forecaster_params<double>(const ForecasterConfig&,
                                                                 std::size_t, std::size_t);
template Matrix<float> scaled_targets<float>(const WindowBatch&, const Scaler&);
template Matrix<double> scaled_targets<double>(const WindowBatch&, const Scaler&);
template ad::Var<float> forecaster_forward<float>(ad::Tape<float>&, nn::ParameterSet<float>&,
                                                  const ForecasterConfig&, const Scaler&,
                                                  const WindowBatch&, const Matrix<float>*);
template ad::Var<double> forecaster_forward<double>(ad::Tape<double>&, nn::ParameterSet<double>&,
                                                    const ForecasterConfig&, const Scaler&,
                                                    const WindowBatch&, const Matrix<double>*);

}  // namespace relcp
