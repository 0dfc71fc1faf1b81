#include "relcp/relqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "relcp/errors.hpp"

namespace relcp {

void RelQNConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("relqn: hidden_size must be >= 1");
  if (window < 1) throw ConfigError("relqn: window must be >= 1");
  if (horizon < 1) throw ConfigError("relqn: horizon must be >= 1 (residuals become known one step later)");
  if (!corn_mode && embedding_size < 1) throw ConfigError("relqn: embedding_size must be >= 1");
  if (batch_size < 1 || batches_per_epoch < 1) throw ConfigError("relqn: batch settings must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("relqn: learning_rate must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("relqn: lr_decay_factor must lie in (0, 1]");
  if (lr_decay_period < 1) throw ConfigError("relqn: lr_decay_period must be >= 1");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw ConfigError("relqn: val_frac must lie in [0, 1)");
  if (!(sparsify_frac >= 0.0 && sparsify_frac <= 1.0)) throw ConfigError("relqn: sparsify_frac must lie in [0, 1]");
  if (!(selection_alpha > 0.0 && selection_alpha < 1.0)) throw ConfigError("relqn: selection_alpha must lie in (0, 1)");
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("relqn: ") + e.what());
  }
}

nlohmann::json RelQNConfig::to_json() const {
  return {{"hidden_size", hidden_size},
          {"embedding_size", embedding_size},
          {"mp_layers", mp_layers},
          {"window", window},
          {"horizon", horizon},
          {"k_neighbors", k_neighbors},
          {"dummies", dummies},
          {"sparsify_frac", sparsify_frac},
          {"grid", grid.levels},
          {"epochs", epochs},
          {"batches_per_epoch", batches_per_epoch},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"lr_decay_factor", lr_decay_factor},
          {"lr_decay_period", lr_decay_period},
          {"val_frac", val_frac},
          {"selection_alpha", selection_alpha},
          {"use_values", use_values},
          {"corn_mode", corn_mode},
          {"resample_test_graph", resample_test_graph},
          {"seed", seed}};
}

RelQNConfig RelQNConfig::from_json(const nlohmann::json& j) {
  RelQNConfig c;
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.embedding_size = j.value("embedding_size", c.embedding_size);
  c.mp_layers = j.value("mp_layers", c.mp_layers);
  c.window = j.value("window", c.window);
  c.horizon = j.value("horizon", c.horizon);
  c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
  c.dummies = j.value("dummies", c.dummies);
  c.sparsify_frac = j.value("sparsify_frac", c.sparsify_frac);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    if (g.is_number_integer()) {
      c.grid = QuantileGrid::uniform(g.get<std::size_t>());
    } else {
      c.grid.levels = g.get<std::vector<double>>();
    }
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_period = j.value("lr_decay_period", c.lr_decay_period);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.selection_alpha = j.value("selection_alpha", c.selection_alpha);
  c.use_values = j.value("use_values", c.use_values);
  c.corn_mode = j.value("corn_mode", c.corn_mode);
  c.resample_test_graph = j.value("resample_test_graph", c.resample_test_graph);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

ResidualSeries make_residual_series(std::span<const ResidualSet* const> parts,
                                    const TimeSeriesCollection* data) {
  ResidualSeries s;
  std::size_t total = 0;
  std::size_t nodes = 0;
  bool first = true;
  std::size_t expect = 0;
  for (const auto* p : parts) {
    if (p->size() == 0) continue;
    if (first) {
      s.first_step = p->target_steps.front();
      s.horizon = p->horizon;
      nodes = p->nodes();
      expect = s.first_step;
      first = false;
    }
    if (p->nodes() != nodes || p->horizon != s.horizon) {
      throw std::invalid_argument("residual series: parts disagree on nodes or horizon");
    }
    for (std::size_t step : p->target_steps) {
      if (step != expect) {
        throw std::invalid_argument("residual series: target steps are not contiguous at step " +
                                    std::to_string(expect));
      }
      ++expect;
    }
    total += p->size();
  }
  if (first) throw std::invalid_argument("residual series: no residuals");
  s.residuals.resize(total, nodes);
  std::size_t row = 0;
  for (const auto* p : parts)
    for (std::size_t r = 0; r < p->size(); ++r, ++row)
      for (std::size_t i = 0; i < nodes; ++i) s.residuals(row, i) = p->residuals(r, i);
  if (data != nullptr) {
    if (data->nodes() != nodes || s.end_step() > data->steps()) {
      throw std::invalid_argument("residual series: data does not cover the residual steps");
    }
    s.values.resize(total, nodes);
    for (std::size_t r = 0; r < total; ++r)
      for (std::size_t i = 0; i < nodes; ++i) s.values(r, i) = data->values()(s.first_step + r, i);
  }
  return s;
}

std::vector<std::size_t> admissible_targets(const ResidualSeries& series, std::size_t window,
                                            std::size_t horizon, StepRange range) {
  std::vector<std::size_t> out;
  const std::size_t lo = std::max(range.begin, series.first_step + window - 1 + horizon);
  const std::size_t hi = std::min(range.end, series.end_step());
  for (std::size_t t = lo; t < hi; ++t) out.push_back(t);
  return out;
}

template <typename S>
nn::ParameterSet<S> make_relqn_params(const RelQNConfig& cfg, std::size_t nodes,
                                      std::size_t input_channels, bool learn_graph) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  nn::ParameterSet<S> ps;
  const std::size_t h = cfg.hidden_size;
  const std::size_t dv = cfg.corn_mode ? 0 : cfg.embedding_size;
  if (!cfg.corn_mode) {
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(dv)));
    Matrix<S> v(nodes, dv);
    for (auto& x : v.flat()) x = static_cast<S>(init(rng));
    ps.add("embedding", std::move(v));
  }
  nn::Linear<S>::create(ps, "encoder", input_channels + dv, h, rng);
  nn::GRUCell<S>::create(ps, "gru", h, h, rng);
  if (!cfg.corn_mode) {
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      const std::string name = "mp" + std::to_string(l);
      nn::Linear<S>::create(ps, name + ".self", h, h, rng);
      ps.add(name + ".neigh", nn::uniform_init<S>(h, h, h, rng));
    }
  }
  nn::Linear<S>::create(ps, "decoder0", h + dv, h, rng);
  nn::Linear<S>::create(ps, "decoder1", h, cfg.grid.size(), rng);
  if (learn_graph && !cfg.corn_mode) {
    if (cfg.k_neighbors < 1 || cfg.k_neighbors > nodes - 1 + cfg.dummies) {
      throw ConfigError("relqn: k_neighbors = " + std::to_string(cfg.k_neighbors) +
                        " outside [1, N - 1 + dummies]");
    }
    ps.add("phi", graph::init_scores<S>(nodes, cfg.dummies, rng));
  }
  return ps;
}

template <typename S>
std::vector<S> inverse_degrees(const Matrix<S>& hard) {
  std::vector<S> inv(hard.rows());
  for (std::size_t i = 0; i < hard.rows(); ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < hard.cols(); ++j) deg += static_cast<double>(hard(i, j));
    inv[i] = static_cast<S>(1.0 / std::max(deg, 1.0));
  }
  return inv;
}

template <typename S>
AdjacencyArg<S> fixed_adjacency(ad::Tape<S>& tape, const Matrix<S>& adjacency) {
  return {tape.constant(adjacency), inverse_degrees(adjacency)};
}

template <typename S>
ad::Var<S> relqn_forward(ad::Tape<S>& tape, nn::ParameterSet<S>& params, const RelQNConfig& cfg,
                         const RelQNInput<S>& input, const std::optional<AdjacencyArg<S>>& adjacency) {
  if (input.steps.empty()) throw std::invalid_argument("relqn_forward: empty window");
  const std::size_t n = input.nodes;
  const std::size_t rows = input.batch * n;
  for (const auto& m : input.steps) {
    if (m.rows() != rows) throw std::invalid_argument("relqn_forward: step features have wrong row count");
  }

  std::optional<ad::Var<S>> emb;
  if (!cfg.corn_mode) {
    auto& v = params.at("embedding");
    if (v.value.rows() != n) throw std::invalid_argument("relqn_forward: node count differs from embeddings");
    std::vector<std::size_t> index(rows);
    for (std::size_t r = 0; r < rows; ++r) index[r] = r % n;
    emb = ad::gather_rows(tape.param(v), std::move(index));
  }

  const auto enc = nn::Linear<S>::bind(params, "encoder");
  const auto gru = nn::GRUCell<S>::bind(params, "gru");
  ad::Var<S> h = tape.constant(Matrix<S>(rows, cfg.hidden_size));
  for (const auto& step : input.steps) {
    ad::Var<S> x = tape.constant(step);
    if (emb) x = ad::concat_cols<S>({x, *emb});
    h = gru.step(tape, ad::relu(enc(tape, x)), h);
  }

  if (!cfg.corn_mode && cfg.mp_layers > 0) {
    if (!adjacency) throw std::invalid_argument("relqn_forward: message passing needs an adjacency");
    if (adjacency->adjacency.rows() != n || adjacency->adjacency.cols() != n) {
      throw std::invalid_argument("relqn_forward: adjacency is " +
                                  shape_str(adjacency->adjacency.value()) + ", expected N x N");
    }
    std::vector<S> factors(rows);
    for (std::size_t r = 0; r < rows; ++r) factors[r] = adjacency->inverse_degree[r % n];
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      const std::string name = "mp" + std::to_string(l);
      const auto self = nn::Linear<S>::bind(params, name + ".self");
      ad::Var<S> msg = ad::matmul(h, tape.param(params.at(name + ".neigh")));
      ad::Var<S> agg = ad::scale_rows(ad::batched_left_matmul(adjacency->adjacency, msg, input.batch), factors);
      h = ad::add(h, ad::relu(ad::add(self(tape, h), agg)));
    }
  }

  ad::Var<S> z = emb ? ad::concat_cols<S>({h, *emb}) : h;
  const auto d0 = nn::Linear<S>::bind(params, "decoder0");
  const auto d1 = nn::Linear<S>::bind(params, "decoder1");
  return d1(tape, ad::relu(d0(tape, z)));
}

RelQNModel::RelQNModel(RelQNConfig config, std::size_t nodes, Scaler residual_scaler,
                       Scaler value_scaler, std::optional<Matrix<double>> fixed_graph)
    : config_(std::move(config)),
      nodes_(nodes),
      residual_scaler_(residual_scaler),
      value_scaler_(value_scaler),
      fixed_graph_(std::move(fixed_graph)) {
  if (fixed_graph_ && (fixed_graph_->rows() != nodes || fixed_graph_->cols() != nodes)) {
    throw ConfigError("relqn: fixed graph is " + shape_str(*fixed_graph_) + ", expected " +
                      std::to_string(nodes) + "x" + std::to_string(nodes));
  }
  params_ = make_relqn_params<float>(config_, nodes, input_channels(), learns_graph());
}

RelQNInput<float> RelQNModel::make_input(const ResidualSeries& series,
                                         std::span<const std::size_t> target_steps) const {
  if (series.nodes() != nodes_) throw std::invalid_argument("relqn: series node count differs from the model");
  if (config_.use_values && series.values.empty()) {
    throw std::invalid_argument("relqn: model expects observed values alongside residuals");
  }
  const std::size_t w = config_.window;
  const std::size_t hz = config_.horizon;
  const std::size_t c = input_channels();
  RelQNInput<float> in;
  in.batch = target_steps.size();
  in.nodes = nodes_;
  in.steps.assign(w, Matrix<float>(in.batch * nodes_, c));
  bool have_targets = true;
  for (std::size_t b = 0; b < in.batch; ++b) {
    const std::size_t t = target_steps[b];
    if (t < series.first_step + w - 1 + hz) {
      throw std::invalid_argument("relqn: target step " + std::to_string(t) +
                                  " lacks a full input window");
    }
    if (t >= series.end_step()) have_targets = false;
    const std::size_t last = t - hz - series.first_step;
    for (std::size_t k = 0; k < w; ++k) {
      const std::size_t src = last + 1 - w + k;
      auto& m = in.steps[k];
      for (std::size_t i = 0; i < nodes_; ++i) {
        m(b * nodes_ + i, 0) = static_cast<float>(residual_scaler_.transform(series.residuals(src, i)));
        if (c > 1) m(b * nodes_ + i, 1) = static_cast<float>(value_scaler_.transform(series.values(src, i)));
      }
    }
  }
  if (have_targets) {
    in.targets.resize(in.batch * nodes_, 1);
    for (std::size_t b = 0; b < in.batch; ++b)
      for (std::size_t i = 0; i < nodes_; ++i)
        in.targets(b * nodes_ + i, 0) = static_cast<float>(
            residual_scaler_.transform(series.residuals(target_steps[b] - series.first_step, i)));
  }
  return in;
}

Matrix<float> RelQNModel::inference_adjacency(std::mt19937_64* rng) const {
  if (fixed_graph_) return fixed_graph_->cast<float>();
  if (config_.corn_mode) return Matrix<float>(nodes_, nodes_);
  return graph::gumbel_topk_sample(params_.at("phi").value, config_.k_neighbors, rng).hard;
}

nlohmann::json RelQNModel::to_json() const {
  nlohmann::json j;
  j["kind"] = "relqn";
  j["config"] = config_.to_json();
  j["nodes"] = nodes_;
  j["residual_scaler"] = {{"mean", residual_scaler_.mean}, {"std", residual_scaler_.std}};
  j["value_scaler"] = {{"mean", value_scaler_.mean}, {"std", value_scaler_.std}};
  if (fixed_graph_) {
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes_; ++i)
      for (std::size_t k = 0; k < nodes_; ++k)
        if ((*fixed_graph_)(i, k) != 0.0) edges.push_back({i, k, (*fixed_graph_)(i, k)});
    j["fixed_graph"] = edges;
  } else {
    j["fixed_graph"] = nullptr;
  }
  j["params"] = params_.to_json();
  j["training"] = {{"best_epoch", log_.best_epoch},
                   {"best_score", log_.best_score},
                   {"train_loss", log_.train_loss},
                   {"val_score", log_.val_score}};
  return j;
}

RelQNModel RelQNModel::from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string{}) != "relqn") throw ConfigError("checkpoint is not a relqn model");
  const auto cfg = RelQNConfig::from_json(j.at("config"));
  const std::size_t n = j.at("nodes");
  std::optional<Matrix<double>> fixed;
  if (!j.at("fixed_graph").is_null()) {
    Matrix<double> a(n, n);
    for (const auto& e : j.at("fixed_graph")) a(e[0].get<std::size_t>(), e[1].get<std::size_t>()) = e[2];
    fixed = std::move(a);
  }
  RelQNModel m(cfg, n, {j.at("residual_scaler").at("mean"), j.at("residual_scaler").at("std")},
               {j.at("value_scaler").at("mean"), j.at("value_scaler").at("std")}, std::move(fixed));
  m.params_.load_json(j.at("params"));
  const auto& t = j.at("training");
  m.log_.best_epoch = t.at("best_epoch");
  m.log_.best_score = t.at("best_score");
  m.log_.train_loss = t.at("train_loss").get<std::vector<double>>();
  m.log_.val_score = t.at("val_score").get<std::vector<double>>();
  return m;
}

double relqn_step(RelQNModel& model, nn::Adam<float>& opt, const RelQNInput<float>& input,
                  std::mt19937_64& rng, bool sample_graph) {
  if (input.targets.empty()) throw std::invalid_argument("relqn_step: windows have no targets");
  const auto& cfg = model.config();
  auto& params = model.params();
  params.zero_grad();
  ad::Tape<float> tape;
  std::optional<AdjacencyArg<float>> adj;
  if (!cfg.corn_mode) {
    if (model.fixed_graph()) {
      adj = fixed_adjacency(tape, model.fixed_graph()->cast<float>());
    } else {
      auto& phi = params.at("phi");
      auto sampled = graph::gumbel_topk_sample(phi.value, cfg.k_neighbors, sample_graph ? &rng : nullptr);
      if (sample_graph) graph::sparsify_backward(sampled, cfg.sparsify_frac, rng);
      adj = AdjacencyArg<float>{graph::straight_through(tape.param(phi), sampled),
                                inverse_degrees(sampled.hard)};
    }
  }
  const auto out = relqn_forward(tape, params, cfg, input, adj);
  const auto loss = ad::pinball_loss(out, input.targets, cfg.grid.levels);
  const double lv = loss.value()(0, 0);
  if (!std::isfinite(lv)) throw NumericalError("relqn: non-finite training loss");
  tape.backward(loss);
  opt.step();
  return lv;
}

QuantilePrediction predict_quantiles(const RelQNModel& model, const ResidualSeries& series,
                                     std::span<const std::size_t> target_steps, std::mt19937_64* rng) {
  const auto& cfg = model.config();
  QuantilePrediction out;
  out.grid = cfg.grid;
  out.steps = target_steps.size();
  out.nodes = model.nodes();
  out.values.resize(out.steps * out.nodes * out.grid.size());
  out.target_steps.assign(target_steps.begin(), target_steps.end());

  nn::ParameterSet<float> ps = model.params();
  for (std::size_t k = 0; k < ps.size(); ++k) ps[k].frozen = true;
  const bool resample = cfg.resample_test_graph && rng != nullptr;
  Matrix<float> adj = model.inference_adjacency(nullptr);

  const std::size_t chunk = 256;
  const auto& rs = model.residual_scaler();
  for (std::size_t lo = 0; lo < target_steps.size(); lo += chunk) {
    const std::size_t hi = std::min(lo + chunk, target_steps.size());
    auto input = model.make_input(series, target_steps.subspan(lo, hi - lo));
    if (resample) adj = model.inference_adjacency(rng);
    ad::Tape<float> tape;
    std::optional<AdjacencyArg<float>> a;
    if (!cfg.corn_mode) a = fixed_adjacency(tape, adj);
    const auto q = relqn_forward(tape, ps, cfg, input, a);
    const auto& qv = q.value();
    for (std::size_t b = 0; b < hi - lo; ++b) {
      for (std::size_t i = 0; i < out.nodes; ++i) {
        auto dst = out.at(lo + b, i);
        const std::size_t r = b * out.nodes + i;
        for (std::size_t l = 0; l < dst.size(); ++l) dst[l] = rs.inverse(static_cast<double>(qv(r, l)));
        std::sort(dst.begin(), dst.end());
      }
    }
  }
  return out;
}

namespace {

/// Winkler score of residual intervals at `alpha` on the given targets, or the
/// mean pinball loss when the grid does not hold the interval levels.
double selection_score(const RelQNModel& model, const ResidualSeries& series,
                       std::span<const std::size_t> targets) {
  const auto& cfg = model.config();
  const auto q = predict_quantiles(model, series, targets);
  const auto a = cfg.grid.index_of(cfg.selection_alpha / 2.0);
  const auto b = cfg.grid.index_of(1.0 - cfg.selection_alpha / 2.0);
  double acc = 0.0;
  for (std::size_t t = 0; t < q.steps; ++t) {
    for (std::size_t i = 0; i < q.nodes; ++i) {
      const double y = series.residuals(targets[t] - series.first_step, i);
      const auto v = q.at(t, i);
      if (a && b) {
        acc += winkler_score(v[*a], v[*b], y, cfg.selection_alpha);
      } else {
        for (std::size_t l = 0; l < v.size(); ++l) {
          const double lev = cfg.grid.levels[l];
          acc += v[l] >= y ? (1.0 - lev) * (v[l] - y) : lev * (y - v[l]);
        }
      }
    }
  }
  return acc / static_cast<double>(q.steps * q.nodes);
}

}  // namespace

RelQNModel train_relqn(const ResidualSeries& calibration, const RelQNConfig& config,
                       const std::optional<Matrix<double>>& fixed_graph) {
  config.validate();
  if (calibration.horizon != config.horizon) {
    throw ConfigError("relqn: horizon " + std::to_string(config.horizon) +
                      " differs from the residual horizon " + std::to_string(calibration.horizon));
  }
  const std::size_t n = calibration.nodes();
  const StepRange all{calibration.first_step, calibration.end_step()};
  const auto targets = admissible_targets(calibration, config.window, config.horizon, all);
  if (targets.empty()) {
    throw ConfigError("relqn: calibration series of " + std::to_string(calibration.steps()) +
                      " steps is shorter than window + horizon");
  }

  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(config.val_frac * static_cast<double>(calibration.steps())));
  const std::size_t val_begin = calibration.end_step() - std::min(n_val, calibration.steps());
  std::vector<std::size_t> train_targets;
  std::vector<std::size_t> val_targets;
  for (std::size_t t : targets) (t >= val_begin && n_val > 0 ? val_targets : train_targets).push_back(t);
  if (train_targets.empty()) throw ConfigError("relqn: no training windows left after the validation slice");

  // Scalers fit on the calibration block; the validation slice is part of it.
  const Scaler rs = fit_scaler(calibration.residuals);
  const Scaler vs = calibration.values.empty() ? Scaler{} : fit_scaler(calibration.values);

  RelQNModel model(config, n, rs, vs, fixed_graph);
  nn::Adam<float> opt(model.params(), {.lr = config.learning_rate});
  std::mt19937_64 rng(config.seed ^ 0xd1b54a32d192ed03ull);

  RelQNTrainingLog log;
  log.best_score = std::numeric_limits<double>::infinity();
  nn::ParameterSet<float> best = model.params();

  std::vector<std::size_t> order = train_targets;
  std::size_t cursor = order.size();
  std::vector<std::size_t> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_lr(config.learning_rate *
               std::pow(config.lr_decay_factor, static_cast<double>(epoch / config.lr_decay_period)));
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < config.batches_per_epoch; ++k) {
      batch.clear();
      while (batch.size() < config.batch_size && batch.size() < train_targets.size()) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        batch.push_back(order[cursor++]);
      }
      const auto input = model.make_input(calibration, batch);
      loss_sum += relqn_step(model, opt, input, rng, true);
    }
    log.train_loss.push_back(loss_sum / static_cast<double>(config.batches_per_epoch));

    if (!val_targets.empty()) {
      const double score = selection_score(model, calibration, val_targets);
      log.val_score.push_back(score);
      if (score < log.best_score) {
        log.best_score = score;
        log.best_epoch = epoch + 1;
        best = model.params();
      }
    }
  }
  if (!val_targets.empty()) {
    model.params() = best;
  } else {
    log.best_epoch = config.epochs;
    log.best_score = log.train_loss.back();
  }
  model.set_log(std::move(log));
  return model;
}

template nn::ParameterSet<float> make_relqn_params<float>(const RelQNConfig&, std::size_t, std::size_t, bool);
template nn::ParameterSet<double> make_relqn_params<double>(const RelQNConfig&, std::size_t, std::size_t, bool);
template ad::Var<float> relqn_forward<float>(ad::Tape<float>&, nn::ParameterSet<float>&, const RelQNConfig&,
                                             const RelQNInput<float>&, const std::optional<AdjacencyArg<float>>&);
template ad::Var<double> relqn_forward<double>(ad::Tape<double>&, nn::ParameterSet<double>&, const RelQNConfig&,
                                               const RelQNInput<double>&, const std::optional<AdjacencyArg<double>>&);
template AdjacencyArg<float> fixed_adjacency<float>(ad::Tape<float>&, const Matrix<float>&);
template AdjacencyArg<double> fixed_adjacency<double>(ad::Tape<double>&, const Matrix<double>&);
template std::vector<float> inverse_degrees<float>(const Matrix<float>&);
template std::vector<double> inverse_degrees<double>(const Matrix<double>&);

}  // namespace relcp
