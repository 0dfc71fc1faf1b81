#include "relcp/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "relcp/conformal.hpp"
#include "relcp/errors.hpp"
#include "relcp/graph_learn.hpp"

namespace relcp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void log_line(const RunOptions& opt, const std::string& msg) {
  if (opt.verbose) std::fprintf(stderr, "[relcp] %s\n", msg.c_str());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// Records an artifact and a stage timing in the manifest.
void update_manifest(const ExperimentConfig& cfg, const std::string& stage, double secs,
                     const std::vector<std::pair<std::string, fs::path>>& artifacts,
                     const std::string& stage_hash) {
  const RunPaths paths{cfg.output_dir};
  json m = fs::exists(paths.manifest()) ? read_json(paths.manifest()) : json::object();
  m["config_hash"] = cfg.hash();
  m["library_version"] = kLibraryVersion;
  m["config"] = cfg.source;
  m["timings"][stage] = secs;
  for (const auto& [name, path] : artifacts) {
    m["artifacts"][name] = {{"path", fs::relative(path, cfg.output_dir).string()},
                            {"stage_hash", stage_hash},
                            {"config_hash", cfg.hash()}};
  }
  write_json(paths.manifest(), m);
}

std::string alpha_tag(double alpha) { return fmt::format("a{}", alpha); }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

std::string MethodConfig::label() const {
  std::string l = name;
  if (name == "corel" && true_graph) l += "-true-graph";
  return l;
}

// ------------------------------------------------------------------ config

ExperimentConfig parse_config(json doc, const Overrides& ov) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  if (ov.seed) doc["seed"] = *ov.seed;
  if (!ov.alphas.empty()) doc["alphas"] = ov.alphas;
  if (ov.method) doc["method"]["name"] = *ov.method;
  if (ov.true_graph) doc["method"]["true_graph"] = true;
  if (ov.beta_intervals) doc["intervals"] = "beta";
  if (ov.out) doc["output_dir"] = ov.out->string();

  ExperimentConfig c;
  try {
    c.seed = get_or<std::uint64_t>(doc, "seed", 0);

    const json ds = doc.value("dataset", json::object());
    c.dataset.kind = ds.value("kind", "gpvar");
    c.dataset.name = ds.value("name", c.dataset.kind);
    c.dataset.seed = get_or<std::uint64_t>(ds, "seed", c.seed);
    if (c.dataset.kind == "gpvar") {
      c.dataset.nodes = ds.value("nodes", c.dataset.nodes);
      c.dataset.communities = ds.value("communities", c.dataset.communities);
      c.dataset.steps = ds.value("steps", c.dataset.steps);
      c.dataset.burn_in = ds.value("burn_in", c.dataset.burn_in);
      c.dataset.params = gpvar::params_from_json(ds.value("params", json::object()));
      if (c.dataset.communities < 1 || c.dataset.nodes % c.dataset.communities != 0) {
        throw ConfigError("dataset: communities must divide nodes");
      }
    } else if (c.dataset.kind == "csv") {
      if (!ds.contains("values")) throw ConfigError("dataset: csv datasets need a 'values' path");
      c.dataset.values_csv = ds.at("values").get<std::string>();
      for (const auto& p : ds.value("covariates", json::array())) c.dataset.covariate_csvs.emplace_back(p.get<std::string>());
    } else {
      throw ConfigError("dataset: unknown kind '" + c.dataset.kind + "' (expected gpvar | csv)");
    }

    const json sp = doc.value("split", json::object());
    c.split.train_frac = sp.value("train_frac", c.split.train_frac);
    c.split.cal_frac = sp.value("cal_frac", c.split.cal_frac);
    c.split.test_frac = sp.value("test_frac", c.split.test_frac);
    c.split.val_frac_of_cal = sp.value("val_frac_of_cal", c.split.val_frac_of_cal);
    c.split.validate();

    json fc = doc.value("forecaster", json::object());
    c.base_model = fc.value("name", "rnn");
    if (c.base_model != "rnn" && c.base_model != "stgnn") {
      throw ConfigError("forecaster: unknown model '" + c.base_model + "' (expected rnn | stgnn)");
    }
    if (!fc.contains("use_graph")) fc["use_graph"] = c.base_model == "stgnn";
    if (!fc.contains("seed")) fc["seed"] = c.seed + 1;
    c.forecaster = ForecasterConfig::from_json(fc);
    if (c.forecaster.use_graph && c.dataset.kind != "gpvar") {
      throw ConfigError("forecaster: the graph variant needs a simulated dataset with a known graph");
    }

    const json md = doc.value("method", json::object());
    c.method.name = md.value("name", "scp");
    if (c.method.name != "scp" && c.method.name != "nexcp" && c.method.name != "seqcp" &&
        c.method.name != "cornn" && c.method.name != "corel") {
      throw ConfigError("method: unknown '" + c.method.name + "' (expected scp | nexcp | seqcp | cornn | corel)");
    }
    c.method.rho = md.value("rho", c.method.rho);
    c.method.window = md.value("window", c.method.window);
    c.method.stream = md.value("stream", c.method.stream);
    c.method.true_graph = md.value("true_graph", c.method.true_graph);
    if (c.method.true_graph && c.method.name != "corel") {
      throw ConfigError("method: --true-graph applies to corel only");
    }
    if (c.method.true_graph && c.dataset.kind != "gpvar") {
      throw ConfigError("method: the true graph is only known for simulated datasets");
    }
    json rq = md.value("relqn", json::object());
    if (!rq.contains("window")) rq["window"] = c.forecaster.window;
    if (!rq.contains("horizon")) rq["horizon"] = c.forecaster.horizon;
    if (!rq.contains("seed")) rq["seed"] = c.seed + 2;
    rq["corn_mode"] = c.method.name == "cornn";
    c.method.relqn = RelQNConfig::from_json(rq);

    c.alphas = doc.value("alphas", std::vector<double>{0.1});
    if (c.alphas.empty()) throw ConfigError("alphas: need at least one level");
    for (double a : c.alphas)
      if (!(a > 0.0 && a < 1.0)) throw ConfigError("alphas: every level must lie in (0, 1)");
    const std::string iv = doc.value("intervals", "plain");
    if (iv != "plain" && iv != "beta") throw ConfigError("intervals: expected plain | beta");
    c.beta_intervals = iv == "beta";

    json ad = doc.value("adaptation", json::object());
    if (!ad.contains("seed")) ad["seed"] = c.seed + 3;
    c.adaptation = AdaptationConfig::from_json(ad);

    c.output_dir = doc.value("output_dir", c.output_dir.string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.source = std::move(doc);
  return c;
}

ExperimentConfig load_config(const fs::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  // External data paths are relative to the config file.
  if (doc.contains("dataset") && doc["dataset"].value("kind", "") == "csv") {
    auto& ds = doc["dataset"];
    auto rebase = [&](json& p) {
      fs::path q = p.get<std::string>();
      if (q.is_relative()) p = (path.parent_path() / q).lexically_normal().string();
    };
    if (ds.contains("values")) rebase(ds["values"]);
    if (ds.contains("covariates"))
      for (auto& p : ds["covariates"]) rebase(p);
  }
  return parse_config(std::move(doc), overrides);
}

std::string ExperimentConfig::hash() const {
  json j = source;
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

std::string ExperimentConfig::data_hash() const {
  return fnv1a_hex(json{{"dataset", source.value("dataset", json::object())}, {"seed", dataset.seed}}.dump());
}

std::string ExperimentConfig::forecaster_hash() const {
  json sp = {{"train", split.train_frac}, {"cal", split.cal_frac}, {"test", split.test_frac},
             {"val", split.val_frac_of_cal}};
  return fnv1a_hex(json{{"data", data_hash()}, {"split", sp}, {"model", base_model},
                        {"forecaster", forecaster.to_json()}}
                       .dump());
}

std::string ExperimentConfig::method_hash() const {
  return fnv1a_hex(json{{"forecaster", forecaster_hash()},
                        {"method", method.label()},
                        {"relqn", method.relqn.to_json()}}
                       .dump());
}

// ------------------------------------------------------------------ data

Matrix<double> true_adjacency(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind != "gpvar") throw ConfigError("true graph requested for an external dataset");
  return gpvar::community_graph(cfg.dataset.nodes, cfg.dataset.communities).adjacency;
}

TimeSeriesCollection load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == "csv") {
    if (!fs::exists(cfg.dataset.values_csv)) {
      throw MissingArtifact("dataset not found: " + cfg.dataset.values_csv.string());
    }
    try {
      return read_collection_csv(cfg.dataset.values_csv, cfg.dataset.covariate_csvs);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const RunPaths paths{cfg.output_dir};
  if (!fs::exists(paths.data_csv()) || !fs::exists(paths.data_sidecar())) {
    throw MissingArtifact("dataset not found under " + cfg.output_dir.string() + " (run simulate first)");
  }
  const auto side = read_json(paths.data_sidecar());
  if (side.value("config_hash", "") != cfg.data_hash()) {
    throw MissingArtifact("dataset in " + cfg.output_dir.string() +
                          " was simulated with a different config (run simulate again)");
  }
  return read_collection_csv(paths.data_csv());
}

ResidualSet residuals_for(const PointForecaster& model, const TimeSeriesCollection& data,
                          StepRange targets) {
  const std::size_t back = model.config().window + model.config().horizon - 1;
  if (targets.begin < back) {
    throw ConfigError("residuals: range starts before a full input window is available");
  }
  const auto fr = forecast(model, data, {targets.begin - back, targets.end});
  return compute_residuals(fr.actuals, fr.forecasts, fr.target_steps, model.config().horizon);
}

ResidualCache load_residual_cache(const ExperimentConfig& cfg) {
  const RunPaths paths{cfg.output_dir};
  for (const auto& p : {paths.residual_meta(), paths.residuals("calibration"), paths.residuals("test")}) {
    if (!fs::exists(p)) throw MissingArtifact("residual cache missing: " + p.string() + " (run train-forecaster first)");
  }
  const auto meta = read_json(paths.residual_meta());
  if (meta.value("stage_hash", "") != cfg.forecaster_hash()) {
    throw MissingArtifact("residual cache was produced by a different forecaster config (run train-forecaster again)");
  }
  const std::size_t horizon = meta.at("horizon");
  auto load = [&](const std::string& part) {
    auto [steps, values] = read_matrix_csv(paths.residuals(part));
    return ResidualSet{std::move(values), std::move(steps), horizon};
  };
  return {load("calibration"), load("test")};
}

// ------------------------------------------------------------------ commands

void cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (cfg.dataset.kind != "gpvar") throw ConfigError("simulate: dataset is external; nothing to simulate");
  const RunPaths paths{cfg.output_dir};
  if (opt.resume && fs::exists(paths.data_csv()) && fs::exists(paths.data_sidecar()) &&
      read_json(paths.data_sidecar()).value("config_hash", "") == cfg.data_hash()) {
    log_line(opt, "simulate: dataset up to date, skipping");
    return;
  }
  const auto t0 = Clock::now();
  const auto graph = gpvar::community_graph(cfg.dataset.nodes, cfg.dataset.communities);
  const auto sim = gpvar::simulate(cfg.dataset.params, graph, cfg.dataset.steps, cfg.dataset.burn_in,
                                   cfg.dataset.seed);
  std::vector<std::size_t> steps(cfg.dataset.steps);
  for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = t;
  fs::create_directories(paths.data_csv().parent_path());
  write_matrix_csv(paths.data_csv(), sim.series.values(), steps);
  auto side = gpvar::sidecar_json(cfg.dataset.params, graph, cfg.dataset.steps, cfg.dataset.burn_in,
                                  cfg.dataset.seed, cfg.dataset.communities);
  side["config_hash"] = cfg.data_hash();
  write_json(paths.data_sidecar(), side);
  const double secs = seconds_since(t0);
  update_manifest(cfg, "simulate", secs, {{"data", paths.data_csv()}, {"data_sidecar", paths.data_sidecar()}},
                  cfg.data_hash());
  log_line(opt, fmt::format("simulate: {} steps x {} nodes in {:.1f}s", cfg.dataset.steps, cfg.dataset.nodes, secs));
}

void cmd_train_forecaster(const ExperimentConfig& cfg, const RunOptions& opt) {
  const RunPaths paths{cfg.output_dir};
  const auto data = load_dataset(cfg);
  const auto split = make_splits(data.steps(), cfg.split);
  const auto t0 = Clock::now();

  std::optional<PointForecaster> model;
  double train_secs = 0.0;  // of the run that produced the checkpoint
  if (opt.resume && fs::exists(paths.forecaster())) {
    const auto j = read_json(paths.forecaster());
    if (j.value("stage_hash", "") == cfg.forecaster_hash()) {
      model = PointForecaster::from_json(j);
      train_secs = j.value("train_seconds", 0.0);
      log_line(opt, "train-forecaster: checkpoint up to date, skipping training");
    }
  }
  if (!model) {
    std::optional<Matrix<double>> graph;
    if (cfg.forecaster.use_graph) graph = true_adjacency(cfg);
    model = train_point_forecaster(data, split, cfg.forecaster, graph);
    train_secs = seconds_since(t0);
    json j = model->to_json();
    j["stage_hash"] = cfg.forecaster_hash();
    j["config_hash"] = cfg.hash();
    j["train_seconds"] = train_secs;
    write_json(paths.forecaster(), j);
    log_line(opt, fmt::format("train-forecaster: {} epochs (best {}, val MAE {:.4f}) in {:.1f}s",
                              model->log().epochs_run, model->log().best_epoch, model->log().best_val,
                              train_secs));
  }
  const auto t1 = Clock::now();

  const auto cal = residuals_for(*model, data, split.cal);
  const auto test = residuals_for(*model, data, split.test);
  fs::create_directories(paths.residual_meta().parent_path());
  write_matrix_csv(paths.residuals("calibration"), cal.residuals, cal.target_steps);
  write_matrix_csv(paths.residuals("test"), test.residuals, test.target_steps);
  write_json(paths.residual_meta(), {{"horizon", cal.horizon},
                                     {"stage_hash", cfg.forecaster_hash()},
                                     {"config_hash", cfg.hash()},
                                     {"calibration", {split.cal.begin, split.cal.end}},
                                     {"test", {split.test.begin, split.test.end}},
                                     {"base_model", cfg.base_model}});
  update_manifest(cfg, "train-forecaster", train_secs + seconds_since(t1),
                  {{"forecaster", paths.forecaster()},
                   {"residuals_calibration", paths.residuals("calibration")},
                   {"residuals_test", paths.residuals("test")},
                   {"residual_meta", paths.residual_meta()}},
                  cfg.forecaster_hash());
}

namespace {

struct TestBlock {
  Matrix<double> forecasts;
  Matrix<double> actuals;
  std::vector<std::size_t> steps;
};

TestBlock test_block(const TimeSeriesCollection& data, const ResidualSet& test) {
  TestBlock b;
  b.steps = test.target_steps;
  b.actuals.resize(test.size(), test.nodes());
  b.forecasts.resize(test.size(), test.nodes());
  for (std::size_t r = 0; r < test.size(); ++r)
    for (std::size_t i = 0; i < test.nodes(); ++i) {
      b.actuals(r, i) = data.values()(test.target_steps[r], i);
      b.forecasts(r, i) = b.actuals(r, i) - test.residuals(r, i);
    }
  return b;
}

std::string report_label(const ExperimentConfig& cfg) {
  return cfg.method.label() + (cfg.beta_intervals ? "+beta" : "");
}

void write_report(const ExperimentConfig& cfg, const MetricReport& r, const std::string& stem,
                  std::vector<std::pair<std::string, fs::path>>& artifacts) {
  const RunPaths paths{cfg.output_dir};
  json j = r.to_json();
  j["kind"] = "metric_report";
  j["config_hash"] = cfg.hash();
  write_json(paths.report(stem + ".json"), j);
  write_text(paths.report(stem + ".csv"), MetricReport::csv_header() + "\n" + r.csv_row() + "\n");
  artifacts.emplace_back("report_" + stem, paths.report(stem + ".json"));
}

RelQNModel obtain_relqn(const ExperimentConfig& cfg, const RunOptions& opt, const ResidualCache& cache,
                        const TimeSeriesCollection& data, bool train_if_missing) {
  const RunPaths paths{cfg.output_dir};
  const auto ckpt = paths.relqn(cfg.method.label());
  if (fs::exists(ckpt) && (opt.resume || !train_if_missing)) {
    const auto j = read_json(ckpt);
    if (j.value("stage_hash", "") == cfg.method_hash()) {
      log_line(opt, "relqn: checkpoint up to date, skipping training");
      return RelQNModel::from_json(j);
    }
    if (!train_if_missing) throw MissingArtifact("relqn checkpoint " + ckpt.string() + " is stale");
  }
  if (!train_if_missing) {
    throw MissingArtifact("relqn checkpoint missing: " + ckpt.string() + " (run calibrate-evaluate first)");
  }
  const auto t0 = Clock::now();
  const ResidualSet* parts[] = {&cache.calibration};
  const auto series = make_residual_series(parts, &data);
  std::optional<Matrix<double>> fixed;
  if (cfg.method.true_graph) fixed = true_adjacency(cfg);
  auto model = train_relqn(series, cfg.method.relqn, fixed);
  json j = model.to_json();
  j["stage_hash"] = cfg.method_hash();
  j["config_hash"] = cfg.hash();
  j["train_seconds"] = seconds_since(t0);
  write_json(ckpt, j);
  log_line(opt, fmt::format("relqn: trained {} epochs (best {}, score {:.4f}) in {:.1f}s",
                            model.log().train_loss.size(), model.log().best_epoch, model.log().best_score,
                            seconds_since(t0)));
  return model;
}

}  // namespace

std::vector<MetricReport> cmd_calibrate_evaluate(const ExperimentConfig& cfg, const RunOptions& opt) {
  const RunPaths paths{cfg.output_dir};
  const auto cache = load_residual_cache(cfg);
  const auto data = load_dataset(cfg);
  const auto block = test_block(data, cache.test);
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, fs::path>> artifacts;

  std::vector<IntervalSet> sets;
  if (cfg.method.learned()) {
    const auto model = obtain_relqn(cfg, opt, cache, data, true);
    artifacts.emplace_back("relqn_" + cfg.method.label(), paths.relqn(cfg.method.label()));
    const ResidualSet* parts[] = {&cache.calibration, &cache.test};
    const auto series = make_residual_series(parts, &data);
    const auto q = predict_quantiles(model, series, block.steps);
    for (double a : cfg.alphas) {
      try {
        sets.push_back(build_intervals(block.forecasts, q, a, cfg.beta_intervals));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (model.learns_graph()) {
      fs::create_directories(paths.graph_export(cfg.method.label()).parent_path());
      graph::write_edge_list(paths.graph_export(cfg.method.label()), model.params().at("phi").value,
                             cfg.method.relqn.k_neighbors);
      artifacts.emplace_back("graph_" + cfg.method.label(), paths.graph_export(cfg.method.label()));
    }
  } else {
    const Stream stream{cfg.method.stream ? &cache.test : nullptr};
    for (double a : cfg.alphas) {
      if (cfg.method.name == "scp") {
        sets.push_back(scp_intervals(cache.calibration, block.forecasts, block.steps, a, stream));
      } else if (cfg.method.name == "nexcp") {
        sets.push_back(nexcp_intervals(cache.calibration, block.forecasts, block.steps, a, cfg.method.rho, stream));
      } else {
        sets.push_back(seqcp_intervals(cache.calibration, block.forecasts, block.steps, a, cfg.method.window, stream));
      }
    }
  }

  std::vector<MetricReport> reports;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    auto r = evaluate_intervals(sets[k], block.actuals);
    r.method = report_label(cfg);
    r.dataset = cfg.dataset.name;
    r.base_model = cfg.base_model;
    r.seed = cfg.seed;
    write_report(cfg, r, report_label(cfg) + "_" + alpha_tag(cfg.alphas[k]), artifacts);
    log_line(opt, fmt::format("{} alpha={}: dCov={:+.2f} width={:.4f} winkler={:.4f}", r.method, r.alpha,
                              r.delta_cov, r.pi_width, r.winkler));
    reports.push_back(std::move(r));
  }
  update_manifest(cfg, "calibrate-evaluate:" + report_label(cfg), seconds_since(t0), artifacts, cfg.method_hash());
  return reports;
}

std::vector<AdaptiveEvalResult> cmd_adapt_evaluate(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (cfg.method.name != "corel") throw ConfigError("adapt-evaluate: only corel has node embeddings to adapt");
  const RunPaths paths{cfg.output_dir};
  const auto cache = load_residual_cache(cfg);
  const auto data = load_dataset(cfg);
  const auto block = test_block(data, cache.test);
  const auto model = obtain_relqn(cfg, opt, cache, data, false);
  const ResidualSet* parts[] = {&cache.calibration, &cache.test};
  const auto series = make_residual_series(parts, &data);
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, fs::path>> artifacts;
  std::vector<AdaptiveEvalResult> out;
  for (double a : cfg.alphas) {
    auto res = rolling_adaptive_eval(model, series, block.steps, block.forecasts, block.actuals, a,
                                     cfg.beta_intervals, cfg.adaptation);
    for (auto* r : {&res.adapted, &res.frozen}) {
      r->dataset = cfg.dataset.name;
      r->base_model = cfg.base_model;
      r->seed = cfg.seed;
    }
    res.adapted.method = report_label(cfg) + "+adapted";
    res.frozen.method = report_label(cfg) + "+frozen";
    write_report(cfg, res.adapted, res.adapted.method + "_" + alpha_tag(a), artifacts);
    write_report(cfg, res.frozen, res.frozen.method + "_" + alpha_tag(a), artifacts);
    const auto folds = paths.report(report_label(cfg) + "_folds_" + alpha_tag(a) + ".csv");
    res.write_fold_csv(folds);
    artifacts.emplace_back("folds_" + alpha_tag(a), folds);
    log_line(opt, fmt::format("adapt alpha={}: winkler adapted={:.4f} frozen={:.4f}", a, res.adapted.winkler,
                              res.frozen.winkler));
    out.push_back(std::move(res));
  }
  update_manifest(cfg, "adapt-evaluate", seconds_since(t0), artifacts, cfg.method_hash());
  return out;
}

// ------------------------------------------------------------------ reports

std::vector<ReportRow> aggregate_reports(const std::vector<fs::path>& run_dirs) {
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::map<Key, std::vector<MetricReport>> groups;
  for (const auto& dir : run_dirs) {
    const auto reports = dir / "reports";
    if (!fs::is_directory(reports)) throw MissingArtifact("no reports directory in " + dir.string());
    for (const auto& entry : fs::directory_iterator(reports)) {
      if (entry.path().extension() != ".json") continue;
      const auto j = read_json(entry.path());
      if (j.value("kind", "") != "metric_report") continue;
      auto r = MetricReport::from_json(j);
      groups[{r.dataset, r.base_model, r.method, r.alpha}].push_back(std::move(r));
    }
  }
  if (groups.empty()) throw MissingArtifact("no metric reports found");
  std::vector<ReportRow> rows;
  for (const auto& [key, rs] : groups) {
    ReportRow row;
    std::tie(row.dataset, row.base_model, row.method, row.alpha) = key;
    row.runs = rs.size();
    auto stats = [&](auto field, double& mean, double& sd) {
      mean = 0.0;
      for (const auto& r : rs) mean += field(r);
      mean /= static_cast<double>(rs.size());
      sd = 0.0;
      if (rs.size() > 1) {
        for (const auto& r : rs) sd += (field(r) - mean) * (field(r) - mean);
        sd = std::sqrt(sd / static_cast<double>(rs.size() - 1));
      }
    };
    stats([](const MetricReport& r) { return r.delta_cov; }, row.delta_cov_mean, row.delta_cov_std);
    stats([](const MetricReport& r) { return r.pi_width; }, row.pi_width_mean, row.pi_width_std);
    stats([](const MetricReport& r) { return r.winkler; }, row.winkler_mean, row.winkler_std);
    rows.push_back(row);
  }
  return rows;
}

void write_report_csv(const fs::path& path, const std::vector<ReportRow>& rows) {
  std::string s = "dataset,base_model,method,alpha,runs,delta_cov_mean,delta_cov_std,pi_width_mean,"
                  "pi_width_std,winkler_mean,winkler_std\n";
  for (const auto& r : rows) {
    s += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.dataset, r.base_model,
                     r.method, r.alpha, r.runs, r.delta_cov_mean, r.delta_cov_std, r.pi_width_mean,
                     r.pi_width_std, r.winkler_mean, r.winkler_std);
  }
  write_text(path, s);
}

void write_report_long_csv(const fs::path& path, const std::vector<ReportRow>& rows) {
  std::string s = "dataset,base_model,method,alpha,metric,mean,std\n";
  for (const auto& r : rows) {
    const std::tuple<const char*, double, double> metrics[] = {
        {"delta_cov", r.delta_cov_mean, r.delta_cov_std},
        {"pi_width", r.pi_width_mean, r.pi_width_std},
        {"winkler", r.winkler_mean, r.winkler_std}};
    for (const auto& [name, mean, sd] : metrics)
      s += fmt::format("{},{},{},{},{},{:.6f},{:.6f}\n", r.dataset, r.base_model, r.method, r.alpha, name, mean, sd);
  }
  write_text(path, s);
}

std::string format_report_table(const std::vector<ReportRow>& rows) {
  std::string s = fmt::format("{:<10} {:<7} {:<28} {:>6} {:>16} {:>16} {:>16}\n", "dataset", "model", "method",
                              "alpha", "dCov", "PI-Width", "Winkler");
  for (const auto& r : rows) {
    s += fmt::format("{:<10} {:<7} {:<28} {:>6} {:>16} {:>16} {:>16}\n", r.dataset, r.base_model, r.method,
                     r.alpha, fmt::format("{:.2f} ± {:.2f}", r.delta_cov_mean, r.delta_cov_std),
                     fmt::format("{:.3f} ± {:.3f}", r.pi_width_mean, r.pi_width_std),
                     fmt::format("{:.3f} ± {:.3f}", r.winkler_mean, r.winkler_std));
  }
  return s;
}

}  // namespace relcp
