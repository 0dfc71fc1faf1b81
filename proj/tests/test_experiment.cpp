#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "relcp/errors.hpp"
#include "relcp/experiment.hpp"

using namespace relcp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_doc(const fs::path& out) {
  auto doc = json::parse(R"({
    "seed": 3,
    "dataset": {"kind": "gpvar", "nodes": 8, "communities": 2, "steps": 900, "burn_in": 20},
    "split": {"train_frac": 0.4, "cal_frac": 0.4, "test_frac": 0.2, "val_frac_of_cal": 0.25},
    "forecaster": {"name": "rnn", "hidden_size": 4, "window": 3, "horizon": 1, "epochs": 2,
                   "max_batches_per_epoch": 5, "batch_size": 16, "learning_rate": 0.01, "patience": 5},
    "method": {"name": "scp",
               "relqn": {"hidden_size": 4, "embedding_size": 2, "mp_layers": 1, "k_neighbors": 2, "dummies": 2,
                         "grid": 20, "epochs": 2, "batches_per_epoch": 3, "batch_size": 8}},
    "alphas": [0.1],
    "adaptation": {"n_folds": 2, "finetune_epochs": 1, "max_batches_per_epoch": 2}
  })");
  doc["output_dir"] = out.string();
  return doc;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("relcp_test_" + name);
  fs::remove_all(p);
  return p;
}

const RunOptions quiet{.resume = false, .verbose = false};
const RunOptions resume{.resume = true, .verbose = false};

void run_base(const ExperimentConfig& cfg) {
  cmd_simulate(cfg, quiet);
  cmd_train_forecaster(cfg, quiet);
}

double sample_std(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("stage seeds derive from the global seed") {
  const auto c = parse_config(tiny_doc("x"));
  CHECK(c.seed == 3);
  CHECK(c.dataset.seed == 3);
  CHECK(c.forecaster.seed == 4);
  CHECK(c.method.relqn.seed == 5);
  CHECK(c.adaptation.seed == 6);
  CHECK(c.method.relqn.window == 3);
  CHECK(c.method.relqn.horizon == 1);
  CHECK(c.method.relqn.grid.size() == 19);
  CHECK_FALSE(c.forecaster.use_graph);
  CHECK_FALSE(c.beta_intervals);
}

TEST_CASE("command-line overrides win over the document") {
  Overrides ov;
  ov.seed = 10;
  ov.alphas = {0.05, 0.2};
  ov.method = "corel";
  ov.true_graph = true;
  ov.beta_intervals = true;
  ov.out = "elsewhere";
  const auto c = parse_config(tiny_doc("x"), ov);
  CHECK(c.seed == 10);
  CHECK(c.forecaster.seed == 11);
  CHECK(c.alphas == std::vector<double>{0.05, 0.2});
  CHECK(c.method.name == "corel");
  CHECK(c.method.label() == "corel-true-graph");
  CHECK(c.beta_intervals);
  CHECK(c.output_dir == fs::path("elsewhere"));
  CHECK(c.source.at("seed") == 10);
}

TEST_CASE("invalid documents are configuration errors") {
  auto bad = [](auto edit) {
    auto d = tiny_doc("x");
    edit(d);
    return d;
  };
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["method"]["name"] = "magic"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["alphas"] = {1.2}; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["alphas"] = json::array(); })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["dataset"]["communities"] = 3; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["dataset"]["kind"] = "parquet"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["dataset"] = {{"kind", "csv"}}; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["method"]["true_graph"] = true; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["forecaster"]["name"] = "transformer"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["forecaster"]["window"] = "five"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["intervals"] = "fancy"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["split"]["test_frac"] = 0.5; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json& d) { d["adaptation"]["n_folds"] = 0; })), ConfigError);
  CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config files may carry comments and relative data paths") {
  const auto dir = scratch("load");
  fs::create_directories(dir / "conf");
  std::ofstream(dir / "conf" / "c.json") << R"({
    // external data next to the config
    "dataset": {"kind": "csv", "values": "../data/v.csv"},
    "method": {"name": "nexcp", "rho": 0.99}
  })";
  const auto c = load_config(dir / "conf" / "c.json");
  CHECK(c.dataset.values_csv == (dir / "data" / "v.csv").lexically_normal());
  CHECK(c.method.rho == 0.99);
  CHECK_THROWS_AS(load_dataset(c), MissingArtifact);
  std::ofstream(dir / "conf" / "broken.json") << "{ \"seed\": ";
  CHECK_THROWS_AS(load_config(dir / "conf" / "broken.json"), ConfigError);
}

TEST_CASE("stage hashes track only what each stage depends on") {
  const auto base = parse_config(tiny_doc("a"));
  CHECK(base.hash().size() == 16);
  CHECK(parse_config(tiny_doc("b")).hash() == base.hash());

  Overrides method;
  method.method = "corel";
  const auto corel = parse_config(tiny_doc("a"), method);
  CHECK(corel.forecaster_hash() == base.forecaster_hash());
  CHECK(corel.method_hash() != base.method_hash());
  CHECK(corel.hash() != base.hash());

  auto d = tiny_doc("a");
  d["forecaster"]["hidden_size"] = 6;
  const auto wider = parse_config(d);
  CHECK(wider.data_hash() == base.data_hash());
  CHECK(wider.forecaster_hash() != base.forecaster_hash());

  Overrides seed;
  seed.seed = 4;
  CHECK(parse_config(tiny_doc("a"), seed).data_hash() != base.data_hash());
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("stages need their inputs") {
  const auto dir = scratch("missing");
  Overrides ov;
  ov.method = "corel";
  const auto cfg = parse_config(tiny_doc(dir), ov);
  CHECK_THROWS_AS(cmd_train_forecaster(cfg, quiet), MissingArtifact);
  cmd_simulate(cfg, quiet);
  CHECK_THROWS_AS(cmd_calibrate_evaluate(cfg, quiet), MissingArtifact);
  cmd_train_forecaster(cfg, quiet);
  CHECK_THROWS_AS(cmd_adapt_evaluate(cfg, quiet), MissingArtifact);
  CHECK_THROWS_AS(aggregate_reports({dir}), MissingArtifact);

  // A dataset simulated under another seed is stale.
  Overrides other = ov;
  other.seed = 99;
  const auto stale = parse_config(tiny_doc(dir), other);
  CHECK_THROWS_AS(cmd_train_forecaster(stale, quiet), MissingArtifact);
  CHECK_THROWS_AS(cmd_adapt_evaluate(parse_config(tiny_doc(dir)), quiet), ConfigError);
}

TEST_CASE("pipeline writes reports, a manifest and reproducible metrics") {
  const auto a = scratch("pipe_a");
  const auto b = scratch("pipe_b");
  Overrides ov;
  ov.method = "corel";
  const auto ca = parse_config(tiny_doc(a), ov);
  const auto cb = parse_config(tiny_doc(b), ov);
  run_base(ca);
  run_base(cb);
  const auto ra = cmd_calibrate_evaluate(ca, quiet);
  const auto rb = cmd_calibrate_evaluate(cb, quiet);
  REQUIRE(ra.size() == 1);
  CHECK(ra[0].method == "corel");
  CHECK(ra[0].base_model == "rnn");
  CHECK(ra[0].winkler == rb[0].winkler);
  CHECK(ra[0].pi_width == rb[0].pi_width);
  CHECK(ra[0].winkler >= ra[0].pi_width);

  const RunPaths paths{a};
  CHECK(fs::exists(paths.report("corel_a0.1.json")));
  CHECK(fs::exists(paths.report("corel_a0.1.csv")));
  CHECK(fs::exists(paths.graph_export("corel")));
  CHECK(fs::exists(paths.relqn("corel")));

  std::ifstream in(paths.manifest());
  const auto m = json::parse(in);
  CHECK(m.at("config_hash") == ca.hash());
  CHECK(m.at("library_version") == kLibraryVersion);
  for (const auto& key : {"data", "forecaster", "residuals_calibration", "residuals_test", "relqn_corel",
                          "report_corel_a0.1"}) {
    INFO(key);
    REQUIRE(m.at("artifacts").contains(key));
    CHECK(fs::exists(a / m["artifacts"][key]["path"].get<std::string>()));
  }
  CHECK(m.at("artifacts").at("forecaster").at("stage_hash") == ca.forecaster_hash());
  CHECK(m.at("timings").contains("train-forecaster"));

  const auto adapted = cmd_adapt_evaluate(ca, quiet);
  REQUIRE(adapted.size() == 1);
  CHECK(adapted[0].frozen.winkler == doctest::Approx(ra[0].winkler).epsilon(1e-12));
  CHECK(adapted[0].folds.size() == 2);
  CHECK(fs::exists(paths.report("corel+adapted_a0.1.json")));
  CHECK(fs::exists(paths.report("corel_folds_a0.1.csv")));
}

TEST_CASE("resume reuses up-to-date artifacts") {
  const auto dir = scratch("resume");
  Overrides ov;
  ov.method = "corel";
  const auto cfg = parse_config(tiny_doc(dir), ov);
  run_base(cfg);
  const auto first = cmd_calibrate_evaluate(cfg, quiet);
  const RunPaths paths{dir};
  const auto t_data = fs::last_write_time(paths.data_csv());
  const auto t_model = fs::last_write_time(paths.forecaster());
  const auto t_relqn = fs::last_write_time(paths.relqn("corel"));

  cmd_simulate(cfg, resume);
  cmd_train_forecaster(cfg, resume);
  const auto again = cmd_calibrate_evaluate(cfg, resume);
  CHECK(fs::last_write_time(paths.data_csv()) == t_data);
  CHECK(fs::last_write_time(paths.forecaster()) == t_model);
  CHECK(fs::last_write_time(paths.relqn("corel")) == t_relqn);
  CHECK(again[0].winkler == first[0].winkler);

  // A changed forecaster config retrains even under resume.
  auto d = tiny_doc(dir);
  d["forecaster"]["learning_rate"] = 0.02;
  const auto changed = parse_config(d);
  cmd_train_forecaster(changed, resume);
  std::ifstream in(paths.forecaster());
  CHECK(json::parse(in).at("stage_hash") == changed.forecaster_hash());
}

TEST_CASE("classic methods, several levels and beta intervals") {
  const auto dir = scratch("classic");
  Overrides ov;
  ov.alphas = {0.1, 0.2};
  const auto base = parse_config(tiny_doc(dir), ov);
  run_base(base);
  const auto scp = cmd_calibrate_evaluate(base, quiet);
  REQUIRE(scp.size() == 2);
  CHECK(scp[1].pi_width < scp[0].pi_width);
  for (const auto* name : {"nexcp", "seqcp"}) {
    Overrides m = ov;
    m.method = name;
    auto d = tiny_doc(dir);
    d["method"]["window"] = 100;
    const auto r = cmd_calibrate_evaluate(parse_config(d, m), quiet);
    CHECK(r.size() == 2);
  }
  Overrides m = ov;
  m.method = "cornn";
  m.beta_intervals = true;
  const auto cornn = cmd_calibrate_evaluate(parse_config(tiny_doc(dir), m), quiet);
  CHECK(cornn[0].method == "cornn+beta");

  const auto rows = aggregate_reports({dir});
  CHECK(rows.size() == 4 * 2);
  for (const auto& r : rows) {
    CHECK(r.runs == 1);
    CHECK(r.winkler_std == 0.0);
  }
  const auto table = format_report_table(rows);
  CHECK(table.find("cornn+beta") != std::string::npos);
  write_report_csv(dir / "summary.csv", rows);
  write_report_long_csv(dir / "summary_long.csv", rows);
  std::ifstream in(dir / "summary_long.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 1 + rows.size() * 3);
}

TEST_CASE("reports aggregate across seeds with the sample standard deviation") {
  std::vector<fs::path> dirs;
  std::vector<double> winkler, width;
  for (std::uint64_t s : {1, 2, 3}) {
    const auto dir = scratch("agg" + std::to_string(s));
    Overrides ov;
    ov.seed = s;
    const auto cfg = parse_config(tiny_doc(dir), ov);
    run_base(cfg);
    const auto r = cmd_calibrate_evaluate(cfg, quiet);
    winkler.push_back(r[0].winkler);
    width.push_back(r[0].pi_width);
    dirs.push_back(dir);
  }
  const auto rows = aggregate_reports(dirs);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].runs == 3);
  CHECK(rows[0].method == "scp");
  CHECK(rows[0].winkler_mean == doctest::Approx((winkler[0] + winkler[1] + winkler[2]) / 3.0));
  CHECK(rows[0].winkler_std == doctest::Approx(sample_std(winkler)));
  CHECK(rows[0].pi_width_std == doctest::Approx(sample_std(width)));
  CHECK(rows[0].winkler_std > 0.0);
}

TEST_CASE("external CSV datasets run through the same stages") {
  const auto dir = scratch("csv");
  const auto sim_dir = scratch("csv_src");
  const auto sim = parse_config(tiny_doc(sim_dir));
  cmd_simulate(sim, quiet);
  auto d = tiny_doc(dir);
  d["dataset"] = {{"kind", "csv"}, {"name", "external"}, {"values", RunPaths{sim_dir}.data_csv().string()}};
  const auto cfg = parse_config(d);
  CHECK_THROWS_AS(cmd_simulate(cfg, quiet), ConfigError);
  cmd_train_forecaster(cfg, quiet);
  const auto r = cmd_calibrate_evaluate(cfg, quiet);
  CHECK(r[0].dataset == "external");
  d["forecaster"]["name"] = "stgnn";
  CHECK_THROWS_AS(parse_config(d), ConfigError);
}

}  // TEST_SUITE
