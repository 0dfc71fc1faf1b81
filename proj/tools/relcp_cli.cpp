// relcp: command-line front end for the conformal pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relcp/errors.hpp"
#include "relcp/experiment.hpp"
#include "relcp/runtime.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kMissing = 3, kNumerical = 4 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<double> alphas;
  std::optional<std::string> method;
  bool true_graph = false;
  bool beta_intervals = false;
  std::optional<std::string> out;
  bool resume = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonFlags& f, bool needs_config) {
  auto* c = sub->add_option("--config", f.config, "experiment config (JSON)");
  if (needs_config) c->required();
  sub->add_option("--seed", f.seed, "global seed");
  sub->add_option("--alpha", f.alphas, "miscoverage level (repeatable)")->take_all();
  sub->add_option("--method", f.method, "scp | nexcp | seqcp | cornn | corel");
  sub->add_flag("--true-graph", f.true_graph, "fix the relational graph to the simulated one");
  sub->add_flag("--beta-intervals", f.beta_intervals, "pick the narrowest quantile pair per node");
  sub->add_option("--out", f.out, "output directory");
  sub->add_flag("--resume", f.resume, "reuse up-to-date artifacts");
  sub->add_flag("-q,--quiet", f.quiet, "suppress progress lines");
}

relcp::ExperimentConfig load(const CommonFlags& f) {
  relcp::Overrides ov;
  ov.seed = f.seed;
  ov.alphas = f.alphas;
  ov.method = f.method;
  ov.true_graph = f.true_graph;
  ov.beta_intervals = f.beta_intervals;
  if (f.out) ov.out = fs::path(*f.out);
  return relcp::load_config(f.config, ov);
}

}  // namespace

int main(int argc, char** argv) {
  relcp::tune_allocator();

  CLI::App app{"Relational conformal prediction for correlated time series"};
  app.set_version_flag("--version", relcp::kLibraryVersion);
  app.require_subcommand(1);

  CommonFlags f;
  auto* simulate = app.add_subcommand("simulate", "simulate the synthetic graph dataset");
  auto* train = app.add_subcommand("train-forecaster", "train the base forecaster and cache residuals");
  auto* calibrate = app.add_subcommand("calibrate-evaluate", "fit a conformal method and score the test range");
  auto* adapt = app.add_subcommand("adapt-evaluate", "rolling evaluation with node-embedding adaptation");
  for (auto* sub : {simulate, train, calibrate, adapt}) add_common(sub, f, true);

  auto* report = app.add_subcommand("report", "merge metric reports of one or more runs");
  std::vector<std::string> run_dirs;
  bool long_csv = false;
  report->add_option("runs", run_dirs, "run directories");
  add_common(report, f, false);
  report->add_flag("--long", long_csv, "also write a long-format CSV for plotting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const relcp::RunOptions opt{.resume = f.resume, .verbose = !f.quiet};
    if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      fs::path out;
      if (!f.config.empty()) {
        const auto cfg = load(f);
        if (dirs.empty()) dirs.push_back(cfg.output_dir);
        out = cfg.output_dir;
      }
      if (f.out) out = *f.out;
      if (dirs.empty()) throw relcp::ConfigError("report: give run directories or --config");
      if (out.empty()) out = dirs.front();
      const auto rows = relcp::aggregate_reports(dirs);
      relcp::write_report_csv(out / "summary.csv", rows);
      if (long_csv) relcp::write_report_long_csv(out / "summary_long.csv", rows);
      std::cout << relcp::format_report_table(rows);
      return kOk;
    }
    const auto cfg = load(f);
    if (*simulate) {
      relcp::cmd_simulate(cfg, opt);
    } else if (*train) {
      relcp::cmd_train_forecaster(cfg, opt);
    } else if (*calibrate) {
      for (const auto& r : relcp::cmd_calibrate_evaluate(cfg, opt)) std::cout << r.csv_row() << '\n';
    } else if (*adapt) {
      for (const auto& r : relcp::cmd_adapt_evaluate(cfg, opt)) {
        std::cout << r.frozen.csv_row() << '\n' << r.adapted.csv_row() << '\n';
      }
    }
    return kOk;
  } catch (const relcp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const relcp::MissingArtifact& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return kMissing;
  } catch (const relcp::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
}
