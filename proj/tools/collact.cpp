// Command-line entry point: simulate, sweep, report, validate-data.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "collact/collact.hpp"

namespace {

using namespace collact;

std::vector<ScenarioConfig> expand_all(const std::vector<ScenarioConfig>& scenarios) {
  std::vector<ScenarioConfig> cells;
  for (const auto& s : scenarios)
    for (auto& c : expand_sweep(s)) cells.push_back(std::move(c));
  return cells;
}

int run(const std::string& config, const std::string& out, int workers, std::optional<int> trials,
        ReportFormat format) {
  const auto cells = expand_all(load_config(config));
  SweepOptions opts;
  opts.workers = workers;
  opts.trials = trials;
  const auto outcomes = run_sweep(cells, opts);
  emit_report(out, cells, outcomes, format);
  std::size_t failed = 0;
  for (const auto& o : outcomes) failed += o.failed;
  std::fprintf(stderr, "%zu cells, %zu trials, %zu failed -> %s\n", cells.size(), outcomes.size(), failed,
               out.c_str());
  return failed == 0 ? 0 : 1;
}

int validate_data(const std::string& family, const std::string& path) {
  if (family == "recsys") {
    const auto r = load_movielens(path);
    std::printf("users=%zu items=%zu entries=%zu\n", r.users().size(), r.items().size(), r.entries().size());
  } else if (family == "linear") {
    const auto d = load_adult(path);
    std::size_t positive = 0;
    for (const auto& row : d.rows) positive += row.label == Income::positive;
    std::printf("rows=%zu dropped=%zu positive=%zu\n", d.rows.size(), d.dropped_rows, positive);
  } else if (family == "textclass") {
    const auto c = load_text_corpus(path);
    std::printf("classes=%zu train=%zu test=%zu\n", c.classes.size(), c.indices(Split::train).size(),
                c.indices(Split::test).size());
  } else {
    throw ConfigError("unknown family '" + family + "'");
  }
  return 0;
}

ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "structured") return ReportFormat::structured;
  throw ConfigError("unknown format '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation harness for interacting data-modifying collectives"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config, out, in, format = "csv", family, path;
  int workers = 1;
  int trials = 0;

  auto* simulate = app.add_subcommand("simulate", "Run every cell of a config with its own trial counts");
  simulate->add_option("--config", config, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--format", format, "Aggregate format: csv or structured");

  auto* sweep = app.add_subcommand("sweep", "Run a sweep with a fixed trial count per cell");
  sweep->add_option("--config", config, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--trials", trials, "Trials per cell")->required()->check(CLI::PositiveNumber);
  sweep->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--format", format, "Aggregate format: csv or structured");

  auto* report = app.add_subcommand("report", "Rebuild aggregates from trials.csv");
  report->add_option("--in", in, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format, "csv or structured");

  auto* validate = app.add_subcommand("validate-data", "Load a dataset and print its counts");
  validate->add_option("--family", family, "recsys, linear or textclass")->required();
  validate->add_option("--path", path, "Dataset file or directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) return run(config, out, workers, std::nullopt, parse_format(format));
    if (*sweep) return run(config, out, workers, trials, parse_format(format));
    if (*report) {
      rebuild_report(in, parse_format(format));
      return 0;
    }
    if (*validate) return validate_data(family, path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
