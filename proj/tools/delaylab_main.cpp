// delaylab: command-line front end for the experiment harness.
//
//   delaylab run    --config <file> [--seed N] [--out DIR]
//   delaylab sweep  --config <file> [--out DIR]
//   delaylab report --in DIR --format csv|json|svg [--out DIR] [--linear]
//
// run executes every seed in the config (or just --seed when given) and
// writes run_seed<seed>.csv plus runs.json; sweep runs the config's grid and
// writes sweep.csv plus sweep.json; report re-emits a previous run or sweep
// directory in the requested format. Seed-parallel work uses
// DELAYLAB_WORKERS threads when that variable is set.
//
// Exit code 0 on success. On failure one JSON object
// {"error": {"type": ..., "message": ...}} is printed to stderr and the
// exit code is nonzero.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "delaylab/common.hpp"
#include "delaylab/harness.hpp"
#include "delaylab/report.hpp"

namespace {

using nlohmann::json;

int fail(const std::string& type, const std::string& message) {
  json err;
  err["error"] = {{"type", type}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return 1;
}

int run_command(const std::string& config_path, bool seed_given,
                std::uint64_t seed, const std::string& out_override) {
  delaylab::ExperimentConfig cfg = delaylab::load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  const std::vector<std::uint64_t> seeds =
      seed_given ? std::vector<std::uint64_t>{seed} : cfg.seeds;

  std::vector<delaylab::RegretRecord> records;
  records.reserve(seeds.size());
  for (std::uint64_t s : seeds) {
    records.push_back(delaylab::run_experiment(cfg, s));
  }

  std::vector<std::string> files =
      delaylab::emit_report(records, delaylab::ReportFormat::csv, cfg.out_dir);
  for (std::string& f : delaylab::emit_report(
           records, delaylab::ReportFormat::json, cfg.out_dir)) {
    files.push_back(std::move(f));
  }

  json summary;
  summary["command"] = "run";
  summary["out"] = cfg.out_dir;
  summary["files"] = files;
  summary["runs"] = json::array();
  for (const delaylab::RegretRecord& rec : records) {
    summary["runs"].push_back(
        {{"seed", rec.seed}, {"final_regret", rec.final_regret()}});
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int sweep_command(const std::string& config_path,
                  const std::string& out_override) {
  delaylab::ExperimentConfig cfg = delaylab::load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;

  delaylab::SweepResult result = delaylab::sweep(cfg);
  std::vector<std::string> files =
      delaylab::emit_report(result, delaylab::ReportFormat::csv, cfg.out_dir);
  for (std::string& f : delaylab::emit_report(
           result, delaylab::ReportFormat::json, cfg.out_dir)) {
    files.push_back(std::move(f));
  }

  json summary;
  summary["command"] = "sweep";
  summary["out"] = cfg.out_dir;
  summary["files"] = files;
  summary["cells"] = json::array();
  for (const delaylab::SweepCell& cell : result.cells) {
    summary["cells"].push_back({{"episodes", cell.episodes},
                                {"delay", cell.fixed_delay},
                                {"learner", cell.learner_kind},
                                {"completed", cell.completed},
                                {"mean_regret", cell.mean_regret},
                                {"stderr", cell.stderr_regret}});
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int report_command(const std::string& in_dir, const std::string& format,
                   std::string out_dir, bool linear) {
  if (out_dir.empty()) out_dir = in_dir;
  delaylab::ReportFormat fmt = delaylab::ReportFormat::csv;
  if (format == "json") fmt = delaylab::ReportFormat::json;
  if (format == "svg") fmt = delaylab::ReportFormat::svg_lines;

  const std::filesystem::path runs_path =
      std::filesystem::path(in_dir) / "runs.json";
  const std::filesystem::path sweep_path =
      std::filesystem::path(in_dir) / "sweep.json";

  std::vector<std::string> files;
  if (std::filesystem::exists(runs_path)) {
    std::ifstream in(runs_path);
    delaylab::require(in.good(),
                      "report: cannot open " + runs_path.string());
    json all = json::parse(in);
    delaylab::require(all.is_array() && !all.empty(),
                      "report: " + runs_path.string() +
                          " holds no run records");
    std::vector<delaylab::RegretRecord> records;
    for (const json& j : all) records.push_back(delaylab::record_from_json(j));
    files = delaylab::emit_report(records, fmt, out_dir, !linear);
  } else if (std::filesystem::exists(sweep_path)) {
    std::ifstream in(sweep_path);
    delaylab::require(in.good(),
                      "report: cannot open " + sweep_path.string());
    files = delaylab::emit_report(delaylab::sweep_from_json(json::parse(in)),
                                  fmt, out_dir);
  } else {
    throw delaylab::ContractViolation(
        "report: neither runs.json nor sweep.json found in " + in_dir);
  }

  json summary;
  summary["command"] = "report";
  summary["out"] = out_dir;
  summary["files"] = files;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regret experiments for episodic MDPs with delayed feedback"};
  app.require_subcommand(1);

  std::string config_path, in_dir, format = "csv", out_dir;
  std::uint64_t seed = 0;
  bool linear = false;

  CLI::App* run_cmd =
      app.add_subcommand("run", "execute one experiment per configured seed");
  run_cmd->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  CLI::Option* seed_opt = run_cmd->add_option(
      "--seed", seed, "run exactly this seed instead of the config's list");
  run_cmd->add_option("--out", out_dir, "output directory override");

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run the config's (K, delay, learner) grid");
  sweep_cmd->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  sweep_cmd->add_option("--out", out_dir, "output directory override");

  CLI::App* report_cmd = app.add_subcommand(
      "report", "re-emit a run or sweep directory in another format");
  report_cmd->add_option("--in", in_dir, "directory holding runs.json or sweep.json")
      ->required();
  report_cmd->add_option("--format", format, "csv, json or svg")
      ->check(CLI::IsMember({"csv", "json", "svg"}));
  report_cmd->add_option("--out", out_dir,
                         "output directory (default: the input directory)");
  report_cmd->add_flag("--linear", linear,
                       "linear axes for the SVG chart (default: log-log)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::ostringstream silent;
    app.exit(e, silent, silent);
    return fail("usage", e.what());
  }

  try {
    if (run_cmd->parsed()) {
      return run_command(config_path, seed_opt->count() > 0, seed, out_dir);
    }
    if (sweep_cmd->parsed()) return sweep_command(config_path, out_dir);
    return report_command(in_dir, format, out_dir, linear);
  } catch (const delaylab::ContractViolation& e) {
    return fail("config", e.what());
  } catch (const delaylab::NumericalError& e) {
    return fail("numerical", e.what());
  } catch (const json::exception& e) {
    return fail("config", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}
