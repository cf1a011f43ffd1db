#pragma once

// Report emission for run records and sweep tables: CSV (lossless
// round-trip), JSON mirrors, and SVG charts of cumulative regret.
//
// The SVG places each curve's points in data units — raw (k, regret), or
// (log10 k, log10 regret) for log-log charts — inside a <g transform> that
// maps data space onto the canvas, so the numbers in the points attribute
// are the data itself and slopes can be read back off the file exactly.

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "delaylab/harness.hpp"

namespace delaylab {

inline constexpr const char* kRegretCsvHeader =
    "k,value,cum_value,hindsight,regret,missing,skipped,phase";

// One header line plus one row per episode; doubles are printed with 17
// significant digits so parsing them back is exact.
std::string regret_csv(const RegretRecord& record);
std::vector<RegretRow> regret_rows_from_csv(const std::string& csv);

// {"name", "seed", "config", "final_regret", "rows": [...], "suffered":
// [...]}; each row object mirrors the CSV columns.
nlohmann::json to_json(const RegretRecord& record);
RegretRecord record_from_json(const nlohmann::json& j);

// Cumulative-regret polyline per record. With log_log set, points are
// (log10 k, log10 regret) and episodes with regret <= 0 are omitted.
std::string regret_svg(std::span<const RegretRecord> records, bool log_log);

// Sweep table: header episodes,delay,learner,seeds,mean_regret,stderr,
// failures and its JSON mirror (which also carries the per-seed details).
std::string sweep_csv(const SweepResult& result);
nlohmann::json to_json(const SweepResult& result);
SweepResult sweep_from_json(const nlohmann::json& j);

enum class ReportFormat { csv, json, svg_lines };

// Writes the records in the requested format into out_dir (created if
// needed) and returns the paths written: run_seed<seed>.csv per record /
// runs.json / regret.svg.
std::vector<std::string> emit_report(std::span<const RegretRecord> records,
                                     ReportFormat format,
                                     const std::string& out_dir,
                                     bool log_log = true);

// sweep.csv / sweep.json in out_dir (SVG is not defined for aggregates).
std::vector<std::string> emit_report(const SweepResult& result,
                                     ReportFormat format,
                                     const std::string& out_dir);

}  // namespace delaylab
