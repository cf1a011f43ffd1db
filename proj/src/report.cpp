#include "delaylab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace delaylab {

using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(std::string_view field, const char* what) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  require(ec == std::errc() && ptr == field.data() + field.size(),
          std::string("csv: bad ") + what + " field '" + std::string(field) +
              "'");
  return value;
}

long long parse_int(std::string_view field, const char* what) {
  long long value = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  require(ec == std::errc() && ptr == field.data() + field.size(),
          std::string("csv: bad ") + what + " field '" + std::string(field) +
              "'");
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "emit_report: cannot open " + path + " for writing");
  out << content;
  out.flush();
  require(out.good(), "emit_report: write to " + path + " failed");
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string regret_csv(const RegretRecord& record) {
  std::string out = kRegretCsvHeader;
  out += '\n';
  for (const RegretRow& r : record.rows) {
    out += std::to_string(r.k);
    out += ',';
    out += fmt(r.value);
    out += ',';
    out += fmt(r.cum_value);
    out += ',';
    out += fmt(r.hindsight);
    out += ',';
    out += fmt(r.regret);
    out += ',';
    out += std::to_string(r.missing);
    out += ',';
    out += std::to_string(r.skipped);
    out += ',';
    out += std::to_string(r.phase);
    out += '\n';
  }
  return out;
}

std::vector<RegretRow> regret_rows_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kRegretCsvHeader,
          "csv: header mismatch, expected '" + std::string(kRegretCsvHeader) +
              "'");
  std::vector<RegretRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    require(fields.size() == 8, "csv: expected 8 fields per row");
    RegretRow r;
    r.k = parse_int(fields[0], "k");
    r.value = parse_double(fields[1], "value");
    r.cum_value = parse_double(fields[2], "cum_value");
    r.hindsight = parse_double(fields[3], "hindsight");
    r.regret = parse_double(fields[4], "regret");
    r.missing = parse_int(fields[5], "missing");
    r.skipped = parse_int(fields[6], "skipped");
    r.phase = static_cast<int>(parse_int(fields[7], "phase"));
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

json to_json(const RegretRecord& record) {
  json rows = json::array();
  for (const RegretRow& r : record.rows) {
    rows.push_back({{"k", r.k},
                    {"value", r.value},
                    {"cum_value", r.cum_value},
                    {"hindsight", r.hindsight},
                    {"regret", r.regret},
                    {"missing", r.missing},
                    {"skipped", r.skipped},
                    {"phase", r.phase}});
  }
  json j;
  j["name"] = record.name;
  j["seed"] = record.seed;
  j["config"] = record.config_json.empty()
                    ? json(nullptr)
                    : json::parse(record.config_json);
  j["final_regret"] = record.final_regret();
  j["rows"] = std::move(rows);
  j["suffered"] = record.suffered;
  return j;
}

RegretRecord record_from_json(const json& j) {
  RegretRecord rec;
  rec.name = j.value("name", std::string());
  rec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("config") && !j.at("config").is_null()) {
    rec.config_json = j.at("config").dump();
  }
  for (const json& r : j.at("rows")) {
    RegretRow row;
    row.k = r.at("k").get<long long>();
    row.value = r.at("value").get<double>();
    row.cum_value = r.at("cum_value").get<double>();
    row.hindsight = r.at("hindsight").get<double>();
    row.regret = r.at("regret").get<double>();
    row.missing = r.at("missing").get<long long>();
    row.skipped = r.at("skipped").get<long long>();
    row.phase = r.at("phase").get<int>();
    rec.rows.push_back(row);
  }
  rec.suffered = j.value("suffered", std::vector<double>{});
  return rec;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

std::string regret_svg(std::span<const RegretRecord> records, bool log_log) {
  require(!records.empty(), "regret_svg: no records");
  constexpr double kWidth = 720.0, kHeight = 480.0;
  constexpr double kLeft = 70.0, kRight = 160.0, kTop = 24.0, kBottom = 52.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  static constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                             "#9467bd", "#ff7f0e", "#8c564b"};

  // Data-space points per record; log-log drops nonpositive regret.
  std::vector<std::vector<std::pair<double, double>>> lines;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const RegretRecord& rec : records) {
    std::vector<std::pair<double, double>> pts;
    for (const RegretRow& r : rec.rows) {
      double x = static_cast<double>(r.k);
      double y = r.regret;
      if (log_log) {
        if (r.k <= 0 || y <= 0.0) continue;
        x = std::log10(x);
        y = std::log10(y);
      }
      pts.emplace_back(x, y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    lines.push_back(std::move(pts));
  }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" "
         "height=\"480\" viewBox=\"0 0 720 480\" font-family=\"sans-serif\" "
         "font-size=\"12\">\n";
  svg += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" +
         fmt(plot_w) + "\" height=\"" + fmt(plot_h) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";

  const bool have_points =
      std::any_of(lines.begin(), lines.end(),
                  [](const auto& p) { return !p.empty(); });
  if (!have_points) {
    svg += "<text x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" +
           fmt(kTop + plot_h / 2) +
           "\" text-anchor=\"middle\">no positive regret to draw</text>\n";
    svg += "</svg>\n";
    return svg;
  }

  const double xspan = std::max(xmax - xmin, 1e-9);
  const double yspan = std::max(ymax - ymin, 1e-9);
  const double sx = plot_w / xspan;
  const double sy = plot_h / yspan;
  const double tx = kLeft - xmin * sx;
  const double ty = (kTop + plot_h) + ymin * sy;

  // Axis extremes in data units.
  const char* x_label = log_log ? "log10 k" : "k";
  const char* y_label = log_log ? "log10 regret" : "regret";
  svg += "<text x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kHeight - 28.0) +
         "\">" + fmt(xmin) + "</text>\n";
  svg += "<text x=\"" + fmt(kLeft + plot_w) + "\" y=\"" +
         fmt(kHeight - 28.0) + "\" text-anchor=\"end\">" + fmt(xmax) +
         "</text>\n";
  svg += "<text x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" +
         fmt(kHeight - 10.0) + "\" text-anchor=\"middle\">" + x_label +
         "</text>\n";
  svg += "<text x=\"" + fmt(kLeft - 6.0) + "\" y=\"" + fmt(kTop + plot_h) +
         "\" text-anchor=\"end\">" + fmt(ymin) + "</text>\n";
  svg += "<text x=\"" + fmt(kLeft - 6.0) + "\" y=\"" + fmt(kTop + 12.0) +
         "\" text-anchor=\"end\">" + fmt(ymax) + "</text>\n";
  svg += "<text x=\"14\" y=\"" + fmt(kTop + plot_h / 2) +
         "\" transform=\"rotate(-90 14 " + fmt(kTop + plot_h / 2) + ")\" "
         "text-anchor=\"middle\">" + std::string(y_label) + "</text>\n";

  // Curves live in data units inside one affine group; the points attribute
  // below is therefore the data itself.
  svg += "<g transform=\"translate(" + fmt(tx) + " " + fmt(ty) + ") scale(" +
         fmt(sx) + " " + fmt(-sy) + ")\">\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const char* color = kPalette[i % (sizeof kPalette / sizeof *kPalette)];
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\" "
           "points=\"";
    for (const auto& [x, y] : lines[i]) {
      svg += fmt(x);
      svg += ',';
      svg += fmt(y);
      svg += ' ';
    }
    if (svg.back() == ' ') svg.pop_back();
    svg += "\"/>\n";
  }
  svg += "</g>\n";

  // Legend.
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double y = kTop + 16.0 + 16.0 * static_cast<double>(i);
    const char* color = kPalette[i % (sizeof kPalette / sizeof *kPalette)];
    svg += "<line x1=\"" + fmt(kWidth - kRight + 10.0) + "\" y1=\"" + fmt(y) +
           "\" x2=\"" + fmt(kWidth - kRight + 30.0) + "\" y2=\"" + fmt(y) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(kWidth - kRight + 36.0) + "\" y=\"" +
           fmt(y + 4.0) + "\">" + records[i].name + " seed " +
           std::to_string(records[i].seed) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Sweep tables
// ---------------------------------------------------------------------------

std::string sweep_csv(const SweepResult& result) {
  std::string out = "episodes,delay,learner,seeds,mean_regret,stderr,failures";
  out += '\n';
  for (const SweepCell& cell : result.cells) {
    long long failures = 0;
    for (const std::string& e : cell.errors) {
      if (!e.empty()) ++failures;
    }
    out += std::to_string(cell.episodes);
    out += ',';
    out += std::to_string(cell.fixed_delay);
    out += ',';
    out += cell.learner_kind;
    out += ',';
    out += std::to_string(cell.seeds.size());
    out += ',';
    out += fmt(cell.mean_regret);
    out += ',';
    out += fmt(cell.stderr_regret);
    out += ',';
    out += std::to_string(failures);
    out += '\n';
  }
  return out;
}

json to_json(const SweepResult& result) {
  json cells = json::array();
  for (const SweepCell& cell : result.cells) {
    cells.push_back({{"episodes", cell.episodes},
                     {"delay", cell.fixed_delay},
                     {"learner", cell.learner_kind},
                     {"seeds", cell.seeds},
                     {"final_regrets", cell.final_regrets},
                     {"errors", cell.errors},
                     {"completed", cell.completed},
                     {"mean_regret", cell.mean_regret},
                     {"stderr", cell.stderr_regret}});
  }
  json j;
  j["config"] = result.config_json.empty() ? json(nullptr)
                                           : json::parse(result.config_json);
  j["cells"] = std::move(cells);
  return j;
}

SweepResult sweep_from_json(const json& j) {
  SweepResult result;
  if (j.contains("config") && !j.at("config").is_null()) {
    result.config_json = j.at("config").dump();
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const json& c : j.at("cells")) {
    SweepCell cell;
    cell.episodes = c.at("episodes").get<long long>();
    cell.fixed_delay = c.at("delay").get<long long>();
    cell.learner_kind = c.at("learner").get<std::string>();
    cell.seeds = c.at("seeds").get<std::vector<std::uint64_t>>();
    for (const json& r : c.at("final_regrets")) {
      cell.final_regrets.push_back(r.is_null() ? nan : r.get<double>());
    }
    cell.errors = c.at("errors").get<std::vector<std::string>>();
    cell.completed = c.at("completed").get<int>();
    cell.mean_regret =
        c.at("mean_regret").is_null() ? nan : c.at("mean_regret").get<double>();
    cell.stderr_regret =
        c.at("stderr").is_null() ? nan : c.at("stderr").get<double>();
    result.cells.push_back(std::move(cell));
  }
  return result;
}

// ---------------------------------------------------------------------------
// File emission
// ---------------------------------------------------------------------------

std::vector<std::string> emit_report(std::span<const RegretRecord> records,
                                     ReportFormat format,
                                     const std::string& out_dir,
                                     bool log_log) {
  require(!records.empty(), "emit_report: no records");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  switch (format) {
    case ReportFormat::csv: {
      std::set<std::string> used;
      for (const RegretRecord& rec : records) {
        std::string stem = "run_seed" + std::to_string(rec.seed);
        std::string name = stem + ".csv";
        for (int i = 2; used.count(name); ++i) {
          name = stem + "_" + std::to_string(i) + ".csv";
        }
        used.insert(name);
        const std::string path = out_dir + "/" + name;
        write_file(path, regret_csv(rec));
        written.push_back(path);
      }
      break;
    }
    case ReportFormat::json: {
      json all = json::array();
      for (const RegretRecord& rec : records) all.push_back(to_json(rec));
      const std::string path = out_dir + "/runs.json";
      write_file(path, all.dump(2) + "\n");
      written.push_back(path);
      break;
    }
    case ReportFormat::svg_lines: {
      const std::string path = out_dir + "/regret.svg";
      write_file(path, regret_svg(records, log_log));
      written.push_back(path);
      break;
    }
  }
  return written;
}

std::vector<std::string> emit_report(const SweepResult& result,
                                     ReportFormat format,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  switch (format) {
    case ReportFormat::csv: {
      const std::string path = out_dir + "/sweep.csv";
      write_file(path, sweep_csv(result));
      written.push_back(path);
      break;
    }
    case ReportFormat::json: {
      const std::string path = out_dir + "/sweep.json";
      write_file(path, to_json(result).dump(2) + "\n");
      written.push_back(path);
      break;
    }
    case ReportFormat::svg_lines:
      throw ContractViolation(
          "emit_report: sweep aggregates have no chart form; chart the runs");
  }
  return written;
}

}  // namespace delaylab
