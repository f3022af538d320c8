#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpmcqa/evaluation.hpp"

namespace cpmcqa {

// results.csv read back: the config echo (null when absent) and every trial row.
struct ParsedResults {
  nlohmann::json config;
  std::vector<TrialResult> trials;
};

// Throws UnknownReportSchema when the file is not a results.csv this tool
// wrote (wrong columns, malformed rows).
ParsedResults parse_results_csv(const std::filesystem::path& path);
ParsedResults parse_results_csv_string(const std::string& csv);

enum class FigureKind { ErrorBox, ApssCurve };

// Per-subject SVG figures rendered from parsed results.
//   ErrorBox:  one miscoverage box per alpha plus the y = alpha reference line.
//   ApssCurve: mean set size vs alpha, one polyline per subject and a
//              combined overlay figure.
// Every figure gets a sibling row in figures/summary.csv carrying the
// five-number summaries. Output bytes depend only on the parsed results.
// Returns the list of files written (relative to out_dir).
std::vector<std::string> render_figures(const ParsedResults& results, FigureKind kind,
                                        const std::filesystem::path& out_dir);

// Building blocks, exposed for tests.
std::string render_error_box_svg(const std::string& subject,
                                 const std::vector<CellSummary>& cells);
std::string render_apss_curve_svg(const std::string& title,
                                  const std::vector<std::string>& series_names,
                                  const std::vector<std::vector<CellSummary>>& series);
std::string summary_csv(const std::vector<CellSummary>& cells);

}  // namespace cpmcqa
