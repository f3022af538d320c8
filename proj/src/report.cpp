#include "cpmcqa/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "cpmcqa/errors.hpp"
#include "cpmcqa/format.hpp"

namespace cpmcqa {

using nlohmann::json;

namespace {

constexpr const char* kColumns = "subject,alpha,trial,seed,n_cal,n_test,error_rate,apss";

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_double_field(const std::string& s, int line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw UnknownReportSchema("non-numeric field '" + s + "' at line " + std::to_string(line));
  return v;
}

long long parse_int_field(const std::string& s, int line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw UnknownReportSchema("non-integer field '" + s + "' at line " + std::to_string(line));
  return v;
}

}  // namespace

namespace {

ParsedResults parse_results_stream(std::istream& in, const std::string& source) {
  ParsedResults parsed;
  parsed.config = json();
  std::string line;
  int line_number = 0;
  bool saw_columns = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string config_prefix = "# config: ";
      if (line.rfind(config_prefix, 0) == 0) {
        const json doc = json::parse(line.substr(config_prefix.size()), nullptr, false);
        if (!doc.is_discarded()) parsed.config = doc;
      }
      continue;
    }
    if (!saw_columns) {
      if (line != kColumns)
        throw UnknownReportSchema("expected column row '" + std::string(kColumns) + "', got '" +
                                  line + "'");
      saw_columns = true;
      continue;
    }
    const std::vector<std::string> fields = split_csv_row(line);
    if (fields.size() != 8)
      throw UnknownReportSchema("expected 8 fields at line " + std::to_string(line_number) +
                                ", got " + std::to_string(fields.size()));
    TrialResult t;
    t.subject = fields[0];
    t.alpha = parse_double_field(fields[1], line_number);
    t.trial = static_cast<int>(parse_int_field(fields[2], line_number));
    t.seed = static_cast<std::uint64_t>(parse_int_field(fields[3], line_number));
    t.n_cal = static_cast<int>(parse_int_field(fields[4], line_number));
    t.n_test = static_cast<int>(parse_int_field(fields[5], line_number));
    t.error_rate = parse_double_field(fields[6], line_number);
    t.apss = parse_double_field(fields[7], line_number);
    parsed.trials.push_back(std::move(t));
  }
  if (!saw_columns) throw UnknownReportSchema("no column row found in " + source);
  return parsed;
}

}  // namespace

ParsedResults parse_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UnknownReportSchema("cannot open results file " + path.string());
  return parse_results_stream(in, path.string());
}

ParsedResults parse_results_csv_string(const std::string& csv) {
  std::istringstream in(csv);
  return parse_results_stream(in, "results text");
}

// ---- SVG rendering ----------------------------------------------------------

namespace {

// Layout shared by both figure kinds.
constexpr double kWidth = 640.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 24.0;
constexpr double kTop = 44.0;
constexpr double kBottom = 52.0;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

// Two-decimal coordinates keep files small and byte-stable.
std::string coord(double v) { return fmt_double(std::round(v * 100.0) / 100.0); }

double x_of_alpha(double alpha) { return kLeft + alpha * kPlotW; }

std::string svg_open(const std::string& title) {
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_double(kWidth) +
         "\" height=\"" + fmt_double(kHeight) + "\" viewBox=\"0 0 " + fmt_double(kWidth) + " " +
         fmt_double(kHeight) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + fmt_double(kWidth) + "\" height=\"" +
         fmt_double(kHeight) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + coord(kWidth / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title +
         "</text>\n";
  return out;
}

std::string axis_frame(double y_max, const std::string& x_label, const std::string& y_label) {
  std::string out;
  const double x0 = kLeft, x1 = kLeft + kPlotW, y0 = kTop + kPlotH, y1 = kTop;
  out += "<line x1=\"" + coord(x0) + "\" y1=\"" + coord(y0) + "\" x2=\"" + coord(x1) + "\" y2=\"" +
         coord(y0) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + coord(x0) + "\" y1=\"" + coord(y0) + "\" x2=\"" + coord(x0) + "\" y2=\"" +
         coord(y1) + "\" stroke=\"black\"/>\n";
  // x ticks at 0, 0.1, ..., 1
  for (int i = 0; i <= 10; ++i) {
    const double a = static_cast<double>(i) / 10.0;
    const double x = x_of_alpha(a);
    out += "<line x1=\"" + coord(x) + "\" y1=\"" + coord(y0) + "\" x2=\"" + coord(x) + "\" y2=\"" +
           coord(y0 + 5) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + coord(x) + "\" y=\"" + coord(y0 + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt_double(a) +
           "</text>\n";
  }
  // y ticks at five equal divisions
  for (int i = 0; i <= 5; ++i) {
    const double v = y_max * static_cast<double>(i) / 5.0;
    const double y = y0 - (v / y_max) * kPlotH;
    out += "<line x1=\"" + coord(x0 - 5) + "\" y1=\"" + coord(y) + "\" x2=\"" + coord(x0) +
           "\" y2=\"" + coord(y) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + coord(x0 - 9) + "\" y=\"" + coord(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           fmt_double(std::round(v * 1000.0) / 1000.0) + "</text>\n";
  }
  out += "<text x=\"" + coord(kLeft + kPlotW / 2) + "\" y=\"" + coord(kHeight - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + x_label +
         "</text>\n";
  out += "<text x=\"16\" y=\"" + coord(kTop + kPlotH / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
         coord(kTop + kPlotH / 2) + ")\">" + y_label + "</text>\n";
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Series colors; cycled when there are more series than entries.
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct CellGroup {
  CellSummary cell;
  std::vector<double> errors;  // raw per-trial values, for outlier marks
  std::vector<double> sizes;
};

// Rebuild per-(subject, alpha) summaries from raw trial rows, subjects and
// alphas in order of first appearance.
std::vector<std::vector<CellGroup>> group_cells(const ParsedResults& results,
                                                std::vector<std::string>& subject_order) {
  std::vector<std::vector<CellGroup>> grouped;
  std::map<std::string, std::size_t> subject_of;
  for (const TrialResult& t : results.trials) {
    auto sit = subject_of.find(t.subject);
    if (sit == subject_of.end()) {
      sit = subject_of.emplace(t.subject, grouped.size()).first;
      grouped.emplace_back();
      subject_order.push_back(t.subject);
    }
    std::vector<CellGroup>& cells = grouped[sit->second];
    const auto cit = std::find_if(cells.begin(), cells.end(),
                                  [&](const CellGroup& g) { return g.cell.alpha == t.alpha; });
    CellGroup* group;
    if (cit == cells.end()) {
      cells.emplace_back();
      group = &cells.back();
      group->cell.subject = t.subject;
      group->cell.alpha = t.alpha;
      group->cell.n_cal = t.n_cal;
      group->cell.n_test = t.n_test;
    } else {
      group = &*cit;
    }
    group->errors.push_back(t.error_rate);
    group->sizes.push_back(t.apss);
  }
  for (std::vector<CellGroup>& cells : grouped) {
    for (CellGroup& g : cells) {
      g.cell.n_trials = static_cast<int>(g.errors.size());
      double esum = 0.0, ssum = 0.0;
      for (const double e : g.errors) esum += e;
      for (const double s : g.sizes) ssum += s;
      g.cell.mean_error = esum / static_cast<double>(g.errors.size());
      g.cell.mean_apss = ssum / static_cast<double>(g.sizes.size());
      g.cell.error_box = boxplot_stats(g.errors);
      g.cell.apss_box = boxplot_stats(g.sizes);
    }
  }
  return grouped;
}

std::string render_error_box_svg_impl(const std::string& subject,
                                      const std::vector<CellGroup>& groups) {
  std::string out = svg_open(xml_escape(subject) + " &#8212; miscoverage by target level");
  out += axis_frame(1.0, "target miscoverage level", "observed miscoverage");
  const double y0 = kTop + kPlotH;
  const auto y_of = [&](double v) { return y0 - v * kPlotH; };

  // exact-coverage reference: observed = target
  out += "<line class=\"reference\" x1=\"" + coord(x_of_alpha(0)) + "\" y1=\"" + coord(y_of(0)) +
         "\" x2=\"" + coord(x_of_alpha(1)) + "\" y2=\"" + coord(y_of(1)) +
         "\" stroke=\"#888888\" stroke-dasharray=\"5,4\"/>\n";

  const double half = 9.0;
  for (const CellGroup& g : groups) {
    const BoxStats& b = g.cell.error_box;
    const double x = x_of_alpha(g.cell.alpha);
    // whisker stem and caps
    out += "<line x1=\"" + coord(x) + "\" y1=\"" + coord(y_of(b.whisker_lo)) + "\" x2=\"" +
           coord(x) + "\" y2=\"" + coord(y_of(b.whisker_hi)) + "\" stroke=\"#1f77b4\"/>\n";
    for (const double w : {b.whisker_lo, b.whisker_hi})
      out += "<line x1=\"" + coord(x - half / 2) + "\" y1=\"" + coord(y_of(w)) + "\" x2=\"" +
             coord(x + half / 2) + "\" y2=\"" + coord(y_of(w)) + "\" stroke=\"#1f77b4\"/>\n";
    // interquartile box and median
    out += "<rect class=\"box\" x=\"" + coord(x - half) + "\" y=\"" + coord(y_of(b.q3)) +
           "\" width=\"" + coord(2 * half) + "\" height=\"" + coord(y_of(b.q1) - y_of(b.q3)) +
           "\" fill=\"#aec7e8\" stroke=\"#1f77b4\"/>\n";
    out += "<line x1=\"" + coord(x - half) + "\" y1=\"" + coord(y_of(b.median)) + "\" x2=\"" +
           coord(x + half) + "\" y2=\"" + coord(y_of(b.median)) + "\" stroke=\"#1f3d6e\"/>\n";
    // outliers beyond the whiskers
    for (const double v : g.errors)
      if (v < b.whisker_lo || v > b.whisker_hi)
        out += "<circle cx=\"" + coord(x) + "\" cy=\"" + coord(y_of(v)) +
               "\" r=\"2\" fill=\"none\" stroke=\"#1f77b4\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string render_apss_curve_svg_impl(const std::string& title,
                                       const std::vector<std::string>& names,
                                       const std::vector<std::vector<CellSummary>>& series) {
  double y_max = 1.0;
  for (const auto& cells : series)
    for (const CellSummary& c : cells) y_max = std::max(y_max, c.mean_apss);
  y_max = std::ceil(y_max * 10.0) / 10.0;

  std::string out = svg_open(xml_escape(title) + " &#8212; prediction set size by target level");
  out += axis_frame(y_max, "target miscoverage level", "average prediction set size");
  const double y0 = kTop + kPlotH;
  const auto y_of = [&](double v) { return y0 - (v / y_max) * kPlotH; };

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    for (const CellSummary& c : series[s]) {
      if (!points.empty()) points += " ";
      points += coord(x_of_alpha(c.alpha)) + "," + coord(y_of(c.mean_apss));
    }
    out += "<polyline class=\"series\" data-name=\"" + xml_escape(names[s]) + "\" points=\"" +
           points + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    for (const CellSummary& c : series[s])
      out += "<circle cx=\"" + coord(x_of_alpha(c.alpha)) + "\" cy=\"" + coord(y_of(c.mean_apss)) +
             "\" r=\"2.5\" fill=\"" + std::string(color) + "\"/>\n";
  }

  // legend, top-right corner of the plot area
  for (std::size_t s = 0; s < series.size() && s < 12; ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const double ly = kTop + 14.0 + 14.0 * static_cast<double>(s);
    out += "<line x1=\"" + coord(kLeft + kPlotW - 150) + "\" y1=\"" + coord(ly) + "\" x2=\"" +
           coord(kLeft + kPlotW - 132) + "\" y2=\"" + coord(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    out += "<text x=\"" + coord(kLeft + kPlotW - 127) + "\" y=\"" + coord(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + xml_escape(names[s]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string box_csv_row(const CellSummary& cell, const char* metric, const BoxStats& b) {
  return cell.subject + "," + fmt_double(cell.alpha) + "," + metric + "," +
         std::to_string(cell.n_trials) + "," + fmt_double(b.min) + "," + fmt_double(b.q1) + "," +
         fmt_double(b.median) + "," + fmt_double(b.q3) + "," + fmt_double(b.max) + "," +
         fmt_double(b.whisker_lo) + "," + fmt_double(b.whisker_hi) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string render_error_box_svg(const std::string& subject,
                                 const std::vector<CellSummary>& cells) {
  std::vector<CellGroup> groups;
  groups.reserve(cells.size());
  for (const CellSummary& c : cells) groups.push_back(CellGroup{c, {}, {}});
  return render_error_box_svg_impl(subject, groups);
}

std::string render_apss_curve_svg(const std::string& title,
                                  const std::vector<std::string>& series_names,
                                  const std::vector<std::vector<CellSummary>>& series) {
  return render_apss_curve_svg_impl(title, series_names, series);
}

std::string summary_csv(const std::vector<CellSummary>& cells) {
  std::string out =
      "subject,alpha,metric,n_trials,min,q1,median,q3,max,whisker_lo,whisker_hi\n";
  for (const CellSummary& cell : cells) {
    out += box_csv_row(cell, "error_rate", cell.error_box);
    out += box_csv_row(cell, "apss", cell.apss_box);
  }
  return out;
}

std::vector<std::string> render_figures(const ParsedResults& results, FigureKind kind,
                                        const std::filesystem::path& out_dir) {
  std::vector<std::string> subject_order;
  const std::vector<std::vector<CellGroup>> grouped = group_cells(results, subject_order);

  const std::filesystem::path fig_dir = out_dir / "figures";
  std::filesystem::create_directories(fig_dir);
  std::vector<std::string> written;

  std::vector<CellSummary> all_cells;
  for (const auto& cells : grouped)
    for (const CellGroup& g : cells) all_cells.push_back(g.cell);

  if (kind == FigureKind::ErrorBox) {
    for (std::size_t s = 0; s < grouped.size(); ++s) {
      const std::string name =
          "figures/error_box_" + sanitize_filename_component(subject_order[s]) + ".svg";
      write_text_file(out_dir / name, render_error_box_svg_impl(subject_order[s], grouped[s]));
      written.push_back(name);
    }
  } else {
    std::vector<std::vector<CellSummary>> series;
    for (const auto& cells : grouped) {
      std::vector<CellSummary> one;
      for (const CellGroup& g : cells) one.push_back(g.cell);
      series.push_back(std::move(one));
    }
    for (std::size_t s = 0; s < grouped.size(); ++s) {
      const std::string name =
          "figures/apss_curve_" + sanitize_filename_component(subject_order[s]) + ".svg";
      write_text_file(out_dir / name,
                      render_apss_curve_svg_impl(subject_order[s], {subject_order[s]},
                                                 {series[s]}));
      written.push_back(name);
    }
    if (!series.empty()) {
      const std::string name = "figures/apss_curve_all.svg";
      write_text_file(out_dir / name,
                      render_apss_curve_svg_impl("all subjects", subject_order, series));
      written.push_back(name);
    }
  }

  const std::string summary_name = "figures/summary.csv";
  write_text_file(out_dir / summary_name, summary_csv(all_cells));
  written.push_back(summary_name);
  return written;
}

}  // namespace cpmcqa
