#include "cpmcqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cpmcqa/errors.hpp"
#include "cpmcqa/format.hpp"
#include "cpmcqa/version.hpp"

namespace cpmcqa {

using nlohmann::json;

namespace {

// Everything about one subject that is invariant across trials: nonconformity
// scores per option and for the true answer(s), computed once.
struct RecordScores {
  std::vector<Score> option_scores;
  std::vector<int> truth_options;
  Score truth_score{0, 1};
};

struct SubjectContext {
  const SubjectPartition* partition = nullptr;
  std::vector<RecordScores> records;
};

SubjectContext build_context(const SubjectPartition& partition, const TableMap& tables) {
  if (partition.records.empty()) throw EmptyInput("subject '" + partition.subject + "' is empty");
  SubjectContext ctx;
  ctx.partition = &partition;
  ctx.records.reserve(partition.records.size());
  for (const QuestionRecord& rec : partition.records) {
    if (rec.subject != partition.subject)
      throw Error("evaluation refuses mixed subjects: '" + rec.subject + "' inside partition '" +
                  partition.subject + "'");
    const auto it = tables.find(rec.id);
    if (it == tables.end()) throw Error("no frequency table for question '" + rec.id + "'");

    RecordScores rs;
    rs.option_scores.reserve(rec.options.size());
    for (const char label : rec.labels())
      rs.option_scores.push_back(nonconformity_score(it->second, {label}));
    for (const char label : rec.truth)
      rs.truth_options.push_back(QuestionRecord::label_index(label));
    rs.truth_score = nonconformity_score(it->second, rec.truth);
    ctx.records.push_back(std::move(rs));
  }
  return ctx;
}

// One bootstrap trial on a prepared subject. Membership follows the p-value
// rule: keep an option when (#{cal >= s} + 1) / (n_cal + 1) > alpha, all in
// integers (count_gt for strict mode). evaluate_once and the parallel sweep
// both land here, so they cannot drift apart.
TrialResult run_trial(const SubjectContext& ctx, const Alpha& alpha, double ratio,
                      std::uint64_t seed, PValueMode mode, int trial_index) {
  const int n = static_cast<int>(ctx.records.size());
  const auto [cal_idx, test_idx] = split_indices(n, ratio, seed);

  std::vector<Score> cal;
  cal.reserve(cal_idx.size());
  for (const int i : cal_idx) cal.push_back(ctx.records[static_cast<std::size_t>(i)].truth_score);
  const CalibrationScores calibration = CalibrationScores::from_unsorted(std::move(cal));
  const long long n_cal = calibration.n();

  long long misses = 0;
  long long total_size = 0;
  for (const int i : test_idx) {
    const RecordScores& rs = ctx.records[static_cast<std::size_t>(i)];
    int set_size = 0;
    bool covered = false;
    for (std::size_t opt = 0; opt < rs.option_scores.size(); ++opt) {
      const Score& s = rs.option_scores[opt];
      const long long at_least =
          mode == PValueMode::TieInclusive ? calibration.count_ge(s) : calibration.count_gt(s);
      const bool in_set = (at_least + 1) * alpha.frac.den > alpha.frac.num * (n_cal + 1);
      if (!in_set) continue;
      ++set_size;
      if (!covered)
        covered = std::find(rs.truth_options.begin(), rs.truth_options.end(),
                            static_cast<int>(opt)) != rs.truth_options.end();
    }
    misses += covered ? 0 : 1;
    total_size += set_size;
  }

  TrialResult result;
  result.subject = ctx.partition->subject;
  result.alpha = alpha.value();
  result.trial = trial_index;
  result.seed = seed;
  result.n_cal = static_cast<int>(cal_idx.size());
  result.n_test = static_cast<int>(test_idx.size());
  result.error_rate = static_cast<double>(misses) / static_cast<double>(test_idx.size());
  result.apss = static_cast<double>(total_size) / static_cast<double>(test_idx.size());
  return result;
}

}  // namespace

TrialResult evaluate_once(const SubjectPartition& partition, const TableMap& tables,
                          const Alpha& alpha, double ratio, std::uint64_t seed, PValueMode mode,
                          int trial_index) {
  const SubjectContext ctx = build_context(partition, tables);
  split_sizes(static_cast<int>(partition.records.size()), ratio);  // degenerate check up front
  return run_trial(ctx, alpha, ratio, seed, mode, trial_index);
}

std::vector<TrialResult> bootstrap_trials(const SubjectPartition& partition, const TableMap& tables,
                                          const Alpha& alpha, double ratio, int n_trials,
                                          std::uint64_t base_seed, PValueMode mode) {
  if (n_trials < 1) throw Error("need at least one trial");
  const SubjectContext ctx = build_context(partition, tables);
  split_sizes(static_cast<int>(partition.records.size()), ratio);
  std::vector<TrialResult> trials;
  trials.reserve(static_cast<std::size_t>(n_trials));
  for (int t = 0; t < n_trials; ++t)
    trials.push_back(run_trial(ctx, alpha, ratio, base_seed + static_cast<std::uint64_t>(t), mode, t));
  return trials;
}

EvalReport alpha_sweep(const SubjectPartition& partition, const TableMap& tables,
                       const SweepConfig& config) {
  return sweep_dataset({partition}, tables, config, Execution::Serial);
}

EvalReport sweep_dataset(const std::vector<SubjectPartition>& partitions, const TableMap& tables,
                         const SweepConfig& config, Execution execution) {
  if (config.alphas.empty()) throw Error("alpha sweep must name at least one level");
  for (std::size_t i = 1; i < config.alphas.size(); ++i)
    if (!(config.alphas[i - 1].frac < config.alphas[i].frac))
      throw Error("alpha levels must be strictly ascending");
  if (config.n_trials < 1) throw Error("need at least one trial");

  EvalReport report;

  // Degenerate subjects are skipped (and reported), never fatal.
  std::vector<SubjectContext> contexts;
  for (const SubjectPartition& partition : partitions) {
    try {
      split_sizes(static_cast<int>(partition.records.size()), config.ratio);
    } catch (const DegenerateSplit& e) {
      report.skipped.push_back({partition.subject, e.what()});
      continue;
    }
    contexts.push_back(build_context(partition, tables));
  }

  const long long n_subjects = static_cast<long long>(contexts.size());
  const long long n_alphas = static_cast<long long>(config.alphas.size());
  const long long n_trials = config.n_trials;
  const long long n_cells = n_subjects * n_alphas * n_trials;

  // Every grid point owns a preassigned slot, so the parallel fill is
  // bit-identical to the serial one at any thread count.
  report.trials.resize(static_cast<std::size_t>(n_cells));
  const auto run_slot = [&](long long flat) {
    const long long t = flat % n_trials;
    const long long a = (flat / n_trials) % n_alphas;
    const long long s = flat / (n_trials * n_alphas);
    report.trials[static_cast<std::size_t>(flat)] =
        run_trial(contexts[static_cast<std::size_t>(s)], config.alphas[static_cast<std::size_t>(a)],
                  config.ratio, config.base_seed + static_cast<std::uint64_t>(t), config.mode,
                  static_cast<int>(t));
  };

  if (execution == Execution::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
    for (long long flat = 0; flat < n_cells; ++flat) run_slot(flat);
#else
    for (long long flat = 0; flat < n_cells; ++flat) run_slot(flat);
#endif
  } else {
    for (long long flat = 0; flat < n_cells; ++flat) run_slot(flat);
  }

  for (long long s = 0; s < n_subjects; ++s) {
    for (long long t = 0; t < n_trials; ++t) {
      for (long long a = 1; a < n_alphas; ++a) {
        const std::size_t here = static_cast<std::size_t>((s * n_alphas + a) * n_trials + t);
        const std::size_t prev = static_cast<std::size_t>((s * n_alphas + a - 1) * n_trials + t);
        if (report.trials[here].apss > report.trials[prev].apss)
          report.apss_monotone_per_trial = false;
      }
    }
  }

  // Serial reductions below keep double accumulation order fixed.
  for (long long s = 0; s < n_subjects; ++s) {
    for (long long a = 0; a < n_alphas; ++a) {
      const long long base = (s * n_alphas + a) * n_trials;
      CellSummary cell;
      cell.subject = contexts[static_cast<std::size_t>(s)].partition->subject;
      cell.alpha = config.alphas[static_cast<std::size_t>(a)].value();
      cell.n_trials = static_cast<int>(n_trials);
      cell.n_cal = report.trials[static_cast<std::size_t>(base)].n_cal;
      cell.n_test = report.trials[static_cast<std::size_t>(base)].n_test;
      std::vector<double> errors, sizes;
      errors.reserve(static_cast<std::size_t>(n_trials));
      sizes.reserve(static_cast<std::size_t>(n_trials));
      double error_sum = 0.0, apss_sum = 0.0;
      for (long long t = 0; t < n_trials; ++t) {
        const TrialResult& tr = report.trials[static_cast<std::size_t>(base + t)];
        errors.push_back(tr.error_rate);
        sizes.push_back(tr.apss);
        error_sum += tr.error_rate;
        apss_sum += tr.apss;
      }
      cell.mean_error = error_sum / static_cast<double>(n_trials);
      cell.mean_apss = apss_sum / static_cast<double>(n_trials);
      cell.error_box = boxplot_stats(std::move(errors));
      cell.apss_box = boxplot_stats(std::move(sizes));
      report.cells.push_back(std::move(cell));
    }
  }

  for (long long a = 0; a < n_alphas; ++a) {
    AlphaAggregate agg;
    agg.alpha = config.alphas[static_cast<std::size_t>(a)].value();
    double err_u = 0.0, apss_u = 0.0, err_w = 0.0, apss_w = 0.0, weight = 0.0;
    for (long long s = 0; s < n_subjects; ++s) {
      const CellSummary& cell = report.cells[static_cast<std::size_t>(s * n_alphas + a)];
      const auto w = static_cast<double>(
          contexts[static_cast<std::size_t>(s)].partition->records.size());
      err_u += cell.mean_error;
      apss_u += cell.mean_apss;
      err_w += w * cell.mean_error;
      apss_w += w * cell.mean_apss;
      weight += w;
    }
    if (n_subjects > 0) {
      agg.mean_error_uniform = err_u / static_cast<double>(n_subjects);
      agg.mean_apss_uniform = apss_u / static_cast<double>(n_subjects);
      agg.mean_error_weighted = err_w / weight;
      agg.mean_apss_weighted = apss_w / weight;
    }
    report.aggregates.push_back(agg);
  }

  return report;
}

// ---- box stats ----------------------------------------------------------------

namespace {

double median_of(const std::vector<double>& sorted, std::size_t lo, std::size_t hi) {
  const std::size_t m = hi - lo + 1;
  const std::size_t mid = lo + m / 2;
  if (m % 2 == 1) return sorted[mid];
  return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

}  // namespace

BoxStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw EmptyInput("boxplot of zero values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();

  BoxStats box;
  box.min = values.front();
  box.max = values.back();
  box.median = median_of(values, 0, n - 1);
  // Tukey hinges: for odd n the median belongs to both halves.
  const std::size_t lower_hi = (n % 2 == 1) ? n / 2 : n / 2 - 1;
  const std::size_t upper_lo = n / 2;
  box.q1 = median_of(values, 0, lower_hi);
  box.q3 = median_of(values, upper_lo, n - 1);

  const double iqr = box.q3 - box.q1;
  const double lo_fence = box.q1 - 1.5 * iqr;
  const double hi_fence = box.q3 + 1.5 * iqr;
  box.whisker_lo = box.min;
  box.whisker_hi = box.max;
  for (const double v : values) {
    if (v >= lo_fence) {
      box.whisker_lo = v;
      break;
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    if (values[i] <= hi_fence) {
      box.whisker_hi = values[i];
      break;
    }
  }
  return box;
}

BoxStats boxplot_stats(const std::vector<TrialResult>& trials, MetricField field) {
  std::vector<double> values;
  values.reserve(trials.size());
  for (const TrialResult& t : trials)
    values.push_back(field == MetricField::ErrorRate ? t.error_rate : t.apss);
  return boxplot_stats(std::move(values));
}

// ---- serialization --------------------------------------------------------------

namespace {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

json box_json(const BoxStats& box) {
  return json{{"min", box.min},       {"q1", box.q1},
              {"median", box.median}, {"q3", box.q3},
              {"max", box.max},       {"whisker_lo", box.whisker_lo},
              {"whisker_hi", box.whisker_hi}};
}

}  // namespace

void write_results_csv(std::ostream& out, const EvalReport& report,
                       const nlohmann::json& run_config) {
  out << "# " << kToolName << " " << kToolVersion << "\n";
  out << "# config: " << run_config.dump() << "\n";
  out << "subject,alpha,trial,seed,n_cal,n_test,error_rate,apss\n";
  for (const TrialResult& t : report.trials) {
    out << csv_escape(t.subject) << "," << fmt_double(t.alpha) << "," << t.trial << "," << t.seed
        << "," << t.n_cal << "," << t.n_test << "," << fmt_double(t.error_rate) << ","
        << fmt_double(t.apss) << "\n";
  }
}

std::string results_csv_string(const EvalReport& report, const nlohmann::json& run_config) {
  std::ostringstream out;
  write_results_csv(out, report, run_config);
  return out.str();
}

nlohmann::json results_json(const EvalReport& report, const nlohmann::json& run_config) {
  json doc;
  doc["tool"] = kToolName;
  doc["version"] = kToolVersion;
  doc["config"] = run_config;

  json subjects = json::array();
  // cells arrive subject-major from sweep_dataset
  for (std::size_t i = 0; i < report.cells.size();) {
    const std::string& name = report.cells[i].subject;
    json cells = json::array();
    int n_records = 0;
    for (; i < report.cells.size() && report.cells[i].subject == name; ++i) {
      const CellSummary& cell = report.cells[i];
      n_records = cell.n_cal + cell.n_test;
      cells.push_back(json{{"alpha", cell.alpha},
                           {"n_trials", cell.n_trials},
                           {"n_cal", cell.n_cal},
                           {"n_test", cell.n_test},
                           {"mean_error_rate", cell.mean_error},
                           {"mean_apss", cell.mean_apss},
                           {"error_box", box_json(cell.error_box)},
                           {"apss_box", box_json(cell.apss_box)}});
    }
    subjects.push_back(json{{"subject", name}, {"n_records", n_records}, {"cells", cells}});
  }
  doc["subjects"] = subjects;

  json aggregates = json::array();
  for (const AlphaAggregate& agg : report.aggregates) {
    aggregates.push_back(json{{"alpha", agg.alpha},
                              {"mean_error_uniform", agg.mean_error_uniform},
                              {"mean_error_weighted", agg.mean_error_weighted},
                              {"mean_apss_uniform", agg.mean_apss_uniform},
                              {"mean_apss_weighted", agg.mean_apss_weighted}});
  }
  doc["alpha_aggregates"] = aggregates;

  json skipped = json::array();
  for (const SkippedSubject& s : report.skipped)
    skipped.push_back(json{{"subject", s.subject}, {"reason", s.reason}});
  doc["skipped_subjects"] = skipped;
  doc["apss_monotone_per_trial"] = report.apss_monotone_per_trial;
  return doc;
}

}  // namespace cpmcqa
