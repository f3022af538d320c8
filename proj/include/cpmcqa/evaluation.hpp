#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpmcqa/conformal.hpp"
#include "cpmcqa/conformity.hpp"
#include "cpmcqa/dataset.hpp"

namespace cpmcqa {

// One bootstrap trial of one (subject, alpha) cell.
struct TrialResult {
  std::string subject;
  double alpha = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  int n_cal = 0;
  int n_test = 0;
  double error_rate = 0.0;  // fraction of test questions whose truth was excluded
  double apss = 0.0;        // average prediction set size over the test half
};

// Five-number summary plus Tukey whiskers (hinges; the median joins both
// halves when n is odd, whiskers reach the furthest point within 1.5 IQR).
struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
};

BoxStats boxplot_stats(std::vector<double> values);  // throws EmptyInput on {}

enum class MetricField { ErrorRate, Apss };

BoxStats boxplot_stats(const std::vector<TrialResult>& trials, MetricField field);

// Aggregates of one (subject, alpha) cell across its trials.
struct CellSummary {
  std::string subject;
  double alpha = 0.0;
  int n_trials = 0;
  int n_cal = 0;
  int n_test = 0;
  double mean_error = 0.0;
  double mean_apss = 0.0;
  BoxStats error_box;
  BoxStats apss_box;
};

// Dataset-level averages at one alpha: uniform over subjects and weighted by
// subject size.
struct AlphaAggregate {
  double alpha = 0.0;
  double mean_error_uniform = 0.0;
  double mean_error_weighted = 0.0;
  double mean_apss_uniform = 0.0;
  double mean_apss_weighted = 0.0;
};

struct SkippedSubject {
  std::string subject;
  std::string reason;
};

struct EvalReport {
  std::vector<TrialResult> trials;  // subject-major, then alpha, then trial
  std::vector<CellSummary> cells;
  std::vector<AlphaAggregate> aggregates;
  std::vector<SkippedSubject> skipped;
  // Nestedness witness: true iff, for every subject and fixed trial seed,
  // APSS never increased across the ascending alpha sweep.
  bool apss_monotone_per_trial = true;
};

struct SweepConfig {
  std::vector<Alpha> alphas;  // must be ascending
  double ratio = 0.5;
  int n_trials = 100;
  std::uint64_t base_seed = 1;
  PValueMode mode = PValueMode::TieInclusive;
};

enum class Execution { Serial, Parallel };

// One split -> calibrate -> score the test half. Trial t of a sweep runs with
// seed = base_seed + t, the same seed at every alpha, so set sizes shrink
// monotonically as alpha grows on a fixed split. Subjects are evaluated in
// isolation; records of mixed subjects are rejected.
TrialResult evaluate_once(const SubjectPartition& partition, const TableMap& tables,
                          const Alpha& alpha, double ratio, std::uint64_t seed, PValueMode mode,
                          int trial_index = 0);

std::vector<TrialResult> bootstrap_trials(const SubjectPartition& partition, const TableMap& tables,
                                          const Alpha& alpha, double ratio, int n_trials,
                                          std::uint64_t base_seed, PValueMode mode);

// Full alpha grid for one subject.
EvalReport alpha_sweep(const SubjectPartition& partition, const TableMap& tables,
                       const SweepConfig& config);

// Full grid over subjects x alphas x trials. Subjects whose split would be
// degenerate are skipped and recorded, not fatal. The Parallel execution path
// distributes grid cells over OpenMP threads into preassigned slots and is
// bit-identical to Serial at any thread count.
EvalReport sweep_dataset(const std::vector<SubjectPartition>& partitions, const TableMap& tables,
                         const SweepConfig& config, Execution execution = Execution::Serial);

// ---- result serialization ---------------------------------------------------
//
// results.csv: '#'-prefixed provenance header (tool version + config echo),
// one column row, then one line per trial. All doubles in shortest
// round-trip form; byte-stable for fixed inputs.

void write_results_csv(std::ostream& out, const EvalReport& report,
                       const nlohmann::json& run_config);
std::string results_csv_string(const EvalReport& report, const nlohmann::json& run_config);

// results.json: config echo plus per-cell summaries and dataset aggregates.
nlohmann::json results_json(const EvalReport& report, const nlohmann::json& run_config);

}  // namespace cpmcqa
