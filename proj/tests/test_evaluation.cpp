#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cpmcqa/errors.hpp"
#include "cpmcqa/evaluation.hpp"
#include "cpmcqa/report.hpp"
#include "support.hpp"

using namespace cpmcqa;
using testsupport::make_record;
using testsupport::make_sim_subject;
using testsupport::make_table;

namespace {

// A subject where the model always answers the truth: every set at moderate
// alpha is exactly the singleton truth.
testsupport::SimSubject perfect_subject(int n_records) {
  return make_sim_subject("perfect", n_records, 4, 1.0, 20, 9);
}

std::vector<Alpha> alpha_grid(std::initializer_list<const char*> values) {
  std::vector<Alpha> alphas;
  for (const char* v : values) alphas.push_back(Alpha::parse(v));
  return alphas;
}

}  // namespace

TEST_CASE("boxplot_stats matches hand-computed five-number summaries") {
  SUBCASE("odd n, evenly spaced") {
    const BoxStats b = boxplot_stats({0.5, 0.1, 0.3, 0.2, 0.4});
    CHECK(b.min == 0.1);
    CHECK(b.q1 == 0.2);     // lower half {0.1,0.2,0.3} with the median included
    CHECK(b.median == 0.3);
    CHECK(b.q3 == 0.4);
    CHECK(b.max == 0.5);
    CHECK(b.whisker_lo == 0.1);
    CHECK(b.whisker_hi == 0.5);
  }

  SUBCASE("even n uses half-way hinges") {
    const BoxStats b = boxplot_stats({4.0, 1.0, 3.0, 2.0});
    CHECK(b.q1 == 1.5);
    CHECK(b.median == 2.5);
    CHECK(b.q3 == 3.5);
  }

  SUBCASE("an extreme point falls outside the whiskers") {
    std::vector<double> values = {1, 2, 3, 4, 5, 6, 7, 100};
    const BoxStats b = boxplot_stats(values);
    CHECK(b.max == 100.0);
    CHECK(b.whisker_hi < 100.0);  // 100 is an outlier beyond q3 + 1.5 IQR
    CHECK(b.whisker_lo == 1.0);
  }

  SUBCASE("single and constant samples collapse") {
    const BoxStats one = boxplot_stats({0.7});
    CHECK(one.min == 0.7);
    CHECK(one.q1 == 0.7);
    CHECK(one.median == 0.7);
    CHECK(one.q3 == 0.7);
    CHECK(one.max == 0.7);
    CHECK(one.whisker_lo == 0.7);
    CHECK(one.whisker_hi == 0.7);

    const BoxStats flat = boxplot_stats({2.0, 2.0, 2.0, 2.0});
    CHECK(flat.q1 == 2.0);
    CHECK(flat.q3 == 2.0);
  }

  SUBCASE("empty input throws") {
    CHECK_THROWS_AS(boxplot_stats(std::vector<double>{}), EmptyInput);
  }

  SUBCASE("the trial overload selects the requested metric") {
    std::vector<TrialResult> trials(3);
    trials[0].error_rate = 0.1;
    trials[1].error_rate = 0.2;
    trials[2].error_rate = 0.3;
    trials[0].apss = 3.0;
    trials[1].apss = 2.0;
    trials[2].apss = 1.0;
    CHECK(boxplot_stats(trials, MetricField::ErrorRate).median == 0.2);
    CHECK(boxplot_stats(trials, MetricField::Apss).median == 2.0);
  }
}

TEST_CASE("evaluate_once on a deterministic subject") {
  // 20 questions, model always right: truth frequency 1.0, every
  // truth score 0, every wrong option scores > 0.
  const testsupport::SimSubject subject = perfect_subject(20);

  SUBCASE("moderate alpha keeps exactly the truth") {
    const TrialResult r =
        evaluate_once(subject.partition, subject.tables, Alpha::parse("0.5"), 0.5, 7,
                      PValueMode::TieInclusive);
    CHECK(r.subject == "perfect");
    CHECK(r.n_cal == 10);
    CHECK(r.n_test == 10);
    CHECK(r.error_rate == 0.0);
    CHECK(r.apss == 1.0);
    CHECK(r.seed == 7);
  }

  SUBCASE("tiny alpha forces include-all sets") {
    // n_cal = 10: any alpha < 1/11 leaves k > n, so every set holds all 4 options
    const TrialResult r =
        evaluate_once(subject.partition, subject.tables, Alpha::parse("0.05"), 0.5, 7,
                      PValueMode::TieInclusive);
    CHECK(r.error_rate == 0.0);
    CHECK(r.apss == 4.0);
  }

  SUBCASE("the result is deterministic in the seed") {
    const TrialResult a =
        evaluate_once(subject.partition, subject.tables, Alpha::parse("0.3"), 0.5, 11,
                      PValueMode::TieInclusive);
    const TrialResult b =
        evaluate_once(subject.partition, subject.tables, Alpha::parse("0.3"), 0.5, 11,
                      PValueMode::TieInclusive);
    CHECK(a.error_rate == b.error_rate);
    CHECK(a.apss == b.apss);
  }
}

TEST_CASE("evaluate_once agrees with a from-scratch reference evaluation") {
  // Rebuild one trial by hand from the public primitives and compare exactly.
  const testsupport::SimSubject subject = make_sim_subject("ref", 30, 4, 0.7, 20, 21);
  const Alpha alpha = Alpha::parse("0.3");
  const double ratio = 0.5;
  const std::uint64_t seed = 5;
  const PValueMode mode = PValueMode::TieInclusive;

  const TrialResult got =
      evaluate_once(subject.partition, subject.tables, alpha, ratio, seed, mode);

  const auto [cal_idx, test_idx] =
      split_indices(static_cast<int>(subject.partition.records.size()), ratio, seed);
  std::vector<QuestionRecord> cal_records, test_records;
  for (const int i : cal_idx) cal_records.push_back(subject.partition.records[i]);
  for (const int i : test_idx) test_records.push_back(subject.partition.records[i]);

  const CalibrationScores cal = calibration_scores(cal_records, subject.tables);
  int misses = 0;
  long long total_size = 0;
  for (const QuestionRecord& record : test_records) {
    const FrequencyTable& table = subject.tables.at(record.id);
    CandidateScores candidates;
    for (const char label : record.labels())
      candidates[label] = nonconformity_score(table, {label});
    const PredictionSet set = pvalue_prediction_set(cal, candidates, alpha, mode, record.id);
    total_size += set.size();
    bool covered = false;
    for (const char t : record.truth)
      if (set.contains(t)) covered = true;
    if (!covered) ++misses;
  }

  CHECK(got.n_cal == static_cast<int>(cal_records.size()));
  CHECK(got.n_test == static_cast<int>(test_records.size()));
  CHECK(got.error_rate == static_cast<double>(misses) / got.n_test);
  CHECK(got.apss == static_cast<double>(total_size) / got.n_test);
}

TEST_CASE("evaluate_once validates its inputs") {
  const testsupport::SimSubject subject = perfect_subject(10);

  SUBCASE("mixed subjects are rejected") {
    SubjectPartition mixed = subject.partition;
    mixed.records.push_back(make_record("alien", "other-subject", 4, "A"));
    TableMap tables = subject.tables;
    tables["alien"] = make_table("alien", {20, 0, 0, 0});
    CHECK_THROWS_AS(evaluate_once(mixed, tables, Alpha::parse("0.5"), 0.5, 1,
                                  PValueMode::TieInclusive),
                    Error);
  }

  SUBCASE("a missing table is an error") {
    TableMap tables = subject.tables;
    tables.erase(subject.partition.records.front().id);
    CHECK_THROWS_AS(evaluate_once(subject.partition, tables, Alpha::parse("0.5"), 0.5, 1,
                                  PValueMode::TieInclusive),
                    Error);
  }

  SUBCASE("a single-record subject cannot be split") {
    const testsupport::SimSubject tiny = make_sim_subject("tiny", 1, 4, 1.0, 20, 9);
    CHECK_THROWS_AS(evaluate_once(tiny.partition, tiny.tables, Alpha::parse("0.5"), 0.5, 1,
                                  PValueMode::TieInclusive),
                    DegenerateSplit);
  }
}

TEST_CASE("bootstrap_trials walks seeds base_seed + t") {
  const testsupport::SimSubject subject = make_sim_subject("boot", 40, 4, 0.7, 20, 3);
  const auto trials = bootstrap_trials(subject.partition, subject.tables, Alpha::parse("0.3"),
                                       0.5, 8, 100, PValueMode::TieInclusive);
  REQUIRE(trials.size() == 8);
  for (int t = 0; t < 8; ++t) {
    CHECK(trials[t].trial == t);
    CHECK(trials[t].seed == 100 + static_cast<std::uint64_t>(t));
  }

  // n_trials = 1 is exactly evaluate_once
  const TrialResult single =
      evaluate_once(subject.partition, subject.tables, Alpha::parse("0.3"), 0.5, 100,
                    PValueMode::TieInclusive);
  CHECK(trials[0].error_rate == single.error_rate);
  CHECK(trials[0].apss == single.apss);

  // deterministic across invocations
  const auto again = bootstrap_trials(subject.partition, subject.tables, Alpha::parse("0.3"),
                                      0.5, 8, 100, PValueMode::TieInclusive);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(trials[i].error_rate == again[i].error_rate);
    CHECK(trials[i].apss == again[i].apss);
  }

  // disjoint seed ranges give genuinely different resamples of the same
  // distribution: error rates should differ somewhere but look alike overall
  const auto shifted = bootstrap_trials(subject.partition, subject.tables, Alpha::parse("0.3"),
                                        0.5, 8, 100000, PValueMode::TieInclusive);
  bool any_diff = false;
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (trials[i].error_rate != shifted[i].error_rate) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("bootstrap error rates from disjoint seed ranges are exchangeable") {
  const testsupport::SimSubject subject = make_sim_subject("ks", 60, 4, 0.7, 20, 17);
  const auto a = bootstrap_trials(subject.partition, subject.tables, Alpha::parse("0.3"), 0.5,
                                  200, 1, PValueMode::TieInclusive);
  const auto b = bootstrap_trials(subject.partition, subject.tables, Alpha::parse("0.3"), 0.5,
                                  200, 777777, PValueMode::TieInclusive);
  std::vector<double> xs, ys;
  for (const auto& t : a) xs.push_back(t.error_rate);
  for (const auto& t : b) ys.push_back(t.error_rate);
  CHECK(testsupport::ks_two_sample_p(xs, ys) > 0.01);
}

TEST_CASE("alpha_sweep produces one cell per alpha for a single subject") {
  const testsupport::SimSubject subject = make_sim_subject("solo", 30, 4, 0.7, 20, 13);
  SweepConfig config;
  config.alphas = alpha_grid({"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"});
  config.n_trials = 5;
  config.base_seed = 42;

  const EvalReport report = alpha_sweep(subject.partition, subject.tables, config);
  CHECK(report.cells.size() == 9);
  CHECK(report.trials.size() == 45);
  CHECK(report.aggregates.size() == 9);
  CHECK(report.skipped.empty());
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    CHECK(report.cells[i].subject == "solo");
    CHECK(report.cells[i].alpha == config.alphas[i].value());
    CHECK(report.cells[i].n_trials == 5);
  }
}

TEST_CASE("sweep_dataset covers the full grid and orders it deterministically") {
  const testsupport::SimSubject s1 = make_sim_subject("anatomy", 24, 4, 0.7, 20, 5);
  const testsupport::SimSubject s2 = make_sim_subject("botany", 36, 4, 0.6, 20, 5);
  TableMap tables = s1.tables;
  tables.insert(s2.tables.begin(), s2.tables.end());

  SweepConfig config;
  config.alphas = alpha_grid({"0.1", "0.5", "0.9"});
  config.n_trials = 4;
  config.base_seed = 1;

  const EvalReport report =
      sweep_dataset({s1.partition, s2.partition}, tables, config, Execution::Serial);

  REQUIRE(report.trials.size() == 2 * 3 * 4);
  // subject-major, then alpha, then trial
  CHECK(report.trials[0].subject == "anatomy");
  CHECK(report.trials[0].alpha == 0.1);
  CHECK(report.trials[0].trial == 0);
  CHECK(report.trials[11].subject == "anatomy");
  CHECK(report.trials[11].alpha == 0.9);
  CHECK(report.trials[11].trial == 3);
  CHECK(report.trials[12].subject == "botany");
  CHECK(report.trials[12].alpha == 0.1);

  REQUIRE(report.cells.size() == 6);
  CHECK(report.cells[0].subject == "anatomy");
  CHECK(report.cells[3].subject == "botany");

  SUBCASE("cell means equal the mean of their trials") {
    for (const CellSummary& cell : report.cells) {
      double err = 0.0, apss = 0.0;
      int n = 0;
      for (const TrialResult& t : report.trials) {
        if (t.subject == cell.subject && t.alpha == cell.alpha) {
          err += t.error_rate;
          apss += t.apss;
          ++n;
        }
      }
      REQUIRE(n == cell.n_trials);
      CHECK(cell.mean_error == doctest::Approx(err / n).epsilon(1e-12));
      CHECK(cell.mean_apss == doctest::Approx(apss / n).epsilon(1e-12));
    }
  }

  SUBCASE("aggregates: uniform averages subjects, weighted averages records") {
    for (const AlphaAggregate& agg : report.aggregates) {
      const CellSummary* a = nullptr;
      const CellSummary* b = nullptr;
      for (const CellSummary& cell : report.cells) {
        if (cell.alpha != agg.alpha) continue;
        (cell.subject == "anatomy" ? a : b) = &cell;
      }
      REQUIRE(a != nullptr);
      REQUIRE(b != nullptr);
      CHECK(agg.mean_error_uniform ==
            doctest::Approx((a->mean_error + b->mean_error) / 2).epsilon(1e-12));
      CHECK(agg.mean_apss_uniform ==
            doctest::Approx((a->mean_apss + b->mean_apss) / 2).epsilon(1e-12));
      CHECK(agg.mean_error_weighted ==
            doctest::Approx((24 * a->mean_error + 36 * b->mean_error) / 60).epsilon(1e-12));
      CHECK(agg.mean_apss_weighted ==
            doctest::Approx((24 * a->mean_apss + 36 * b->mean_apss) / 60).epsilon(1e-12));
    }
  }

  SUBCASE("per-trial APSS monotonicity holds and is reported") {
    CHECK(report.apss_monotone_per_trial);
    for (const SubjectPartition* part : {&s1.partition, &s2.partition}) {
      for (int t = 0; t < 4; ++t) {
        double prev = 1e18;
        for (const Alpha& alpha : config.alphas) {
          double apss = -1.0;
          for (const TrialResult& r : report.trials)
            if (r.subject == part->subject && r.trial == t && r.alpha == alpha.value())
              apss = r.apss;
          REQUIRE(apss >= 0.0);
          CHECK(apss <= prev);
          prev = apss;
        }
      }
    }
  }
}

TEST_CASE("sweep_dataset skips degenerate subjects and records why") {
  const testsupport::SimSubject good = make_sim_subject("good", 20, 4, 0.7, 20, 5);
  const testsupport::SimSubject tiny = make_sim_subject("tiny", 1, 4, 0.7, 20, 5);
  TableMap tables = good.tables;
  tables.insert(tiny.tables.begin(), tiny.tables.end());

  SweepConfig config;
  config.alphas = alpha_grid({"0.5"});
  config.n_trials = 2;

  const EvalReport report =
      sweep_dataset({good.partition, tiny.partition}, tables, config, Execution::Serial);
  CHECK(report.trials.size() == 2);
  REQUIRE(report.skipped.size() == 1);
  CHECK(report.skipped[0].subject == "tiny");
  CHECK_FALSE(report.skipped[0].reason.empty());
}

TEST_CASE("sweep_dataset validates its configuration") {
  const testsupport::SimSubject subject = perfect_subject(10);
  SweepConfig config;
  config.alphas = alpha_grid({"0.5", "0.3"});  // not ascending
  CHECK_THROWS_AS(sweep_dataset({subject.partition}, subject.tables, config), Error);

  config.alphas = alpha_grid({"0.3", "0.5"});
  config.n_trials = 0;
  CHECK_THROWS_AS(sweep_dataset({subject.partition}, subject.tables, config), Error);

  config.n_trials = 1;
  config.alphas.clear();
  CHECK_THROWS_AS(sweep_dataset({subject.partition}, subject.tables, config), Error);
}

TEST_CASE("serial and parallel execution produce identical bytes") {
  const testsupport::SimSubject s1 = make_sim_subject("astro", 30, 4, 0.7, 20, 2);
  const testsupport::SimSubject s2 = make_sim_subject("geo", 26, 5, 0.55, 20, 2);
  const testsupport::SimSubject s3 = make_sim_subject("law", 34, 4, 0.8, 20, 2);
  TableMap tables = s1.tables;
  tables.insert(s2.tables.begin(), s2.tables.end());
  tables.insert(s3.tables.begin(), s3.tables.end());
  const std::vector<SubjectPartition> parts = {s1.partition, s2.partition, s3.partition};

  SweepConfig config;
  config.alphas = alpha_grid({"0.1", "0.3", "0.5", "0.7", "0.9"});
  config.n_trials = 6;
  config.base_seed = 31;

  const EvalReport serial = sweep_dataset(parts, tables, config, Execution::Serial);
  const EvalReport parallel = sweep_dataset(parts, tables, config, Execution::Parallel);

  const nlohmann::json run_config = {{"purpose", "parity"}};
  CHECK(results_csv_string(serial, run_config) == results_csv_string(parallel, run_config));
  CHECK(results_json(serial, run_config).dump() == results_json(parallel, run_config).dump());
}

TEST_CASE("results CSV carries provenance and round-trips through the parser") {
  const testsupport::SimSubject subject = make_sim_subject("csv", 20, 4, 0.7, 20, 8);
  SweepConfig config;
  config.alphas = alpha_grid({"0.2", "0.8"});
  config.n_trials = 3;

  const EvalReport report = sweep_dataset({subject.partition}, subject.tables, config);
  const nlohmann::json run_config = {{"dataset", "demo"}, {"trials", 3}};
  const std::string csv = results_csv_string(report, run_config);

  CHECK(csv.rfind("# conformal-mcqa", 0) == 0);
  CHECK(csv.find("# config: ") != std::string::npos);
  CHECK(csv.find("subject,alpha,trial,seed,n_cal,n_test,error_rate,apss\n") != std::string::npos);

  const ParsedResults parsed = parse_results_csv_string(csv);
  REQUIRE(parsed.trials.size() == report.trials.size());
  for (std::size_t i = 0; i < parsed.trials.size(); ++i) {
    CHECK(parsed.trials[i].subject == report.trials[i].subject);
    CHECK(parsed.trials[i].alpha == report.trials[i].alpha);
    CHECK(parsed.trials[i].trial == report.trials[i].trial);
    CHECK(parsed.trials[i].seed == report.trials[i].seed);
    CHECK(parsed.trials[i].n_cal == report.trials[i].n_cal);
    CHECK(parsed.trials[i].n_test == report.trials[i].n_test);
    CHECK(parsed.trials[i].error_rate == report.trials[i].error_rate);  // exact round-trip
    CHECK(parsed.trials[i].apss == report.trials[i].apss);
  }
  CHECK(parsed.config["dataset"] == "demo");

  // a subject name with a comma survives via quoting
  testsupport::SimSubject odd = make_sim_subject("comma", 10, 4, 0.7, 20, 8);
  odd.partition.subject = "history, ancient";
  for (auto& record : odd.partition.records) record.subject = "history, ancient";
  const EvalReport odd_report = sweep_dataset({odd.partition}, odd.tables, config);
  const ParsedResults odd_parsed = parse_results_csv_string(results_csv_string(odd_report, {}));
  REQUIRE_FALSE(odd_parsed.trials.empty());
  CHECK(odd_parsed.trials[0].subject == "history, ancient");
}

TEST_CASE("results_json reports cells, aggregates and the monotonicity witness") {
  const testsupport::SimSubject subject = make_sim_subject("jsonsub", 20, 4, 0.7, 20, 8);
  SweepConfig config;
  config.alphas = alpha_grid({"0.25", "0.75"});
  config.n_trials = 2;

  const EvalReport report = sweep_dataset({subject.partition}, subject.tables, config);
  const nlohmann::json doc = results_json(report, {{"dataset", "demo"}});

  CHECK(doc["tool"] == "conformal-mcqa");
  CHECK(doc["config"]["dataset"] == "demo");
  CHECK(doc["apss_monotone_per_trial"] == true);
  REQUIRE(doc["subjects"].size() == 1);
  CHECK(doc["subjects"][0]["subject"] == "jsonsub");
  CHECK(doc["subjects"][0]["n_records"] == 20);
  REQUIRE(doc["subjects"][0]["cells"].size() == 2);
  const auto& cell = doc["subjects"][0]["cells"][0];
  CHECK(cell["alpha"] == 0.25);
  CHECK(cell["n_trials"] == 2);
  CHECK(cell.contains("mean_error_rate"));
  CHECK(cell.contains("error_box"));
  CHECK(cell["error_box"].contains("whisker_hi"));
  REQUIRE(doc["alpha_aggregates"].size() == 2);
  CHECK(doc["alpha_aggregates"][0]["alpha"] == 0.25);
  CHECK(doc["skipped_subjects"].empty());
}
