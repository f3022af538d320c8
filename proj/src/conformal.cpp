#include "cpmcqa/conformal.hpp"

#include <cmath>
#include <cstdlib>
#include <random>

#include "cpmcqa/errors.hpp"
#include "cpmcqa/format.hpp"
#include "cpmcqa/rng.hpp"

namespace cpmcqa {

namespace {

constexpr std::int64_t kAlphaGrid = 1000000000;  // 1e-9 resolution

// p > alpha, both exact.
bool exceeds(const Rational& p, const Alpha& alpha) {
  return p.num * alpha.frac.den > alpha.frac.num * p.den;
}

}  // namespace

Alpha::Alpha(const Rational& fraction) : frac(fraction.reduced()) {
  if (frac.den <= 0 || frac.num <= 0 || frac.num >= frac.den)
    throw Error("alpha must lie strictly between 0 and 1, got " + fraction.str());
}

Alpha Alpha::from_double(double v) {
  if (!(v > 0.0 && v < 1.0))
    throw Error("alpha must lie strictly between 0 and 1, got " + fmt_double(v));
  const auto num = static_cast<std::int64_t>(std::llround(v * static_cast<double>(kAlphaGrid)));
  if (num <= 0 || num >= kAlphaGrid)
    throw Error("alpha too close to 0 or 1: " + fmt_double(v));
  return Alpha(Rational{num, kAlphaGrid});
}

Alpha Alpha::parse(const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw Error("cannot parse alpha value '" + text + "'");
  // Any decimal with <= 9 fractional digits survives the double round-trip
  // exactly on the 1e-9 grid.
  return from_double(v);
}

std::string Alpha::str() const { return fmt_double(value()); }

QuantileThreshold conformal_quantile(const CalibrationScores& calibration, const Alpha& alpha) {
  const long long n = calibration.n();
  if (n < 1) throw EmptyInput("conformal quantile needs at least one calibration score");
  // floor((n+1) * alpha) in integers; k = ceil((n+1)(1-alpha)) = (n+1) - floor((n+1) alpha)
  const long long floor_na = ((n + 1) * alpha.frac.num) / alpha.frac.den;
  const long long k = (n + 1) - floor_na;
  if (k > n) return {k, std::nullopt};
  return {k, calibration.scores[static_cast<std::size_t>(k - 1)]};
}

Rational p_value(const CalibrationScores& calibration, const Score& candidate, PValueMode mode) {
  const long long n = calibration.n();
  if (n < 1) throw EmptyInput("p-value needs at least one calibration score");
  const long long at_least =
      mode == PValueMode::TieInclusive ? calibration.count_ge(candidate) : calibration.count_gt(candidate);
  return {at_least + 1, n + 1};
}

PredictionSet quantile_prediction_set(const CalibrationScores& calibration,
                                      const CandidateScores& candidates, const Alpha& alpha,
                                      const std::string& question_id) {
  const QuantileThreshold threshold = conformal_quantile(calibration, alpha);
  PredictionSet set;
  set.question_id = question_id;
  set.alpha = alpha.value();
  for (const auto& [label, score] : candidates) {
    set.p_values.emplace(label, p_value(calibration, score, PValueMode::TieInclusive));
    if (threshold.include_all() || score <= *threshold.tau) set.members.insert(label);
  }
  return set;
}

PredictionSet pvalue_prediction_set(const CalibrationScores& calibration,
                                    const CandidateScores& candidates, const Alpha& alpha,
                                    PValueMode mode, const std::string& question_id) {
  PredictionSet set;
  set.question_id = question_id;
  set.alpha = alpha.value();
  for (const auto& [label, score] : candidates) {
    const Rational p = p_value(calibration, score, mode);
    set.p_values.emplace(label, p);
    if (exceeds(p, alpha)) set.members.insert(label);
  }
  return set;
}

EquivalenceCheck check_equivalence(const CalibrationScores& calibration,
                                   const CandidateScores& candidates, const Alpha& alpha) {
  const PredictionSet via_quantile =
      quantile_prediction_set(calibration, candidates, alpha);
  const PredictionSet via_pvalue =
      pvalue_prediction_set(calibration, candidates, alpha, PValueMode::TieInclusive);
  if (via_quantile.members == via_pvalue.members) return {true, {}};

  const QuantileThreshold threshold = conformal_quantile(calibration, alpha);
  std::string detail = "alpha=" + alpha.str() + " n=" + std::to_string(calibration.n()) +
                       " k=" + std::to_string(threshold.k) +
                       (threshold.include_all() ? " tau=overflow" : " tau=" + threshold.tau->str());
  for (const auto& [label, score] : candidates) {
    detail += " | " + std::string(1, label) + ": s=" + score.str() +
              " p=" + via_pvalue.p_values.at(label).str() +
              " quantile=" + (via_quantile.contains(label) ? "in" : "out") +
              " pvalue=" + (via_pvalue.contains(label) ? "in" : "out");
  }
  return {false, detail};
}

VerifyOutcome verify_equivalence(const VerifyOptions& options) {
  if (options.instances < 0) throw Error("instance count must be non-negative");
  if (options.grid < 2) throw Error("score grid must have at least two points");

  VerifyOutcome outcome;
  outcome.checked = options.instances;
  for (long long i = 0; i < options.instances; ++i) {
    std::mt19937_64 gen(rng::derive_stream(options.seed, "verify/" + std::to_string(i)));

    const long long n = 1 + static_cast<long long>(rng::below(gen, 50));
    std::vector<Score> cal;
    cal.reserve(static_cast<std::size_t>(n));
    for (long long j = 0; j < n; ++j)
      cal.push_back(Score{static_cast<std::int64_t>(rng::below(gen, options.grid + 1)), options.grid});
    const CalibrationScores calibration = CalibrationScores::from_unsorted(std::move(cal));

    const int n_labels = 2 + static_cast<int>(rng::below(gen, 9));  // 2..10 candidates
    CandidateScores candidates;
    for (int c = 0; c < n_labels; ++c)
      candidates.emplace(static_cast<char>('A' + c),
                         Score{static_cast<std::int64_t>(rng::below(gen, options.grid + 1)),
                               options.grid});

    const auto step = static_cast<std::int64_t>(1 + rng::below(gen, 19));  // alpha = step * 0.05
    const Alpha alpha{Rational{step, 20}};

    if (conformal_quantile(calibration, alpha).include_all()) ++outcome.include_all_cases;

    if (options.mode == PValueMode::TieInclusive) {
      const EquivalenceCheck check = check_equivalence(calibration, candidates, alpha);
      if (!check.equivalent) {
        ++outcome.mismatches;
        if (outcome.first_counterexample.empty())
          outcome.first_counterexample = "instance " + std::to_string(i) + ": " + check.detail;
      }
      continue;
    }

    // Strict mode: the strict-tie set may only drop labels whose score ties a
    // calibration score; it must never contain a label the quantile set lacks.
    const PredictionSet via_quantile = quantile_prediction_set(calibration, candidates, alpha);
    const PredictionSet via_strict =
        pvalue_prediction_set(calibration, candidates, alpha, PValueMode::Strict);
    bool violated = false;
    for (const auto& [label, score] : candidates) {
      const bool in_q = via_quantile.contains(label);
      const bool in_s = via_strict.contains(label);
      if (in_s && !in_q) violated = true;
      if (in_q && !in_s && calibration.count_ge(score) == calibration.count_gt(score))
        violated = true;  // dropped without a tie to explain it
    }
    if (via_strict.members != via_quantile.members) ++outcome.strict_shrinks;
    if (violated) {
      ++outcome.mismatches;
      if (outcome.first_counterexample.empty())
        outcome.first_counterexample = "instance " + std::to_string(i) + ": strict-mode violation";
    }
  }
  return outcome;
}

}  // namespace cpmcqa
