#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "cpmcqa/conformity.hpp"
#include "cpmcqa/rational.hpp"

namespace cpmcqa {

// Significance level kept as an exact fraction. Parsing goes through a 1e-9
// grid, which reproduces any decimal the CLI will ever see; all threshold and
// membership decisions then reduce to integer comparisons, so levels like 0.2
// behave identically whether n*alpha lands on an integer or not.
struct Alpha {
  Rational frac{1, 2};

  Alpha() = default;
  explicit Alpha(const Rational& fraction);

  static Alpha parse(const std::string& text);
  static Alpha from_double(double v);

  double value() const { return frac.value(); }
  std::string str() const;  // shortest decimal form, e.g. "0.1"
};

// How ties between a candidate score and calibration scores are counted.
// TieInclusive uses #{s_i >= s} and keeps the p-value set exactly equal to the
// quantile set; Strict uses #{s_i > s} and can only shrink the set at levels
// that land exactly on a tie.
enum class PValueMode { TieInclusive, Strict };

// k-th smallest calibration score with k = ceil((n+1)(1-alpha)); when k > n
// there is no usable threshold and every candidate must be included.
struct QuantileThreshold {
  long long k = 0;
  std::optional<Score> tau;  // empty <=> include-all

  bool include_all() const { return !tau.has_value(); }
};

QuantileThreshold conformal_quantile(const CalibrationScores& calibration, const Alpha& alpha);

// Conformal p-value of a candidate score: (#ties-or-larger + 1) / (n + 1).
Rational p_value(const CalibrationScores& calibration, const Score& candidate,
                 PValueMode mode = PValueMode::TieInclusive);

struct PredictionSet {
  std::string question_id;
  double alpha = 0.0;
  std::set<char> members;
  std::map<char, Rational> p_values;

  int size() const { return static_cast<int>(members.size()); }
  bool contains(char label) const { return members.count(label) != 0; }
};

using CandidateScores = std::map<char, Score>;

// Keep labels whose score is <= the conformal quantile (all labels when the
// rank overflows). p_values are filled in for reporting either way.
PredictionSet quantile_prediction_set(const CalibrationScores& calibration,
                                      const CandidateScores& candidates, const Alpha& alpha,
                                      const std::string& question_id = {});

// Keep labels whose p-value exceeds alpha.
PredictionSet pvalue_prediction_set(const CalibrationScores& calibration,
                                    const CandidateScores& candidates, const Alpha& alpha,
                                    PValueMode mode = PValueMode::TieInclusive,
                                    const std::string& question_id = {});

struct EquivalenceCheck {
  bool equivalent = false;
  std::string detail;  // human-readable diff, empty when equivalent
};

// Compares the two constructions on one instance (tie-inclusive p-values).
EquivalenceCheck check_equivalence(const CalibrationScores& calibration,
                                   const CandidateScores& candidates, const Alpha& alpha);

// Randomized self-check over `instances` generated instances (scores on a
// 1/grid lattice, n in [1,50], alphas on the 0.05 grid), covering ties,
// include-all overflow and empty sets. TieInclusive asserts exact set
// equality; Strict asserts the one-sided relation (strict sets never grow,
// and any label dropped relative to the quantile set ties a calibration
// score). Deterministic in `seed`.
struct VerifyOptions {
  long long instances = 10000;
  std::uint64_t seed = 1;
  PValueMode mode = PValueMode::TieInclusive;
  int grid = 20;
};

struct VerifyOutcome {
  long long checked = 0;
  long long mismatches = 0;        // violations of the asserted relation
  long long strict_shrinks = 0;    // informational: strict sets smaller than quantile sets
  long long include_all_cases = 0; // informational: rank-overflow instances seen
  std::string first_counterexample;

  bool pass() const { return mismatches == 0; }
};

VerifyOutcome verify_equivalence(const VerifyOptions& options);

}  // namespace cpmcqa
