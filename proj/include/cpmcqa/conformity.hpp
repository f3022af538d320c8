#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpmcqa/rational.hpp"
#include "cpmcqa/sampler.hpp"

namespace cpmcqa {

// Nonconformity scores live on the exact grid k/P (P = samples per question).
using Score = Rational;

// Empirical frequency of the given label(s): (sum of their counts) / total.
// Invalid responses stay in the denominator, so an uncooperative model is
// penalized rather than renormalized away. Throws UnknownLabel for a label
// outside the table and EmptyInput for an empty label set.
Rational option_frequency(const FrequencyTable& table, const std::set<char>& labels);

// Nonconformity score s = 1 - frequency. Higher means the model finds the
// option stranger.
Score nonconformity_score(const FrequencyTable& table, const std::set<char>& labels);

// Calibration scores held in ascending order, with exact rank queries.
struct CalibrationScores {
  std::vector<Score> scores;

  // Sorts (exact comparisons) and validates non-emptiness.
  static CalibrationScores from_unsorted(std::vector<Score> unsorted);

  long long n() const { return static_cast<long long>(scores.size()); }

  // #{ s_i >= s } and #{ s_i > s }
  long long count_ge(const Score& s) const;
  long long count_gt(const Score& s) const;
};

using TableMap = std::unordered_map<std::string, FrequencyTable>;

// Score of the true answer for every record, using that record's frequency
// table (matched by question id). Throws Error if a table is missing or was
// built for a different option count.
CalibrationScores calibration_scores(const std::vector<QuestionRecord>& records,
                                     const TableMap& tables);

}  // namespace cpmcqa
