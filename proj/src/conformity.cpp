#include "cpmcqa/conformity.hpp"

#include <algorithm>

#include "cpmcqa/errors.hpp"

namespace cpmcqa {

Rational option_frequency(const FrequencyTable& table, const std::set<char>& labels) {
  if (labels.empty()) throw EmptyInput("option_frequency needs at least one label");
  table.validate();
  long long hits = 0;
  for (const char label : labels) hits += table.count_for(label);
  return {hits, table.total};
}

Score nonconformity_score(const FrequencyTable& table, const std::set<char>& labels) {
  return one_minus(option_frequency(table, labels));
}

CalibrationScores CalibrationScores::from_unsorted(std::vector<Score> unsorted) {
  if (unsorted.empty()) throw EmptyInput("calibration set must not be empty");
  std::sort(unsorted.begin(), unsorted.end());
  return {std::move(unsorted)};
}

long long CalibrationScores::count_ge(const Score& s) const {
  const auto it = std::lower_bound(scores.begin(), scores.end(), s);
  return static_cast<long long>(scores.end() - it);
}

long long CalibrationScores::count_gt(const Score& s) const {
  const auto it = std::upper_bound(scores.begin(), scores.end(), s);
  return static_cast<long long>(scores.end() - it);
}

CalibrationScores calibration_scores(const std::vector<QuestionRecord>& records,
                                     const TableMap& tables) {
  std::vector<Score> scores;
  scores.reserve(records.size());
  for (const QuestionRecord& rec : records) {
    const auto it = tables.find(rec.id);
    if (it == tables.end()) throw Error("no frequency table for question '" + rec.id + "'");
    if (it->second.option_count != rec.option_count())
      throw Error("frequency table for '" + rec.id + "' was built for " +
                  std::to_string(it->second.option_count) + " options, record has " +
                  std::to_string(rec.option_count()));
    scores.push_back(nonconformity_score(it->second, rec.truth));
  }
  return CalibrationScores::from_unsorted(std::move(scores));
}

}  // namespace cpmcqa
