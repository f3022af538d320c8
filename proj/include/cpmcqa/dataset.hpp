#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cpmcqa {

// One multiple-choice question. Options are labeled 'A', 'B', ... in array
// order; `truth` holds the label(s) of the correct option(s).
struct QuestionRecord {
  std::string id;
  std::string subject;
  std::string prompt;
  std::vector<std::string> options;
  std::set<char> truth;

  int option_count() const { return static_cast<int>(options.size()); }

  std::vector<char> labels() const {
    std::vector<char> out;
    out.reserve(options.size());
    for (std::size_t i = 0; i < options.size(); ++i) out.push_back(label_at(i));
    return out;
  }

  std::set<char> label_set() const {
    const auto ls = labels();
    return {ls.begin(), ls.end()};
  }

  static char label_at(std::size_t index) { return static_cast<char>('A' + index); }

  // -1 when the character is not a label this library ever assigns.
  static int label_index(char label) {
    if (label < 'A' || label > 'J') return -1;
    return label - 'A';
  }
};

// All records sharing one subject, in dataset order. Evaluation operates on
// one partition at a time; pooling questions across subjects is rejected.
struct SubjectPartition {
  std::string subject;
  std::vector<QuestionRecord> records;
};

// Disjoint calibration/test sets drawn from a single subject.
struct Split {
  std::vector<QuestionRecord> calibration;
  std::vector<QuestionRecord> test;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

enum class DatasetFormat { MmluJsonl };

// Reads a JSONL question file. Throws MalformedRecord (with line number),
// DuplicateId, or TruthNotInOptions; an unreadable file is treated as a
// malformed record at line 0.
std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path,
                                         DatasetFormat format = DatasetFormat::MmluJsonl);

// Serializes one record back to a JSONL line (no trailing newline). Reading
// the line back yields a semantically equal record.
std::string to_jsonl_line(const QuestionRecord& record);

// Groups records by subject, subjects ordered by first appearance, records in
// input order within each subject.
std::vector<SubjectPartition> partition_by_subject(const std::vector<QuestionRecord>& records);

// Calibration size under `ratio` with round-half-up; returns {n_cal, n_test}.
// Throws DegenerateSplit when either side would be empty.
std::pair<int, int> split_sizes(int n_records, double ratio);

// Index-level split: which positions of a size-n sequence go to calibration
// vs. test for a given seed. Both halves are returned in ascending order.
// Deterministic in (n_records, ratio, seed).
std::pair<std::vector<int>, std::vector<int>> split_indices(int n_records, double ratio,
                                                            std::uint64_t seed);

// Materialized split of one subject's records.
Split split_calibration_test(const SubjectPartition& partition, double ratio, std::uint64_t seed);

}  // namespace cpmcqa
