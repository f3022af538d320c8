#include "cpmcqa/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cpmcqa/errors.hpp"
#include "cpmcqa/rng.hpp"

namespace cpmcqa {

using nlohmann::json;

namespace {

constexpr int kMaxOptions = 10;

std::string type_name(const json& j) { return j.type_name(); }

// Accepts "C" or "c" (surrounding whitespace allowed); anything else is not a
// usable answer label.
char parse_answer_label(const std::string& raw, const std::string& record_id) {
  std::string t = raw;
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
  if (t.size() != 1) throw TruthNotInOptions(record_id, raw);
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  if (QuestionRecord::label_index(upper) < 0) throw TruthNotInOptions(record_id, raw);
  return upper;
}

QuestionRecord parse_record(const json& doc, int line) {
  if (!doc.is_object()) throw MalformedRecord(line, "expected a JSON object, got " + type_name(doc));

  QuestionRecord rec;
  const auto need = [&](const char* field) -> const json& {
    const auto it = doc.find(field);
    if (it == doc.end()) throw MalformedRecord(line, std::string("missing field '") + field + "'");
    return *it;
  };

  const json& id = need("id");
  if (!id.is_string()) throw MalformedRecord(line, "field 'id' must be a string");
  rec.id = id.get<std::string>();
  if (rec.id.empty()) throw MalformedRecord(line, "field 'id' must be non-empty");

  const json& subject = need("subject");
  if (!subject.is_string()) throw MalformedRecord(line, "field 'subject' must be a string");
  rec.subject = subject.get<std::string>();
  if (rec.subject.empty()) throw MalformedRecord(line, "field 'subject' must be non-empty");

  const json& question = need("question");
  if (!question.is_string()) throw MalformedRecord(line, "field 'question' must be a string");
  rec.prompt = question.get<std::string>();

  const json& options = need("options");
  if (!options.is_array()) throw MalformedRecord(line, "field 'options' must be an array");
  for (const json& opt : options) {
    if (!opt.is_string()) throw MalformedRecord(line, "options must all be strings");
    rec.options.push_back(opt.get<std::string>());
  }
  if (rec.option_count() < 2)
    throw MalformedRecord(line, "need at least 2 options, got " + std::to_string(rec.option_count()));
  if (rec.option_count() > kMaxOptions)
    throw MalformedRecord(line, "at most 10 options supported, got " + std::to_string(rec.option_count()));

  const json& answer = need("answer");
  std::vector<std::string> raw_answers;
  if (answer.is_string()) {
    raw_answers.push_back(answer.get<std::string>());
  } else if (answer.is_array()) {
    for (const json& a : answer) {
      if (!a.is_string()) throw MalformedRecord(line, "answer array entries must be strings");
      raw_answers.push_back(a.get<std::string>());
    }
  } else {
    throw MalformedRecord(line, "field 'answer' must be a string or an array of strings");
  }
  if (raw_answers.empty()) throw MalformedRecord(line, "field 'answer' must name at least one option");

  for (const std::string& raw : raw_answers) {
    const char label = parse_answer_label(raw, rec.id);
    if (QuestionRecord::label_index(label) >= rec.option_count())
      throw TruthNotInOptions(rec.id, raw);
    rec.truth.insert(label);
  }
  return rec;
}

}  // namespace

std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  (void)format;  // MmluJsonl is the only wire format today
  std::ifstream in(path);
  if (!in) throw MalformedRecord(0, "cannot open dataset file " + path.string());

  std::vector<QuestionRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    // Blank lines are tolerated so hand-edited files round-trip.
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(line_number, e.what());
    }
    QuestionRecord rec = parse_record(doc, line_number);
    if (!seen_ids.insert(rec.id).second) throw DuplicateId(rec.id, line_number);
    records.push_back(std::move(rec));
  }
  return records;
}

std::string to_jsonl_line(const QuestionRecord& record) {
  json doc;
  doc["id"] = record.id;
  doc["subject"] = record.subject;
  doc["question"] = record.prompt;
  doc["options"] = record.options;
  if (record.truth.size() == 1) {
    doc["answer"] = std::string(1, *record.truth.begin());
  } else {
    std::vector<std::string> answers;
    for (const char label : record.truth) answers.emplace_back(1, label);
    doc["answer"] = answers;
  }
  return doc.dump();
}

std::vector<SubjectPartition> partition_by_subject(const std::vector<QuestionRecord>& records) {
  std::vector<SubjectPartition> partitions;
  std::map<std::string, std::size_t> index_of;
  for (const QuestionRecord& rec : records) {
    const auto it = index_of.find(rec.subject);
    if (it == index_of.end()) {
      index_of.emplace(rec.subject, partitions.size());
      partitions.push_back({rec.subject, {rec}});
    } else {
      partitions[it->second].records.push_back(rec);
    }
  }
  return partitions;
}

std::pair<int, int> split_sizes(int n_records, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw Error("split ratio must lie strictly between 0 and 1, got " + std::to_string(ratio));
  if (n_records <= 0) throw EmptyInput("cannot split an empty subject");
  // round-half-up, e.g. 5 records at ratio 0.5 -> 3 calibration / 2 test
  const int n_cal = static_cast<int>(std::floor(ratio * n_records + 0.5));
  const int n_test = n_records - n_cal;
  if (n_cal == 0 || n_test == 0)
    throw DegenerateSplit("ratio " + std::to_string(ratio) + " leaves " + std::to_string(n_cal) +
                          " calibration / " + std::to_string(n_test) + " test of " +
                          std::to_string(n_records) + " records");
  return {n_cal, n_test};
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n_records, double ratio,
                                                            std::uint64_t seed) {
  const auto [n_cal, n_test] = split_sizes(n_records, ratio);
  std::vector<int> order(n_records);
  for (int i = 0; i < n_records; ++i) order[i] = i;
  std::mt19937_64 gen(seed);
  rng::shuffle(order, gen);

  std::vector<int> cal(order.begin(), order.begin() + n_cal);
  std::vector<int> test(order.begin() + n_cal, order.end());
  std::sort(cal.begin(), cal.end());
  std::sort(test.begin(), test.end());
  return {std::move(cal), std::move(test)};
}

Split split_calibration_test(const SubjectPartition& partition, double ratio, std::uint64_t seed) {
  const int n = static_cast<int>(partition.records.size());
  const auto [cal_idx, test_idx] = split_indices(n, ratio, seed);

  Split split;
  split.ratio = ratio;
  split.seed = seed;
  split.calibration.reserve(cal_idx.size());
  split.test.reserve(test_idx.size());
  for (const int i : cal_idx) split.calibration.push_back(partition.records[i]);
  for (const int i : test_idx) split.test.push_back(partition.records[i]);
  return split;
}

}  // namespace cpmcqa
