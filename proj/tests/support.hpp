#pragma once

// Shared helpers for the test binaries: tiny fixture builders, a scratch-dir
// guard, a two-sample Kolmogorov-Smirnov check, and a subprocess runner for
// the CLI-level suites.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cpmcqa/conformity.hpp"
#include "cpmcqa/dataset.hpp"
#include "cpmcqa/sampler.hpp"

namespace testsupport {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "cpmcqa-test-XXXXXX").string();
    char* raw = ::mkdtemp(tmpl.data());
    if (!raw) throw std::runtime_error("mkdtemp failed");
    path_ = raw;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline cpmcqa::QuestionRecord make_record(const std::string& id, const std::string& subject,
                                          int n_options, const std::string& truth_labels) {
  cpmcqa::QuestionRecord rec;
  rec.id = id;
  rec.subject = subject;
  rec.prompt = "question " + id;
  for (int i = 0; i < n_options; ++i)
    rec.options.push_back("option " + std::string(1, static_cast<char>('A' + i)));
  for (const char c : truth_labels) rec.truth.insert(c);
  return rec;
}

inline cpmcqa::FrequencyTable make_table(const std::string& id, const std::vector<int>& counts,
                                         int invalid = 0) {
  cpmcqa::FrequencyTable table;
  table.question_id = id;
  table.option_count = static_cast<int>(counts.size());
  table.counts = counts;
  table.invalid_count = invalid;
  table.total = std::accumulate(counts.begin(), counts.end(), 0) + invalid;
  return table;
}

// A simulated subject: n_records questions with K options each, frequency
// tables drawn from the given per-draw accuracy.
struct SimSubject {
  cpmcqa::SubjectPartition partition;
  cpmcqa::TableMap tables;
};

inline SimSubject make_sim_subject(const std::string& subject, int n_records, int n_options,
                                   double accuracy, int samples, std::uint64_t seed) {
  SimSubject sim;
  sim.partition.subject = subject;
  for (int q = 0; q < n_records; ++q) {
    cpmcqa::QuestionRecord rec = make_record(
        subject + "/q" + std::to_string(q), subject, n_options,
        std::string(1, static_cast<char>('A' + (q % n_options))));
    sim.tables.emplace(rec.id, cpmcqa::simulate_responses(rec, accuracy, samples, seed));
    sim.partition.records.push_back(std::move(rec));
  }
  return sim;
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic approximation; fine for
// the desk-scale distributional sanity checks used here).
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n1 = a.size(), n2 = b.size();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < n1 && j < n2) {
    const double x = std::min(a[i], b[j]);
    while (i < n1 && a[i] <= x) ++i;
    while (j < n2 && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / static_cast<double>(n1) -
                              static_cast<double>(j) / static_cast<double>(n2)));
  }
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) /
                    static_cast<double>(n1 + n2);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    p += sign * 2.0 * std::exp(-2.0 * lambda * lambda * static_cast<double>(k) *
                               static_cast<double>(k));
    sign = -sign;
  }
  return std::clamp(p, 0.0, 1.0);
}

// ---- CLI subprocess runner (binaries that define CLI_BINARY_PATH only) -----
#ifdef CLI_BINARY_PATH
#include <sys/wait.h>

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string quoted = "'";
  for (const char c : s) {
    if (c == '\'') quoted += "'\\''";
    else quoted.push_back(c);
  }
  quoted += "'";
  return quoted;
}

inline CliResult run_cli(const std::vector<std::string>& args,
                         const std::map<std::string, std::string>& env = {}) {
  const TempDir scratch;
  const std::filesystem::path out_path = scratch.path() / "stdout";
  const std::filesystem::path err_path = scratch.path() / "stderr";

  std::string cmd = "env";
  for (const auto& [key, value] : env) cmd += " " + key + "=" + shell_quote(value);
  cmd += " " + shell_quote(CLI_BINARY_PATH);
  for (const std::string& arg : args) cmd += " " + shell_quote(arg);
  cmd += " > " + shell_quote(out_path.string()) + " 2> " + shell_quote(err_path.string());

  const int status = std::system(cmd.c_str());
  CliResult result;
  result.out = read_file(out_path);
  result.err = read_file(err_path);
  if (status == -1) result.exit_code = -1;
  else if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  else result.exit_code = 128;
  return result;
}

#endif  // CLI_BINARY_PATH

}  // namespace testsupport
