// Benchmark for the evaluation grid: runs the same sweep serially and with
// OpenMP, reports wall times, and fails loudly if the two reports are not
// byte-identical once serialized. `--smoke` runs a small grid and only checks
// the identity (used as a ctest entry).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "cpmcqa/conformal.hpp"
#include "cpmcqa/evaluation.hpp"
#include "cpmcqa/format.hpp"
#include "cpmcqa/sampler.hpp"

using namespace cpmcqa;

namespace {

struct BenchSetup {
  std::vector<SubjectPartition> partitions;
  TableMap tables;
};

// Synthetic corpus: `subjects` subjects of `questions` 4-option records each,
// with simulated 70%-accurate responses.
BenchSetup make_setup(int subjects, int questions, int samples) {
  BenchSetup setup;
  for (int s = 0; s < subjects; ++s) {
    SubjectPartition part;
    part.subject = "bench_subject_" + std::to_string(s);
    for (int q = 0; q < questions; ++q) {
      QuestionRecord rec;
      rec.id = part.subject + "/q" + std::to_string(q);
      rec.subject = part.subject;
      rec.prompt = "bench question " + std::to_string(q);
      rec.options = {"W", "X", "Y", "Z"};
      rec.truth = {static_cast<char>('A' + (q % 4))};
      setup.tables.emplace(rec.id, simulate_responses(rec, 0.7, samples, 7));
      part.records.push_back(std::move(rec));
    }
    setup.partitions.push_back(std::move(part));
  }
  return setup;
}

double run_timed(const BenchSetup& setup, const SweepConfig& config, Execution execution,
                 std::string& csv_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const EvalReport report = sweep_dataset(setup.partitions, setup.tables, config, execution);
  const auto t1 = std::chrono::steady_clock::now();
  csv_out = results_csv_string(report, nlohmann::json{{"bench", true}});
  return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  bool smoke = false;
  int subjects = 8;
  int questions = 300;
  int trials = 60;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--smoke") smoke = true;
    else if (arg == "--subjects" && i + 1 < argc) subjects = std::atoi(argv[++i]);
    else if (arg == "--questions" && i + 1 < argc) questions = std::atoi(argv[++i]);
    else if (arg == "--trials" && i + 1 < argc) trials = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: bench_eval [--smoke] [--subjects N] [--questions N] [--trials N]\n";
      return 2;
    }
  }
  if (smoke) {
    subjects = 3;
    questions = 40;
    trials = 10;
  }

  const BenchSetup setup = make_setup(subjects, questions, 20);
  SweepConfig config;
  for (const char* a : {"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"})
    config.alphas.push_back(Alpha::parse(a));
  config.ratio = 0.5;
  config.n_trials = trials;
  config.base_seed = 1;

  std::string serial_csv, parallel_csv;
  const double serial_s = run_timed(setup, config, Execution::Serial, serial_csv);
  const double parallel_s = run_timed(setup, config, Execution::Parallel, parallel_csv);

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif

  std::cout << "grid: " << subjects << " subjects x " << config.alphas.size() << " alphas x "
            << trials << " trials (" << questions << " questions/subject)\n";
  std::cout << "serial:   " << fmt_double(serial_s) << " s\n";
  std::cout << "parallel: " << fmt_double(parallel_s) << " s (" << threads << " threads, speedup "
            << fmt_double(std::round(serial_s / parallel_s * 100.0) / 100.0) << "x)\n";

  if (serial_csv != parallel_csv) {
    std::cerr << "FAIL: serial and parallel runs disagree\n";
    return 1;
  }
  std::cout << "outputs identical: yes (" << serial_csv.size() << " bytes)\n";
  return 0;
}
