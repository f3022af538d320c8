// conformal-mcqa: prediction sets with finite-sample coverage guarantees for
// multiple-choice QA over a black-box chat-completion model (or a simulator).
//
// Subcommands:
//   sample    query the model (or simulator) and fill the response cache
//   evaluate  bootstrap split-conformal evaluation from cached responses
//   verify    randomized p-value/quantile equivalence self-check
//   report    render SVG figures from a results.csv
//
// Exit codes: 0 success, 1 failed verification, 2 input error,
// 3 data/schema error, 4 remote endpoint failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpmcqa/conformal.hpp"
#include "cpmcqa/dataset.hpp"
#include "cpmcqa/errors.hpp"
#include "cpmcqa/evaluation.hpp"
#include "cpmcqa/format.hpp"
#include "cpmcqa/http_client.hpp"
#include "cpmcqa/report.hpp"
#include "cpmcqa/sampler.hpp"
#include "cpmcqa/version.hpp"

namespace {

using namespace cpmcqa;
using nlohmann::json;

struct SampleArgs {
  std::string dataset;
  std::string format = "mmlu-jsonl";
  std::string cache_dir;
  std::string model;
  std::string endpoint;
  std::optional<double> simulate_accuracy;
  std::uint64_t seed = 1;
  int p = 20;
  double temperature = 1.0;
  double top_p = 0.9;
  int max_output_tokens = 1;
  int max_in_flight = 4;
  int retries = 3;
};

struct EvaluateArgs {
  std::string dataset;
  std::string format = "mmlu-jsonl";
  std::string cache_dir;
  std::string model;
  std::optional<double> simulate_accuracy;
  std::uint64_t sample_seed = 1;
  int p = 20;
  double temperature = 1.0;
  double top_p = 0.9;
  std::string alphas;
  double ratio = 0.5;
  int trials = 100;
  std::uint64_t seed = 1;
  std::string mode = "tie-inclusive";
  std::string out;
  bool serial = false;
};

struct VerifyArgs {
  long long instances = 10000;
  std::uint64_t seed = 1;
  std::string mode = "tie-inclusive";
  int grid = 20;
};

struct ReportArgs {
  std::string results;
  std::string kind = "error-box";
  std::string out;
};

std::string dataset_id_from_path(const std::string& dataset) {
  return std::filesystem::path(dataset).stem().string();
}

PValueMode parse_mode(const std::string& mode) {
  if (mode == "tie-inclusive") return PValueMode::TieInclusive;
  if (mode == "strict") return PValueMode::Strict;
  throw Error("unknown p-value mode '" + mode + "' (expected tie-inclusive or strict)");
}

void check_format(const std::string& format) {
  if (format != "mmlu-jsonl") throw Error("unknown dataset format '" + format + "'");
}

std::vector<Alpha> parse_alpha_list(const std::string& list) {
  std::vector<Alpha> alphas;
  std::string token;
  std::istringstream in(list);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    alphas.push_back(Alpha::parse(token));
  }
  if (alphas.empty()) throw Error("--alphas must name at least one level");
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (!(alphas[i - 1].frac < alphas[i].frac))
      throw Error("--alphas must be strictly ascending");
  return alphas;
}

int run_sample(const SampleArgs& args) {
  check_format(args.format);
  const bool simulated = args.simulate_accuracy.has_value();
  if (simulated == !args.model.empty())
    throw Error("choose exactly one source: --simulate-accuracy, or --model with --endpoint");
  if (!simulated && args.endpoint.empty())
    throw Error("--model needs --endpoint (or use --simulate-accuracy)");

  const std::vector<QuestionRecord> records = load_dataset(args.dataset);
  if (records.empty()) throw EmptyInput("dataset " + args.dataset + " has no records");
  const std::string dataset_id = dataset_id_from_path(args.dataset);

  SamplingConfig config;
  config.samples_per_question = args.p;
  config.temperature = args.temperature;
  config.top_p = args.top_p;
  config.max_output_tokens = args.max_output_tokens;
  config.max_in_flight = args.max_in_flight;
  config.retry_limit = args.retries;

  CacheStats stats;
  if (simulated) {
    const SimulatorSource simulator{*args.simulate_accuracy, args.seed};
    config.model_name = simulator.model_name();
    load_or_sample(records, config, args.cache_dir, dataset_id, simulator, &stats);
  } else {
    config.model_name = args.model;
    config.endpoint_url = args.endpoint;
    HttpCompletionClient client(args.endpoint);
    load_or_sample(records, config, args.cache_dir, dataset_id, client, &stats);
  }

  std::cout << "dataset: " << dataset_id << " (" << records.size() << " questions)\n"
            << "model: " << config.model_name << "\n"
            << "sampled: " << stats.sampled << " | from cache: " << stats.from_cache
            << " | invalid responses: " << stats.invalid_responses << "\n"
            << "cache: " << args.cache_dir << "\n";
  return 0;
}

int run_evaluate(const EvaluateArgs& args) {
  check_format(args.format);
  const bool simulated = args.simulate_accuracy.has_value();
  if (simulated == !args.model.empty())
    throw Error("choose exactly one source: --simulate-accuracy or --model");
  if (args.out.empty()) throw Error("--out directory is required");

  // Validate the cheap configuration before touching the dataset or cache, so
  // a usage mistake surfaces as one no matter what is on disk.
  SweepConfig sweep;
  sweep.alphas = parse_alpha_list(args.alphas);
  sweep.ratio = args.ratio;
  sweep.n_trials = args.trials;
  sweep.base_seed = args.seed;
  sweep.mode = parse_mode(args.mode);

  const std::vector<QuestionRecord> records = load_dataset(args.dataset);
  if (records.empty()) throw EmptyInput("dataset " + args.dataset + " has no records");
  const std::string dataset_id = dataset_id_from_path(args.dataset);

  SamplingConfig config;
  config.samples_per_question = args.p;
  config.temperature = args.temperature;
  config.top_p = args.top_p;
  config.model_name =
      simulated ? SimulatorSource{*args.simulate_accuracy, args.sample_seed}.model_name()
                : args.model;

  const std::vector<FrequencyTable> tables =
      load_cached_tables(records, config, args.cache_dir, dataset_id);
  TableMap table_map;
  for (const FrequencyTable& t : tables) table_map.emplace(t.question_id, t);

  const std::vector<SubjectPartition> partitions = partition_by_subject(records);
  const EvalReport report = sweep_dataset(partitions, table_map, sweep,
                                          args.serial ? Execution::Serial : Execution::Parallel);
  if (report.trials.empty())
    throw DegenerateSplit("every subject was skipped at ratio " + fmt_double(args.ratio));

  // Provenance echo. Execution mode and output location are deliberately not
  // part of it: they cannot change the numbers, and serial/parallel runs must
  // produce byte-identical files.
  json run_config;
  run_config["command"] = "evaluate";
  run_config["dataset"] = args.dataset;
  run_config["dataset_id"] = dataset_id;
  run_config["cache_dir"] = args.cache_dir;
  run_config["model"] = config.model_name;
  if (simulated) {
    run_config["simulate_accuracy"] = *args.simulate_accuracy;
    run_config["sample_seed"] = args.sample_seed;
  }
  run_config["p"] = args.p;
  run_config["temperature"] = args.temperature;
  run_config["top_p"] = args.top_p;
  json alpha_list = json::array();
  for (const Alpha& a : sweep.alphas) alpha_list.push_back(a.value());
  run_config["alphas"] = alpha_list;
  run_config["ratio"] = args.ratio;
  run_config["trials"] = args.trials;
  run_config["seed"] = args.seed;
  run_config["mode"] = args.mode;

  std::filesystem::create_directories(args.out);
  const std::filesystem::path csv_path = std::filesystem::path(args.out) / "results.csv";
  {
    std::ofstream out(csv_path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + csv_path.string());
    write_results_csv(out, report, run_config);
  }
  const std::filesystem::path json_path = std::filesystem::path(args.out) / "results.json";
  {
    std::ofstream out(json_path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + json_path.string());
    out << results_json(report, run_config).dump(2) << "\n";
  }

  for (const AlphaAggregate& agg : report.aggregates)
    std::cout << "alpha " << fmt_double(agg.alpha) << ": mean error "
              << fmt_double(agg.mean_error_uniform) << " | mean set size "
              << fmt_double(agg.mean_apss_uniform) << "\n";
  for (const SkippedSubject& s : report.skipped)
    std::cout << "skipped subject " << s.subject << ": " << s.reason << "\n";
  std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";
  return 0;
}

int run_verify(const VerifyArgs& args) {
  VerifyOptions options;
  options.instances = args.instances;
  options.seed = args.seed;
  options.mode = parse_mode(args.mode);
  options.grid = args.grid;

  const VerifyOutcome outcome = verify_equivalence(options);
  if (outcome.checked == 0)
    std::cout << "warning: 0 instances requested; nothing was checked (vacuous pass)\n";
  std::cout << "checked: " << outcome.checked << " instances (seed " << args.seed << ", mode "
            << args.mode << ")\n"
            << "include-all cases: " << outcome.include_all_cases << "\n";
  if (options.mode == PValueMode::Strict)
    std::cout << "strict sets smaller than quantile sets: " << outcome.strict_shrinks << "\n";
  std::cout << "violations: " << outcome.mismatches << "\n";
  if (!outcome.pass()) {
    std::cerr << "counterexample: " << outcome.first_counterexample << "\n";
    return 1;
  }
  return 0;
}

int run_report(const ReportArgs& args) {
  FigureKind kind;
  if (args.kind == "error-box") kind = FigureKind::ErrorBox;
  else if (args.kind == "apss-curve") kind = FigureKind::ApssCurve;
  else throw Error("unknown figure kind '" + args.kind + "' (expected error-box or apss-curve)");
  if (args.out.empty()) throw Error("--out directory is required");

  const ParsedResults results = parse_results_csv(args.results);
  const std::vector<std::string> written = render_figures(results, kind, args.out);
  for (const std::string& file : written)
    std::cout << "wrote " << (std::filesystem::path(args.out) / file).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolName) +
               ": conformal prediction sets for multiple-choice QA over black-box models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

  SampleArgs sample_args;
  CLI::App* sample = app.add_subcommand("sample", "query a model or simulator into the cache");
  sample->add_option("--dataset", sample_args.dataset, "question file (JSONL)")->required();
  sample->add_option("--format", sample_args.format, "dataset format (mmlu-jsonl)");
  sample->add_option("--cache-dir", sample_args.cache_dir, "response cache directory")->required();
  sample->add_option("--model", sample_args.model, "model name for the remote endpoint");
  sample->add_option("--endpoint", sample_args.endpoint, "chat-completion endpoint URL");
  sample->add_option("--simulate-accuracy", sample_args.simulate_accuracy,
                     "simulate a model with this per-draw accuracy instead of HTTP");
  sample->add_option("--seed", sample_args.seed, "simulator seed");
  sample->add_option("--p", sample_args.p, "samples per question");
  sample->add_option("--temperature", sample_args.temperature, "sampling temperature");
  sample->add_option("--top-p", sample_args.top_p, "nucleus mass");
  sample->add_option("--max-output-tokens", sample_args.max_output_tokens,
                     "completion length cap");
  sample->add_option("--max-in-flight", sample_args.max_in_flight,
                     "concurrent questions against the endpoint");
  sample->add_option("--retries", sample_args.retries, "retry budget per request");

  EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "bootstrap evaluation from cached samples");
  evaluate->add_option("--dataset", eval_args.dataset, "question file (JSONL)")->required();
  evaluate->add_option("--format", eval_args.format, "dataset format (mmlu-jsonl)");
  evaluate->add_option("--cache-dir", eval_args.cache_dir, "response cache directory")->required();
  evaluate->add_option("--model", eval_args.model, "model name used at sampling time");
  evaluate->add_option("--simulate-accuracy", eval_args.simulate_accuracy,
                       "simulated accuracy used at sampling time");
  evaluate->add_option("--sample-seed", eval_args.sample_seed,
                       "simulator seed used at sampling time");
  evaluate->add_option("--p", eval_args.p, "samples per question used at sampling time");
  evaluate->add_option("--temperature", eval_args.temperature, "temperature used at sampling time");
  evaluate->add_option("--top-p", eval_args.top_p, "nucleus mass used at sampling time");
  evaluate->add_option("--alphas", eval_args.alphas, "comma-separated target levels, ascending")
      ->required();
  evaluate->add_option("--ratio", eval_args.ratio, "calibration fraction per split");
  evaluate->add_option("--trials", eval_args.trials, "bootstrap trials per subject and level");
  evaluate->add_option("--seed", eval_args.seed, "base seed; trial t splits with seed+t");
  evaluate->add_option("--mode", eval_args.mode, "p-value mode: tie-inclusive or strict");
  evaluate->add_option("--out", eval_args.out, "output directory")->required();
  evaluate->add_flag("--serial", eval_args.serial, "force single-threaded evaluation");

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "p-value vs quantile equivalence self-check");
  verify->add_option("--instances", verify_args.instances, "random instances to check");
  verify->add_option("--seed", verify_args.seed, "generator seed");
  verify->add_option("--mode", verify_args.mode, "p-value mode: tie-inclusive or strict");
  verify->add_option("--grid", verify_args.grid, "score lattice denominator");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "render SVG figures from results.csv");
  report->add_option("--results", report_args.results, "results.csv from evaluate")->required();
  report->add_option("--kind", report_args.kind, "error-box or apss-curve");
  report->add_option("--out", report_args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sample->parsed()) return run_sample(sample_args);
    if (evaluate->parsed()) return run_evaluate(eval_args);
    if (verify->parsed()) return run_verify(verify_args);
    if (report->parsed()) return run_report(report_args);
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const MissingCacheEntries& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const std::string& key : e.keys) std::cerr << "  missing: " << key << "\n";
    return 3;
  } catch (const CacheCorrupt& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const UnknownReportSchema& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const EndpointUnavailable& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const PartialSample& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
