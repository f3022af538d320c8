#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cpmcqa/dataset.hpp"

namespace cpmcqa {

// Knobs for querying a model, plus transport limits. Defaults follow the
// self-consistency recipe: 20 single-token samples at temperature 1.0 with
// nucleus 0.9.
struct SamplingConfig {
  int samples_per_question = 20;
  double temperature = 1.0;
  double top_p = 0.9;
  int max_output_tokens = 1;
  std::string model_name;
  std::string endpoint_url;
  int max_in_flight = 4;
  int retry_limit = 3;

  void validate() const;  // throws Error on out-of-range values
};

// Response histogram for one question: counts[i] tallies option 'A'+i,
// invalid_count tallies responses naming no option. Invariant:
// sum(counts) + invalid_count == total, total == samples_per_question.
struct FrequencyTable {
  std::string question_id;
  int option_count = 0;
  std::vector<int> counts;
  int invalid_count = 0;
  int total = 0;

  int count_for(char label) const;  // throws UnknownLabel outside the table
  void validate() const;            // throws Error when the invariant is broken
};

// Transport seam: one blocking single-prompt completion. Implementations are
// the HTTP client and in-test fakes; throws EndpointUnavailable on failure.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const SamplingConfig& config, const std::string& prompt) = 0;
};

// Maps a raw model response to an option label: strip whitespace/punctuation,
// uppercase, then require exactly one character among `valid_labels`.
// "b", " C.", "(a)" parse; "Both A and B", "" and "K" do not.
std::optional<char> parse_option_token(const std::string& raw, const std::set<char>& valid_labels);

// Canonical prompt: question text, one "X. option" line per option, then an
// instruction to answer with a single letter.
std::string build_prompt(const QuestionRecord& record);

// Asks the client `samples_per_question` times and tallies the parses.
// EndpointUnavailable from the client propagates as-is when nothing was
// collected yet, and as PartialSample once some responses exist.
FrequencyTable sample_responses(const QuestionRecord& record, const SamplingConfig& config,
                                CompletionClient& client);

// Deterministic stand-in for a model of the given accuracy: each draw answers
// correctly with probability `accuracy`, otherwise uniformly among the wrong
// options. Every record gets its own stream derived from (seed, record id).
FrequencyTable simulate_responses(const QuestionRecord& record, double accuracy, int samples,
                                  std::uint64_t seed);

// A simulated model as a sampling source; model_name() is what cache entries
// and result files record.
struct SimulatorSource {
  double accuracy = 0.7;
  std::uint64_t seed = 1;

  std::string model_name() const;
};

// ---- durable response cache -------------------------------------------------
//
// One JSON file per (model, dataset, question, sampling knobs). Layout:
//   <cache_dir>/<model>/<dataset>/<question_id>__p<P>_t<temp>_tp<top_p>.json
// Files carry a checksum; a failed checksum or unreadable body throws
// CacheCorrupt rather than silently resampling.

struct CacheKey {
  std::string model;
  std::string dataset;
  std::string question_id;
  int samples = 0;
  double temperature = 0.0;
  double top_p = 0.0;
};

std::filesystem::path cache_entry_path(const std::filesystem::path& cache_dir,
                                       const CacheKey& key);

// Atomic write (temp file + rename) so a crash never leaves a torn entry.
void write_cache_entry(const std::filesystem::path& cache_dir, const CacheKey& key,
                       const FrequencyTable& table);

// nullopt when no entry exists (or the entry was written under a different
// key); CacheCorrupt when an entry exists but cannot be trusted.
std::optional<FrequencyTable> read_cache_entry(const std::filesystem::path& cache_dir,
                                               const CacheKey& key);

struct CacheStats {
  int total = 0;
  int sampled = 0;
  int from_cache = 0;
  long long invalid_responses = 0;
};

// Returns tables for all records, in record order, consulting the cache first
// and sampling only the misses (each miss is written back as soon as it
// completes, so an interrupted run resumes where it stopped). The client
// variant fans out up to max_in_flight questions at a time.
std::vector<FrequencyTable> load_or_sample(const std::vector<QuestionRecord>& records,
                                           const SamplingConfig& config,
                                           const std::filesystem::path& cache_dir,
                                           const std::string& dataset_id,
                                           CompletionClient& client, CacheStats* stats = nullptr);

std::vector<FrequencyTable> load_or_sample(const std::vector<QuestionRecord>& records,
                                           const SamplingConfig& config,
                                           const std::filesystem::path& cache_dir,
                                           const std::string& dataset_id,
                                           const SimulatorSource& simulator,
                                           CacheStats* stats = nullptr);

// Cache-only lookup for evaluation: returns tables for all records or throws
// MissingCacheEntries naming every absent key.
std::vector<FrequencyTable> load_cached_tables(const std::vector<QuestionRecord>& records,
                                               const SamplingConfig& config,
                                               const std::filesystem::path& cache_dir,
                                               const std::string& dataset_id);

}  // namespace cpmcqa
