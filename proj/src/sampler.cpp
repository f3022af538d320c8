#include "cpmcqa/sampler.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cpmcqa/errors.hpp"
#include "cpmcqa/format.hpp"
#include "cpmcqa/rng.hpp"

namespace cpmcqa {

using nlohmann::json;

void SamplingConfig::validate() const {
  if (samples_per_question < 1)
    throw Error("samples per question must be >= 1, got " + std::to_string(samples_per_question));
  if (!(temperature >= 0.0)) throw Error("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("top_p must lie in (0, 1]");
  if (max_output_tokens < 1) throw Error("max output tokens must be >= 1");
  if (max_in_flight < 1) throw Error("max in-flight requests must be >= 1");
  if (retry_limit < 0) throw Error("retry limit must be >= 0");
}

int FrequencyTable::count_for(char label) const {
  const int idx = QuestionRecord::label_index(label);
  if (idx < 0 || idx >= option_count)
    throw UnknownLabel(std::string("'") + label + "' is outside this table's " +
                       std::to_string(option_count) + " options");
  return counts[static_cast<std::size_t>(idx)];
}

void FrequencyTable::validate() const {
  if (option_count < 2 || option_count > 10)
    throw Error("frequency table for '" + question_id + "' has invalid option count " +
                std::to_string(option_count));
  if (static_cast<int>(counts.size()) != option_count)
    throw Error("frequency table for '" + question_id + "' has " +
                std::to_string(counts.size()) + " counts for " + std::to_string(option_count) +
                " options");
  long long sum = invalid_count;
  for (const int c : counts) {
    if (c < 0) throw Error("frequency table for '" + question_id + "' has a negative count");
    sum += c;
  }
  if (invalid_count < 0 || total < 1 || sum != total)
    throw Error("frequency table for '" + question_id + "' does not add up: counts+" +
                std::to_string(invalid_count) + " invalid vs total " + std::to_string(total));
}

std::optional<char> parse_option_token(const std::string& raw, const std::set<char>& valid_labels) {
  const auto is_noise = [](unsigned char c) {
    return std::isspace(c) != 0 || std::ispunct(c) != 0;
  };
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && is_noise(static_cast<unsigned char>(raw[begin]))) ++begin;
  while (end > begin && is_noise(static_cast<unsigned char>(raw[end - 1]))) --end;
  if (end - begin != 1) return std::nullopt;
  const char label = static_cast<char>(std::toupper(static_cast<unsigned char>(raw[begin])));
  if (valid_labels.count(label) == 0) return std::nullopt;
  return label;
}

std::string build_prompt(const QuestionRecord& record) {
  std::string prompt = record.prompt;
  prompt += "\n";
  for (std::size_t i = 0; i < record.options.size(); ++i) {
    prompt += QuestionRecord::label_at(i);
    prompt += ". ";
    prompt += record.options[i];
    prompt += "\n";
  }
  prompt += "Answer with a single letter.";
  return prompt;
}

FrequencyTable sample_responses(const QuestionRecord& record, const SamplingConfig& config,
                                CompletionClient& client) {
  config.validate();
  FrequencyTable table;
  table.question_id = record.id;
  table.option_count = record.option_count();
  table.counts.assign(record.options.size(), 0);
  table.total = config.samples_per_question;

  const std::string prompt = build_prompt(record);
  const std::set<char> valid = record.label_set();
  int collected = 0;
  for (int i = 0; i < config.samples_per_question; ++i) {
    std::string raw;
    try {
      raw = client.complete(config, prompt);
    } catch (const EndpointUnavailable&) {
      if (collected == 0) throw;
      throw PartialSample(collected, config.samples_per_question);
    }
    ++collected;
    if (const auto label = parse_option_token(raw, valid)) {
      ++table.counts[static_cast<std::size_t>(QuestionRecord::label_index(*label))];
    } else {
      ++table.invalid_count;
    }
  }
  table.validate();
  return table;
}

FrequencyTable simulate_responses(const QuestionRecord& record, double accuracy, int samples,
                                  std::uint64_t seed) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw Error("simulated accuracy must lie in [0, 1]");
  if (samples < 1) throw Error("samples must be >= 1");

  FrequencyTable table;
  table.question_id = record.id;
  table.option_count = record.option_count();
  table.counts.assign(record.options.size(), 0);
  table.total = samples;

  std::vector<char> truth_labels(record.truth.begin(), record.truth.end());
  std::vector<char> wrong_labels;
  for (const char label : record.labels())
    if (record.truth.count(label) == 0) wrong_labels.push_back(label);
  if (truth_labels.empty()) throw Error("record '" + record.id + "' has no true answer");

  std::mt19937_64 gen(rng::derive_stream(seed, record.id));
  for (int i = 0; i < samples; ++i) {
    const bool correct = rng::uniform01(gen) < accuracy || wrong_labels.empty();
    const std::vector<char>& pool = correct ? truth_labels : wrong_labels;
    const char pick = pool[static_cast<std::size_t>(rng::below(gen, pool.size()))];
    ++table.counts[static_cast<std::size_t>(QuestionRecord::label_index(pick))];
  }
  table.validate();
  return table;
}

std::string SimulatorSource::model_name() const {
  return "sim-acc" + fmt_double(accuracy) + "-seed" + std::to_string(seed);
}

// ---- cache ------------------------------------------------------------------

namespace {

constexpr const char* kCacheSchema = "freq-table-v1";

std::string checksum_payload(const CacheKey& key, const FrequencyTable& table) {
  std::string payload = key.model + "\n" + key.dataset + "\n" + key.question_id + "\n" +
                        std::to_string(table.option_count) + "\n" + std::to_string(key.samples) +
                        "\n" + fmt_double(key.temperature) + "\n" + fmt_double(key.top_p) + "\n";
  for (const int c : table.counts) payload += std::to_string(c) + ",";
  payload += "\n" + std::to_string(table.invalid_count);
  return payload;
}

std::string checksum_hex(const CacheKey& key, const FrequencyTable& table) {
  const std::uint64_t h = rng::fnv1a64(checksum_payload(key, table));
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace

std::filesystem::path cache_entry_path(const std::filesystem::path& cache_dir,
                                       const CacheKey& key) {
  const std::string file = sanitize_filename_component(key.question_id) + "__p" +
                           std::to_string(key.samples) + "_t" + fmt_double(key.temperature) +
                           "_tp" + fmt_double(key.top_p) + ".json";
  return cache_dir / sanitize_filename_component(key.model) /
         sanitize_filename_component(key.dataset) / file;
}

void write_cache_entry(const std::filesystem::path& cache_dir, const CacheKey& key,
                       const FrequencyTable& table) {
  table.validate();
  const std::filesystem::path path = cache_entry_path(cache_dir, key);
  std::filesystem::create_directories(path.parent_path());

  json doc;
  doc["schema"] = kCacheSchema;
  doc["model"] = key.model;
  doc["dataset"] = key.dataset;
  doc["question_id"] = key.question_id;
  doc["option_count"] = table.option_count;
  doc["samples"] = key.samples;
  doc["temperature"] = key.temperature;
  doc["top_p"] = key.top_p;
  doc["counts"] = table.counts;
  doc["invalid"] = table.invalid_count;
  doc["checksum"] = checksum_hex(key, table);

  // temp file + rename keeps a crash from leaving a torn entry behind
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write cache file " + tmp.string());
    out << doc.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::optional<FrequencyTable> read_cache_entry(const std::filesystem::path& cache_dir,
                                               const CacheKey& key) {
  const std::filesystem::path path = cache_entry_path(cache_dir, key);
  std::ifstream in(path);
  if (!in) return std::nullopt;

  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CacheCorrupt(path.string(), e.what());
  }

  try {
    if (doc.value("schema", "") != kCacheSchema)
      throw CacheCorrupt(path.string(), "unknown schema '" + doc.value("schema", "") + "'");

    // A valid entry written under a different key is a miss (the caller will
    // resample), not corruption.
    if (doc.at("model") != key.model || doc.at("dataset") != key.dataset ||
        doc.at("question_id") != key.question_id || doc.at("samples") != key.samples ||
        doc.at("temperature").get<double>() != key.temperature ||
        doc.at("top_p").get<double>() != key.top_p)
      return std::nullopt;

    FrequencyTable table;
    table.question_id = doc.at("question_id").get<std::string>();
    table.option_count = doc.at("option_count").get<int>();
    table.counts = doc.at("counts").get<std::vector<int>>();
    table.invalid_count = doc.at("invalid").get<int>();
    table.total = doc.at("samples").get<int>();

    if (doc.at("checksum").get<std::string>() != checksum_hex(key, table))
      throw CacheCorrupt(path.string(), "checksum mismatch");
    table.validate();
    return table;
  } catch (const CacheCorrupt&) {
    throw;
  } catch (const std::exception& e) {
    throw CacheCorrupt(path.string(), e.what());
  }
}

namespace {

// Shared cache-first driver. `sample_one` produces a table for a cache miss;
// misses run on up to `workers` threads (the caller passes 1 to stay serial).
std::vector<FrequencyTable> load_or_sample_impl(
    const std::vector<QuestionRecord>& records, const SamplingConfig& config,
    const std::filesystem::path& cache_dir, const std::string& dataset_id,
    const std::string& model_name,
    const std::function<FrequencyTable(const QuestionRecord&)>& sample_one, int workers,
    CacheStats* stats) {
  config.validate();
  std::vector<FrequencyTable> tables(records.size());
  std::vector<std::size_t> misses;
  CacheStats local;
  local.total = static_cast<int>(records.size());

  for (std::size_t i = 0; i < records.size(); ++i) {
    const CacheKey key{model_name, dataset_id, records[i].id, config.samples_per_question,
                       config.temperature, config.top_p};
    if (auto cached = read_cache_entry(cache_dir, key)) {
      tables[i] = std::move(*cached);
      ++local.from_cache;
    } else {
      misses.push_back(i);
    }
  }

  std::mutex mu;
  std::exception_ptr first_error;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  const auto drain = [&]() {
    while (!stop.load()) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= misses.size()) return;
      const std::size_t i = misses[slot];
      try {
        FrequencyTable table = sample_one(records[i]);
        const CacheKey key{model_name, dataset_id, records[i].id, config.samples_per_question,
                           config.temperature, config.top_p};
        write_cache_entry(cache_dir, key, table);
        std::lock_guard<std::mutex> lock(mu);
        local.sampled += 1;
        local.invalid_responses += table.invalid_count;
        tables[i] = std::move(table);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(misses.size())));
  if (n_workers <= 1) {
    drain();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(drain);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  if (stats) *stats = local;
  return tables;
}

}  // namespace

std::vector<FrequencyTable> load_or_sample(const std::vector<QuestionRecord>& records,
                                           const SamplingConfig& config,
                                           const std::filesystem::path& cache_dir,
                                           const std::string& dataset_id, CompletionClient& client,
                                           CacheStats* stats) {
  return load_or_sample_impl(
      records, config, cache_dir, dataset_id, config.model_name,
      [&](const QuestionRecord& rec) { return sample_responses(rec, config, client); },
      config.max_in_flight, stats);
}

std::vector<FrequencyTable> load_or_sample(const std::vector<QuestionRecord>& records,
                                           const SamplingConfig& config,
                                           const std::filesystem::path& cache_dir,
                                           const std::string& dataset_id,
                                           const SimulatorSource& simulator, CacheStats* stats) {
  return load_or_sample_impl(
      records, config, cache_dir, dataset_id, simulator.model_name(),
      [&](const QuestionRecord& rec) {
        return simulate_responses(rec, simulator.accuracy, config.samples_per_question,
                                  simulator.seed);
      },
      /*workers=*/1, stats);
}

std::vector<FrequencyTable> load_cached_tables(const std::vector<QuestionRecord>& records,
                                               const SamplingConfig& config,
                                               const std::filesystem::path& cache_dir,
                                               const std::string& dataset_id) {
  config.validate();
  std::vector<FrequencyTable> tables(records.size());
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CacheKey key{config.model_name, dataset_id, records[i].id, config.samples_per_question,
                       config.temperature, config.top_p};
    if (auto cached = read_cache_entry(cache_dir, key)) {
      tables[i] = std::move(*cached);
    } else {
      missing.push_back(cache_entry_path(cache_dir, key).string());
    }
  }
  if (!missing.empty()) throw MissingCacheEntries(std::move(missing));
  return tables;
}

}  // namespace cpmcqa
