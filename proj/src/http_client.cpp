#include "cpmcqa/http_client.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cpmcqa/errors.hpp"

namespace cpmcqa {

using nlohmann::json;

namespace {

constexpr const char* kDefaultPath = "/v1/chat/completions";

struct ParsedUrl {
  std::string origin;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error("endpoint URL must start with http:// or https://, got '" + url + "'");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw Error("unsupported endpoint scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, kDefaultPath};
  const std::string path = url.substr(path_start);
  return {url.substr(0, path_start), path == "/" ? kDefaultPath : path};
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

std::string HttpCompletionClient::api_key_from_env() {
  const char* key = std::getenv("CONFORMAL_MCQA_API_KEY");
  return key ? key : "";
}

HttpCompletionClient::HttpCompletionClient(const std::string& endpoint_url)
    : HttpCompletionClient(endpoint_url, api_key_from_env()) {}

HttpCompletionClient::HttpCompletionClient(const std::string& endpoint_url, std::string api_key)
    : api_key_(std::move(api_key)) {
  const ParsedUrl parsed = parse_url(endpoint_url);
  origin_ = parsed.origin;
  path_ = parsed.path;
}

std::string HttpCompletionClient::complete(const SamplingConfig& config,
                                           const std::string& prompt) {
  json body;
  body["model"] = config.model_name;
  body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = config.temperature;
  body["top_p"] = config.top_p;
  body["max_tokens"] = config.max_output_tokens;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_failure = "no attempt made";
  const int attempts = config.retry_limit + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const auto backoff = std::chrono::milliseconds(50LL << std::min(attempt - 1, 5));
      std::this_thread::sleep_for(backoff);
    }

    // One client per call: connections are cheap against a local/session-bound
    // endpoint and the sampler may run several calls concurrently.
    httplib::Client client(origin_);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);

    const httplib::Result result = client.Post(path_, headers, payload, "application/json");
    if (!result) {
      last_failure = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status == 200) {
      // A 200 with an unexpected body is not retried; the empty string it
      // yields is counted as an invalid response upstream.
      const json doc = json::parse(result->body, nullptr, /*allow_exceptions=*/false);
      if (doc.is_discarded() || !doc.is_object()) return "";
      const auto choices = doc.find("choices");
      if (choices == doc.end() || !choices->is_array() || choices->empty()) return "";
      const json& first = (*choices)[0];
      if (!first.is_object()) return "";
      const auto message = first.find("message");
      if (message == first.end() || !message->is_object()) return "";
      const auto content = message->find("content");
      if (content == message->end() || !content->is_string()) return "";
      return content->get<std::string>();
    }
    if (retryable_status(result->status)) {
      last_failure = "HTTP " + std::to_string(result->status);
      continue;
    }
    throw EndpointUnavailable(origin_ + path_ + " answered HTTP " +
                              std::to_string(result->status));
  }
  throw EndpointUnavailable(origin_ + path_ + " after " + std::to_string(attempts) +
                            " attempt(s): " + last_failure);
}

}  // namespace cpmcqa
