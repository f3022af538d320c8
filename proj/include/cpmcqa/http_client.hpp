#pragma once

#include <string>

#include "cpmcqa/sampler.hpp"

namespace cpmcqa {

// Chat-completion client for an OpenAI-style endpoint. Sends one user message
// per call and returns the first choice's content verbatim (the sampler layer
// decides whether that text names an option). Transport failures and 5xx/429
// responses are retried with exponential backoff up to config.retry_limit;
// anything still failing raises EndpointUnavailable. A 200 whose body does not
// carry the expected fields yields an empty string, which downstream counts as
// an invalid response.
class HttpCompletionClient : public CompletionClient {
 public:
  // `endpoint_url` is the full URL, e.g. "http://127.0.0.1:8080/v1/chat/completions"
  // (path defaults to /v1/chat/completions when omitted). The bearer token is
  // read from CONFORMAL_MCQA_API_KEY unless given explicitly; an empty token
  // sends no Authorization header.
  explicit HttpCompletionClient(const std::string& endpoint_url);
  HttpCompletionClient(const std::string& endpoint_url, std::string api_key);

  std::string complete(const SamplingConfig& config, const std::string& prompt) override;

  static std::string api_key_from_env();

 private:
  std::string origin_;  // scheme://host:port
  std::string path_;
  std::string api_key_;
};

}  // namespace cpmcqa
