#pragma once

// Chat-completions client backend. Sends one user message per report and keeps the reply
// text verbatim; parsing is left to the output normalizer.

#include "burex/backends.hpp"
#include "burex/output_normalizer.hpp"
#include "burex/prompt_builder.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>

namespace burex {

struct RetryPolicy
{
  int max_attempts = 3;
  double initial_backoff_seconds = 0.5;
  double backoff_multiplier = 2.0;
};

struct LlmEndpointConfig
{
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name;
  /// Environment variable holding the API key. Empty means no authorization header.
  std::string api_key_env = "BUREX_API_KEY";
  double temperature = 0.0;
  int max_output_tokens = 2048;
  double request_timeout_seconds = 120.0;
  std::size_t max_concurrent_requests = 1;
  RetryPolicy retry;
  NormalizeOptions normalize;

  void validate() const
  {
    if (max_concurrent_requests < 1) throw std::invalid_argument("max_concurrent_requests must be at least 1");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be non-negative");
    if (retry.max_attempts < 1) throw std::invalid_argument("retry attempts must be at least 1");
    if (max_output_tokens < 1) throw std::invalid_argument("max_output_tokens must be positive");
    if (base_url.find("://") == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + base_url);
  }
};

enum class LlmErrorKind { transport, auth_failure, rate_limited, malformed_reply };

inline std::string_view to_string(LlmErrorKind k) noexcept
{
  switch (k) {
    case LlmErrorKind::transport: return "transport";
    case LlmErrorKind::auth_failure: return "auth_failure";
    case LlmErrorKind::rate_limited: return "rate_limited";
    case LlmErrorKind::malformed_reply: return "malformed_reply";
  }
  return "?";
}

class LlmError : public std::runtime_error
{
public:
  LlmError(LlmErrorKind kind, int attempts, const std::string& message)
  : std::runtime_error(std::string(to_string(kind)) + " after " + std::to_string(attempts) + " attempt(s): " + message)
  , kind_(kind)
  , attempts_(attempts)
  {}

  [[nodiscard]] LlmErrorKind kind() const noexcept { return kind_; }
  [[nodiscard]] int attempts() const noexcept { return attempts_; }

private:
  LlmErrorKind kind_;
  int attempts_;
};

namespace detail::llm {

struct Endpoint
{
  std::string origin;  // scheme://host[:port]
  std::string path;    // request path for chat completions
};

inline Endpoint split_url(std::string_view base_url)
{
  const auto scheme_end = base_url.find("://");
  const auto path_begin = base_url.find('/', scheme_end == std::string_view::npos ? 0 : scheme_end + 3);
  Endpoint e;
  e.origin = std::string(base_url.substr(0, path_begin));
  std::string prefix = path_begin == std::string_view::npos ? std::string() : std::string(base_url.substr(path_begin));
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

inline std::string request_body(const LlmEndpointConfig& config, std::string_view prompt)
{
  Json body = Json::object();
  body["model"] = config.model_name;
  body["messages"] = Json::array({Json{{"role", "user"}, {"content", std::string(prompt)}}});
  body["temperature"] = config.temperature;
  body["max_tokens"] = config.max_output_tokens;
  return body.dump();
}

inline std::string reply_text(const std::string& body, int attempts)
{
  const Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded()) throw LlmError(LlmErrorKind::malformed_reply, attempts, "reply body is not JSON");
  const Json* content = nullptr;
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const Json& choice = j["choices"][0];
    if (choice.contains("message") && choice["message"].is_object() && choice["message"].contains("content"))
      content = &choice["message"]["content"];
  }
  if (content == nullptr || !content->is_string())
    throw LlmError(LlmErrorKind::malformed_reply, attempts, "reply has no text in choices[0].message.content");
  return content->get<std::string>();
}

}  // namespace detail::llm

/// Sends `prompt` and returns the verbatim reply with its parse. Throws LlmError once
/// retries are exhausted or on an authorization failure.
inline ExtractionOutput extract_llm(const LlmEndpointConfig& config, std::string_view prompt, std::string report_id)
{
  config.validate();
  std::string api_key;
  if (!config.api_key_env.empty()) {
    const char* value = std::getenv(config.api_key_env.c_str());
    if (value == nullptr) throw LlmError(LlmErrorKind::auth_failure, 0, "environment variable " + config.api_key_env + " is not set");
    api_key = value;
  }

  const auto endpoint = detail::llm::split_url(config.base_url);
  httplib::Client client(endpoint.origin);
  if (!client.is_valid()) throw LlmError(LlmErrorKind::transport, 0, "unsupported endpoint " + config.base_url);
  const auto timeout = std::chrono::duration<double>(config.request_timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string body = detail::llm::request_body(config, prompt);

  const auto start = std::chrono::steady_clock::now();
  double backoff = config.retry.initial_backoff_seconds;
  LlmErrorKind last_kind = LlmErrorKind::transport;
  std::string last_message;
  for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= config.retry.backoff_multiplier;
    }
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      last_kind = LlmErrorKind::transport;
      last_message = httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) throw LlmError(LlmErrorKind::auth_failure, attempt, "HTTP " + std::to_string(status));
    if (status == 429) {
      last_kind = LlmErrorKind::rate_limited;
      last_message = "HTTP 429";
      continue;
    }
    if (status >= 500) {
      last_kind = LlmErrorKind::transport;
      last_message = "HTTP " + std::to_string(status);
      continue;
    }
    if (status != 200) throw LlmError(LlmErrorKind::transport, attempt, "HTTP " + std::to_string(status));

    std::string reply = detail::llm::reply_text(res->body, attempt);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return make_output(std::move(report_id), std::move(reply), "llm:" + config.model_name, elapsed.count(),
                       config.normalize);
  }
  throw LlmError(last_kind, config.retry.max_attempts, last_message);
}

/// Prompts each report with `make_prompt` (by default the zero-shot fine-tuning
/// instruction) and queries the endpoint.
class LlmBackend final : public ExtractionBackend
{
public:
  using PromptFn = std::function<std::string(const ReportDocument&)>;

  explicit LlmBackend(LlmEndpointConfig config, PromptFn make_prompt = {})
  : config_(std::move(config)), make_prompt_(std::move(make_prompt))
  {
    config_.validate();
    if (!make_prompt_) make_prompt_ = [](const ReportDocument& r) { return build_finetune_instruction(r); };
  }

  [[nodiscard]] std::string name() const override { return "llm:" + config_.model_name; }

  [[nodiscard]] ExtractionOutput extract(const ReportDocument& report) const override
  {
    return extract_llm(config_, make_prompt_(report), report.id);
  }

  [[nodiscard]] std::size_t max_concurrency() const override { return config_.max_concurrent_requests; }

private:
  LlmEndpointConfig config_;
  PromptFn make_prompt_;
};

}  // namespace burex
