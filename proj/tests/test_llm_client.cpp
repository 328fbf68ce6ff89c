#include "test_support.hpp"

#include "burex/llm_client.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <thread>

using namespace burex;
using namespace testing_support;

namespace {

/// Minimal chat-completions server. `reply` decides the status and message content.
class StubServer
{
public:
  using Reply = std::function<std::pair<int, std::string>(const Json& request, int call)>;

  explicit StubServer(Reply reply)
  : reply_(std::move(reply))
  {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int call = ++calls_;
      const int now = ++in_flight_;
      int seen = peak_.load();
      while (now > seen && !peak_.compare_exchange_weak(seen, now)) {}
      {
        std::lock_guard lock(mu_);
        last_auth_ = req.get_header_value("Authorization");
        last_body_ = req.body;
      }
      const Json request = Json::parse(req.body, nullptr, false);
      auto [status, content] = reply_(request, call);
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --in_flight_;
      res.status = status;
      if (status == 200) {
        if (content.starts_with("RAW:")) {
          res.set_content(content.substr(4), "application/json");
        }
        else {
          Json body = {{"choices", Json::array({Json{{"message", Json{{"role", "assistant"}, {"content", content}}}}})}};
          res.set_content(body.dump(), "application/json");
        }
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer()
  {
    server_.stop();
    thread_.join();
  }

  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  [[nodiscard]] int calls() const { return calls_.load(); }
  [[nodiscard]] int peak() const { return peak_.load(); }
  [[nodiscard]] std::string last_auth() const
  {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  [[nodiscard]] std::string last_body() const
  {
    std::lock_guard lock(mu_);
    return last_body_;
  }

private:
  Reply reply_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  mutable std::mutex mu_;
  std::string last_auth_;
  std::string last_body_;
};

LlmEndpointConfig config_for(const std::string& url)
{
  LlmEndpointConfig c;
  c.base_url = url;
  c.model_name = "stub-model";
  c.api_key_env = "";
  c.request_timeout_seconds = 5;
  c.retry.initial_backoff_seconds = 0.01;
  return c;
}

std::string expect_error(const LlmEndpointConfig& c, LlmErrorKind kind, int attempts)
{
  try {
    (void)extract_llm(c, "prompt", "r");
  }
  catch (const LlmError& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
    EXPECT_EQ(e.attempts(), attempts) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "expected LlmError";
  return "";
}

}  // namespace

TEST(LlmClient, WorkedExampleReplyParsed)
{
  const std::string reply = read_fixture("worked_example_output.txt");
  StubServer server([&](const Json&, int) { return std::pair{200, "```json\n" + reply + "\n```"}; });
  const auto out = extract_llm(config_for(server.url()), "prompt", "worked");
  EXPECT_EQ(out.report_id, "worked");
  EXPECT_EQ(out.backend_name, "llm:stub-model");
  ASSERT_TRUE(out.parsed.has_value());
  EXPECT_EQ(*out.parsed, *parse_model_output(reply).records);
  EXPECT_EQ(out.raw_text, "```json\n" + reply + "\n```");
}

TEST(LlmClient, RefusalKeptVerbatimAndUnparsed)
{
  StubServer server([](const Json&, int) { return std::pair{200, std::string("I cannot help")}; });
  const auto out = extract_llm(config_for(server.url()), "prompt", "r");
  EXPECT_FALSE(out.parsed.has_value());
  EXPECT_EQ(out.raw_text, "I cannot help");
  EXPECT_FALSE(out.error.has_value());
}

TEST(LlmClient, RequestShapeAndBearerHeader)
{
  StubServer server([](const Json&, int) { return std::pair{200, std::string("[]")}; });
  auto c = config_for(server.url());
  c.api_key_env = "BUREX_TEST_KEY";
  ::setenv("BUREX_TEST_KEY", "sekret", 1);
  (void)extract_llm(c, "hello prompt", "r");
  ::unsetenv("BUREX_TEST_KEY");
  EXPECT_EQ(server.last_auth(), "Bearer sekret");
  const Json body = Json::parse(server.last_body());
  EXPECT_EQ(body["model"], "stub-model");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 2048);
  ASSERT_EQ(body["messages"].size(), 1u);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "hello prompt");
}

TEST(LlmClient, MissingApiKeyIsAuthFailureWithoutRequest)
{
  StubServer server([](const Json&, int) { return std::pair{200, std::string("[]")}; });
  auto c = config_for(server.url());
  c.api_key_env = "BUREX_SURELY_UNSET_KEY";
  ::unsetenv("BUREX_SURELY_UNSET_KEY");
  expect_error(c, LlmErrorKind::auth_failure, 0);
  EXPECT_EQ(server.calls(), 0);
}

TEST(LlmClient, UnauthorizedIsNotRetried)
{
  StubServer server([](const Json&, int) { return std::pair{401, std::string()}; });
  expect_error(config_for(server.url()), LlmErrorKind::auth_failure, 1);
  EXPECT_EQ(server.calls(), 1);
}

TEST(LlmClient, RateLimitRetriedThenSucceeds)
{
  StubServer server([](const Json&, int call) { return call == 1 ? std::pair{429, std::string()} : std::pair{200, std::string("[]")}; });
  const auto out = extract_llm(config_for(server.url()), "p", "r");
  EXPECT_TRUE(out.parsed.has_value());
  EXPECT_EQ(server.calls(), 2);
}

TEST(LlmClient, RateLimitExhausted)
{
  StubServer server([](const Json&, int) { return std::pair{429, std::string()}; });
  expect_error(config_for(server.url()), LlmErrorKind::rate_limited, 3);
  EXPECT_EQ(server.calls(), 3);
}

TEST(LlmClient, ServerErrorsAreTransport)
{
  StubServer server([](const Json&, int) { return std::pair{503, std::string()}; });
  auto c = config_for(server.url());
  c.retry.max_attempts = 2;
  expect_error(c, LlmErrorKind::transport, 2);
}

TEST(LlmClient, UnreachableEndpointIsTransport)
{
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto c = config_for("http://127.0.0.1:" + std::to_string(port) + "/v1");
  c.retry.max_attempts = 2;
  const auto msg = expect_error(c, LlmErrorKind::transport, 2);
  EXPECT_NE(msg.find("transport"), std::string::npos);
}

TEST(LlmClient, MalformedReplyBody)
{
  StubServer server([](const Json&, int call) {
    return std::pair{200, std::string(call == 1 ? "RAW:not json" : "RAW:{\"choices\": []}")};
  });
  expect_error(config_for(server.url()), LlmErrorKind::malformed_reply, 1);
  expect_error(config_for(server.url()), LlmErrorKind::malformed_reply, 1);
}

TEST(LlmClient, UrlSplitting)
{
  const auto a = detail::llm::split_url("https://api.example.com/v1/");
  EXPECT_EQ(a.origin, "https://api.example.com");
  EXPECT_EQ(a.path, "/v1/chat/completions");
  const auto b = detail::llm::split_url("http://localhost:8000");
  EXPECT_EQ(b.origin, "http://localhost:8000");
  EXPECT_EQ(b.path, "/chat/completions");
  LlmEndpointConfig bad;
  bad.base_url = "localhost";
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(LlmBackendBatch, FailuresIsolatedAndConcurrencyBounded)
{
  StubServer server([](const Json& req, int) {
    const std::string prompt = req["messages"][0]["content"].get<std::string>();
    if (prompt.find("FAILME") != std::string::npos) return std::pair{401, std::string()};
    return std::pair{200, std::string("[{\"type\": \"cyst\"}]")};
  });
  auto c = config_for(server.url());
  c.max_concurrent_requests = 3;
  const LlmBackend backend(c);
  std::vector<ReportDocument> reports;
  for (int i = 0; i < 12; ++i) {
    ReportDocument d;
    d.id = "r" + std::to_string(i);
    d.observation = i == 5 ? "FAILME" : "Left 2:00 cyst.";
    reports.push_back(d);
  }
  const auto out = extract_batch(backend, reports);
  ASSERT_EQ(out.size(), 12u);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(out[i].report_id, "r" + std::to_string(i));
    if (i == 5) {
      EXPECT_FALSE(out[i].parsed.has_value());
      ASSERT_TRUE(out[i].error.has_value());
      EXPECT_NE(out[i].error->find("auth_failure"), std::string::npos);
    }
    else {
      ASSERT_TRUE(out[i].parsed.has_value());
      EXPECT_EQ((*out[i].parsed)[0][AttributeKey::lesion_type], "cyst");
    }
  }
  EXPECT_LE(server.peak(), 3);
  // The default prompt is the shared fine-tuning instruction.
  EXPECT_TRUE(Json::parse(server.last_body())["messages"][0]["content"].get<std::string>().starts_with(kFinetuneInstruction));
}
