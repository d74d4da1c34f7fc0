#include "doctest.h"

#include <cstdlib>
#include <set>

#include "detoxr/errors.hpp"
#include "detoxr/gateway.hpp"
#include "fixtures.hpp"
#include "mock_llm.hpp"

using namespace detoxr;

namespace {

GatewayConfig mock_config(const mock::MockLlm& llm) {
  GatewayConfig g;
  g.base_url = llm.base_url();
  g.model_name = "mock-model";
  g.backoff_base = std::chrono::milliseconds(1);
  g.backoff_cap = std::chrono::milliseconds(4);
  g.request_timeout = std::chrono::milliseconds(5000);
  return g;
}

RenderedPrompt prompt() { return prepare_prompt(fixtures::sample_case()); }

}  // namespace

TEST_CASE("request body carries both messages verbatim") {
  GatewayConfig g;
  g.model_name = "m";
  auto p = prompt();
  auto body = build_request_body(p, g, 3, 0.7, 42);
  CHECK(body["model"] == "m");
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][0]["content"] == p.system);
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == p.text);
  CHECK(body["n"] == 3);
  CHECK(body["max_tokens"] == 2304);
  CHECK(body["seed"] == 42);
}

TEST_CASE("backoff schedule") {
  GatewayConfig g;
  g.backoff_base = std::chrono::milliseconds(100);
  g.backoff_cap = std::chrono::milliseconds(1000);
  auto s = backoff_schedule(g, 8, 3);
  REQUIRE(s.size() == 8);
  CHECK(s[0].count() >= 100);
  CHECK(s[0].count() < 150);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] >= s[i - 1]);
  CHECK(s.back().count() < 1500);
}

TEST_CASE("config loading") {
  auto g = GatewayConfig::from_json({{"base_url", "http://x/v1"}, {"model", "m"}, {"max_in_flight", 2}});
  CHECK(g.base_url == "http://x/v1");
  CHECK(g.model_name == "m");
  CHECK(g.max_in_flight == 2);
  CHECK_THROWS_AS(GatewayConfig::from_json({{"api_key", "secret"}}), ConfigError);
  CHECK_THROWS_AS(GatewayConfig::from_json({{"bogus", 1}}), ConfigError);

  setenv(kEnvBaseUrl, "http://env/v1", 1);
  setenv(kEnvModel, "env-model", 1);
  setenv(kEnvApiKey, "k", 1);
  auto e = GatewayConfig::from_environment();
  CHECK(e.base_url == "http://env/v1");
  CHECK(e.api_key == "k");
  auto kept = GatewayConfig::from_environment(g);
  CHECK(kept.base_url == "http://x/v1");
  CHECK(kept.api_key == "k");
  unsetenv(kEnvBaseUrl);
  unsetenv(kEnvModel);
  unsetenv(kEnvApiKey);

  GatewayConfig bad;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("single completion") {
  mock::Behaviour b;
  b.respond = mock::constant("hello");
  b.required_bearer = "tok";
  mock::MockLlm llm(b);
  auto g = mock_config(llm);
  g.api_key = "tok";
  auto r = LlmGateway(g).complete(prompt());
  CHECK(r.text == "hello");
  CHECK(r.attempts == 1);
  CHECK(llm.last_request()["messages"][1]["content"] == prompt().text);
  CHECK(llm.last_request()["temperature"] == 0.0);

  g.api_key = "wrong";
  CHECK_THROWS_AS(LlmGateway(g).complete(prompt()), AuthError);
}

TEST_CASE("retries on server errors then succeeds") {
  mock::Behaviour b;
  b.respond = mock::constant("ok");
  b.fail_first = 2;
  b.fail_status = 503;
  mock::MockLlm llm(b);
  auto r = LlmGateway(mock_config(llm)).complete(prompt());
  CHECK(r.text == "ok");
  CHECK(r.attempts == 3);
  CHECK(llm.requests() == 3);
}

TEST_CASE("rate limiting is retried") {
  mock::Behaviour b;
  b.respond = mock::constant("ok");
  b.fail_first = 1;
  b.fail_status = 429;
  mock::MockLlm llm(b);
  CHECK(LlmGateway(mock_config(llm)).complete(prompt()).attempts == 2);
}

TEST_CASE("retries are bounded") {
  mock::Behaviour b;
  b.respond = mock::constant("ok");
  b.always_status = 502;
  mock::MockLlm llm(b);
  auto g = mock_config(llm);
  g.max_retries = 2;
  CHECK_THROWS_AS(LlmGateway(g).complete(prompt()), TransportError);
  CHECK(llm.requests() == 3);
}

TEST_CASE("contract violations") {
  SUBCASE("client error") {
    mock::Behaviour b;
    b.respond = mock::constant("ok");
    b.always_status = 400;
    mock::MockLlm llm(b);
    CHECK_THROWS_AS(LlmGateway(mock_config(llm)).complete(prompt()), ContractError);
    CHECK(llm.requests() == 1);
  }
  SUBCASE("missing content") {
    mock::Behaviour b;
    b.respond = mock::constant("ok");
    b.drop_content = true;
    mock::MockLlm llm(b);
    CHECK_THROWS_AS(LlmGateway(mock_config(llm)).complete(prompt()), ContractError);
  }
  SUBCASE("unreachable endpoint") {
    GatewayConfig g;
    g.base_url = "http://127.0.0.1:1/v1";
    g.model_name = "m";
    g.max_retries = 1;
    g.backoff_base = std::chrono::milliseconds(1);
    g.request_timeout = std::chrono::milliseconds(500);
    CHECK_THROWS_AS(LlmGateway(g).complete(prompt()), TransportError);
    CHECK_FALSE(LlmGateway(g).ping());
  }
}

TEST_CASE("group sampling") {
  std::atomic<int> counter{0};
  mock::Behaviour b;
  b.respond = [&](const nlohmann::json&, int index) { return "sample-" + std::to_string(index) + "-" + std::to_string(counter++); };

  SUBCASE("one request with n") {
    mock::MockLlm llm(b);
    auto out = LlmGateway(mock_config(llm)).complete_group(prompt(), 4);
    CHECK(out.size() == 4);
    CHECK(llm.requests() == 1);
    CHECK(llm.last_request()["n"] == 4);
    CHECK(llm.last_request()["temperature"] == 0.7);
    for (const auto& o : out) CHECK(o.result.has_value());
  }
  SUBCASE("server ignores n") {
    b.honour_n = false;
    mock::MockLlm llm(b);
    auto out = LlmGateway(mock_config(llm)).complete_group(prompt(), 3);
    CHECK(out.size() == 3);
    std::set<std::string> texts;
    for (const auto& o : out) texts.insert(o.result->text);
    CHECK(texts.size() == 3);
    CHECK(llm.requests() == 3);
  }
  SUBCASE("one request per sample") {
    mock::MockLlm llm(b);
    auto g = mock_config(llm);
    g.use_n_parameter = false;
    auto out = LlmGateway(g).complete_group(prompt(), 3);
    CHECK(out.size() == 3);
    CHECK(llm.requests() == 3);
  }
}

TEST_CASE("concurrency limit") {
  mock::Behaviour b;
  b.respond = mock::constant("ok");
  b.delay = std::chrono::milliseconds(30);
  mock::MockLlm llm(b);
  auto g = mock_config(llm);
  g.max_in_flight = 2;
  LlmGateway gw(g);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { gw.complete(prompt()); });
  for (auto& t : threads) t.join();
  CHECK(gw.peak_in_flight() <= 2);
  CHECK(llm.peak_concurrency() <= 2);
  CHECK(llm.requests() == 8);
  CHECK(gw.ping());
}
