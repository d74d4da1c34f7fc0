#include "detoxr/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <random>
#include <thread>

#include "httplib.h"

#include "detoxr/errors.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

using json = nlohmann::json;

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

// "http://host:port/v1" -> ("http://host:port", "/v1")
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("base_url must include a scheme: '" + url + "'");
  auto slash = url.find('/', scheme + 3);
  std::string host = slash == std::string::npos ? url : url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? std::string() : url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {host, prefix};
}

struct Slot {
  explicit Slot(std::mutex& mu, std::condition_variable& cv, int& active, int& peak, int limit)
      : mu_(mu), cv_(cv), active_(active) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit; });
    ++active_;
    peak = std::max(peak, active_);
  }
  ~Slot() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  std::mutex& mu_;
  std::condition_variable& cv_;
  int& active_;
};

}  // namespace

void GatewayConfig::validate() const {
  if (base_url.empty()) throw ConfigError(std::string("LLM base URL is not set (") + kEnvBaseUrl + ")");
  if (model_name.empty()) throw ConfigError(std::string("LLM model name is not set (") + kEnvModel + ")");
  if (max_completion_tokens <= 0) throw ConfigError("max_completion_tokens must be positive");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
  if (n_samples < 1) throw ConfigError("n_samples must be at least 1");
  if (request_timeout.count() <= 0) throw ConfigError("request_timeout must be positive");
}

GatewayConfig GatewayConfig::from_environment(GatewayConfig base) {
  if (base.base_url.empty()) base.base_url = env_or_empty(kEnvBaseUrl);
  if (base.model_name.empty()) base.model_name = env_or_empty(kEnvModel);
  base.api_key = env_or_empty(kEnvApiKey);
  return base;
}

GatewayConfig GatewayConfig::from_environment() { return from_environment(GatewayConfig{}); }

GatewayConfig GatewayConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("gateway config must be a JSON object");
  if (doc.contains("api_key")) {
    throw ConfigError(std::string("api_key must not appear in config files; set ") + kEnvApiKey);
  }
  GatewayConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "base_url") c.base_url = value.get<std::string>();
    else if (key == "model") c.model_name = value.get<std::string>();
    else if (key == "temperature") c.temperature = value.get<double>();
    else if (key == "group_temperature") c.group_temperature = value.get<double>();
    else if (key == "max_completion_tokens") c.max_completion_tokens = value.get<int>();
    else if (key == "n_samples") c.n_samples = value.get<int>();
    else if (key == "request_timeout_ms") c.request_timeout = std::chrono::milliseconds(value.get<long>());
    else if (key == "max_retries") c.max_retries = value.get<int>();
    else if (key == "max_in_flight") c.max_in_flight = value.get<int>();
    else if (key == "backoff_base_ms") c.backoff_base = std::chrono::milliseconds(value.get<long>());
    else if (key == "backoff_cap_ms") c.backoff_cap = std::chrono::milliseconds(value.get<long>());
    else if (key == "use_n_parameter") c.use_n_parameter = value.get<bool>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown gateway config field '" + key + "'");
  }
  return c;
}

json build_request_body(const RenderedPrompt& prompt, const GatewayConfig& config, int n, double temperature,
                        std::optional<std::uint64_t> seed) {
  json body;
  body["model"] = config.model_name;
  body["messages"] = json::array({
      {{"role", "system"}, {"content", prompt.system}},
      {{"role", "user"}, {"content", prompt.text}},
  });
  body["temperature"] = temperature;
  body["max_tokens"] = config.max_completion_tokens;
  body["n"] = n;
  if (seed) body["seed"] = *seed;
  return body;
}

std::vector<std::chrono::milliseconds> backoff_schedule(const GatewayConfig& config, int retries,
                                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 0.5);
  std::vector<std::chrono::milliseconds> out;
  double prev = 0.0;
  for (int i = 0; i < retries; ++i) {
    double base = std::min(static_cast<double>(config.backoff_cap.count()),
                           static_cast<double>(config.backoff_base.count()) * std::ldexp(1.0, i));
    double delay = std::max(prev, base * (1.0 + jitter(rng)));
    prev = delay;
    out.emplace_back(static_cast<long>(std::llround(delay)));
  }
  return out;
}

LlmGateway::LlmGateway(GatewayConfig config) : config_(std::move(config)), limiter_(std::make_shared<Limiter>()) {
  config_.validate();
  std::tie(host_, path_prefix_) = split_base_url(config_.base_url);
}

int LlmGateway::peak_in_flight() const {
  std::lock_guard lock(limiter_->mu);
  return limiter_->peak;
}

std::vector<CompletionResult> LlmGateway::send(const json& body, std::size_t expected) const {
  const std::string payload = body.dump();
  std::uint64_t request_no = 0;
  {
    std::lock_guard lock(limiter_->mu);
    request_no = limiter_->request_counter++;
  }
  const auto delays = backoff_schedule(config_, config_.max_retries, derive_seed(config_.seed, request_no));

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
    auto started = std::chrono::steady_clock::now();
    httplib::Result res;
    {
      Slot slot(limiter_->mu, limiter_->cv, limiter_->active, limiter_->peak, config_.max_in_flight);
      httplib::Client client(host_);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      res = client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
    }
    auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status < 200 || res->status >= 300) {
      throw ContractError("endpoint rejected request (HTTP " + std::to_string(res->status) + "): " + res->body);
    } else {
      json doc = json::parse(res->body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array()) {
        throw ContractError("response has no choices array");
      }
      std::vector<CompletionResult> out;
      for (const auto& choice : doc["choices"]) {
        const json* content = nullptr;
        if (choice.contains("message") && choice["message"].is_object()) {
          auto it = choice["message"].find("content");
          if (it != choice["message"].end() && it->is_string()) content = &*it;
        }
        if (!content) throw ContractError("response choice is missing message.content");
        CompletionResult r;
        r.text = content->get<std::string>();
        r.finish_reason = choice.contains("finish_reason") && choice["finish_reason"].is_string()
                              ? choice["finish_reason"].get<std::string>()
                              : "stop";
        r.latency = latency;
        r.attempts = attempt;
        if (doc.contains("usage") && doc["usage"].is_object()) {
          r.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
          r.completion_tokens = doc["usage"].value("completion_tokens", 0);
        }
        out.push_back(std::move(r));
      }
      if (out.empty() || (expected > 0 && out.size() > expected)) {
        throw ContractError("response carries " + std::to_string(out.size()) + " choices");
      }
      return out;
    }
    if (attempt <= config_.max_retries) std::this_thread::sleep_for(delays[static_cast<std::size_t>(attempt - 1)]);
  }
  throw TransportError("request failed after " + std::to_string(config_.max_retries + 1) +
                       " attempts: " + last_error);
}

CompletionResult LlmGateway::complete(const RenderedPrompt& prompt) const {
  return send(build_request_body(prompt, config_, 1, config_.temperature), 1).front();
}

std::vector<SampleOutcome> LlmGateway::complete_group(const RenderedPrompt& prompt, int group_size) const {
  if (group_size < 1) throw GroupSizeError("group size must be at least 1");
  if (group_size == 1) return {SampleOutcome{complete(prompt), {}}};

  std::vector<SampleOutcome> out(static_cast<std::size_t>(group_size));
  std::size_t filled = 0;
  if (config_.use_n_parameter) {
    try {
      auto results = send(build_request_body(prompt, config_, group_size, config_.group_temperature),
                          static_cast<std::size_t>(group_size));
      for (auto& r : results) out[filled++].result = std::move(r);
    } catch (const AuthError&) {
      throw;
    } catch (const GatewayError& e) {
      for (auto& o : out) o.error = e.what();
      throw TransportError(std::string("all group samples failed: ") + e.what());
    }
    if (filled == out.size()) return out;
  }

  // One request per remaining sample; the seed field keeps them distinct.
  std::vector<std::exception_ptr> errors(out.size());
  std::vector<std::thread> threads;
  for (std::size_t i = filled; i < out.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        out[i].result = send(build_request_body(prompt, config_, 1, config_.group_temperature, config_.seed + i), 1)
                            .front();
      } catch (const std::exception& e) {
        out[i].error = e.what();
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();

  bool any_ok = false;
  for (const auto& o : out) any_ok = any_ok || o.result.has_value();
  if (!any_ok) {
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

bool LlmGateway::ping() const {
  httplib::Client client(host_);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Get(path_prefix_ + "/models", headers);
  return res && res->status < 500;
}

CompletionResult complete(const RenderedPrompt& prompt, const GatewayConfig& config) {
  return LlmGateway(config).complete(prompt);
}

std::vector<SampleOutcome> complete_group(const RenderedPrompt& prompt, int group_size, const GatewayConfig& config) {
  return LlmGateway(config).complete_group(prompt, group_size);
}

}  // namespace detoxr
