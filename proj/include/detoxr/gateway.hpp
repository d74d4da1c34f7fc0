#ifndef DETOXR_GATEWAY_HPP
#define DETOXR_GATEWAY_HPP

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "detoxr/fusion.hpp"

namespace detoxr {

inline constexpr const char* kEnvBaseUrl = "DETOXR_LLM_BASE_URL";
inline constexpr const char* kEnvApiKey = "DETOXR_LLM_API_KEY";
inline constexpr const char* kEnvModel = "DETOXR_LLM_MODEL";

struct GatewayConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string api_key;   // environment only
  std::string model_name;
  double temperature = 0.0;        // single-shot evaluation
  double group_temperature = 0.7;  // group sampling
  int max_completion_tokens = 2304;
  int n_samples = 1;
  std::chrono::milliseconds request_timeout{120000};
  int max_retries = 3;
  int max_in_flight = 4;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{20000};
  // Request all group samples in one call via the "n" field; otherwise one
  // request per sample with a distinct seed.
  bool use_n_parameter = true;
  std::uint64_t seed = 0;

  void validate() const;

  // Fills base_url, model_name and api_key from the DETOXR_LLM_* variables.
  // File/flag values for base_url and model take precedence.
  static GatewayConfig from_environment(GatewayConfig base);
  static GatewayConfig from_environment();
  // JSON config file. An "api_key" entry is rejected.
  static GatewayConfig from_json(const nlohmann::json& doc);
};

struct CompletionResult {
  std::string text;
  std::string finish_reason;
  std::chrono::milliseconds latency{0};
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int attempts = 0;
};

// One entry of a group request: either a result or the error message.
struct SampleOutcome {
  std::optional<CompletionResult> result;
  std::string error;
};

// Chat-completions request body. messages[0] is the template preamble
// (system), messages[1] the rendered case (user), both verbatim.
nlohmann::json build_request_body(const RenderedPrompt& prompt, const GatewayConfig& config, int n,
                                  double temperature, std::optional<std::uint64_t> seed = std::nullopt);

// Delay before retry i (0-based): min(cap, base * 2^i) scaled by a jitter
// factor in [1, 1.5), forced non-decreasing.
std::vector<std::chrono::milliseconds> backoff_schedule(const GatewayConfig& config, int retries,
                                                        std::uint64_t seed);

class LlmGateway {
 public:
  explicit LlmGateway(GatewayConfig config);

  CompletionResult complete(const RenderedPrompt& prompt) const;
  // Throws only if every sample failed.
  std::vector<SampleOutcome> complete_group(const RenderedPrompt& prompt, int group_size) const;
  // True when the endpoint answers at all (GET {base_url}/models).
  bool ping() const;

  const GatewayConfig& config() const noexcept { return config_; }
  int peak_in_flight() const;

 private:
  struct Limiter {
    std::mutex mu;
    std::condition_variable cv;
    int active = 0;
    int peak = 0;
    std::uint64_t request_counter = 0;
  };

  std::vector<CompletionResult> send(const nlohmann::json& body, std::size_t expected) const;

  GatewayConfig config_;
  std::string host_;
  std::string path_prefix_;
  std::shared_ptr<Limiter> limiter_;
};

CompletionResult complete(const RenderedPrompt& prompt, const GatewayConfig& config);
std::vector<SampleOutcome> complete_group(const RenderedPrompt& prompt, int group_size, const GatewayConfig& config);

}  // namespace detoxr

#endif  // DETOXR_GATEWAY_HPP
