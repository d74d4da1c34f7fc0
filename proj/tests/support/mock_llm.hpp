#ifndef DETOXR_TEST_MOCK_LLM_HPP
#define DETOXR_TEST_MOCK_LLM_HPP

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "json.hpp"

#include "detoxr/toxins.hpp"

namespace httplib {
class Server;
}

namespace mock {

// Content of choice `index` for a chat-completions request.
using Responder = std::function<std::string(const nlohmann::json& request, int index)>;

struct Behaviour {
  Responder respond;
  int fail_first = 0;     // answer this many requests with fail_status first
  int fail_status = 503;
  int always_status = 0;  // non-zero: every request gets this status
  bool honour_n = true;   // false: always return one choice
  bool drop_content = false;
  std::chrono::milliseconds delay{0};
  std::string required_bearer;  // non-empty: 401 unless it matches
};

// Local OpenAI-compatible endpoint on 127.0.0.1 and a free port.
class MockLlm {
 public:
  explicit MockLlm(Behaviour behaviour);
  ~MockLlm();

  std::string base_url() const;  // http://127.0.0.1:<port>/v1
  int requests() const { return requests_.load(); }
  int peak_concurrency() const { return peak_.load(); }
  nlohmann::json last_request() const;

 private:
  Behaviour behaviour_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
  mutable std::mutex mu_;
  nlohmann::json last_;
};

// "<reasoning>...</reasoning>" + 14-key JSON for `labels`.
std::string perfect_reply(const detoxr::LabelVector& labels);
Responder constant(std::string content);

}  // namespace mock

#endif  // DETOXR_TEST_MOCK_LLM_HPP
