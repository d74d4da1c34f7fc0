#include "mock_llm.hpp"

#include "httplib.h"

#include "detoxr/reward.hpp"

namespace mock {

using json = nlohmann::json;

MockLlm::MockLlm(Behaviour behaviour) : behaviour_(std::move(behaviour)), server_(std::make_unique<httplib::Server>()) {
  server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
  server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    int n = ++requests_;
    int now = ++active_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    if (behaviour_.delay.count() > 0) std::this_thread::sleep_for(behaviour_.delay);
    json body = json::parse(req.body, nullptr, false);
    {
      std::lock_guard lock(mu_);
      last_ = body;
    }
    auto finish = [&](int status, const json& payload) {
      res.status = status;
      res.set_content(payload.dump(), "application/json");
      --active_;
    };
    if (!behaviour_.required_bearer.empty() &&
        req.get_header_value("Authorization") != "Bearer " + behaviour_.required_bearer) {
      return finish(401, {{"error", "unauthorized"}});
    }
    if (behaviour_.always_status != 0) return finish(behaviour_.always_status, {{"error", "configured failure"}});
    if (n <= behaviour_.fail_first) return finish(behaviour_.fail_status, {{"error", "transient"}});

    int choices = behaviour_.honour_n ? body.value("n", 1) : 1;
    json out = {{"id", "mock-" + std::to_string(n)}, {"object", "chat.completion"}, {"choices", json::array()}};
    for (int i = 0; i < choices; ++i) {
      json message = {{"role", "assistant"}};
      if (!behaviour_.drop_content) message["content"] = behaviour_.respond(body, i);
      out["choices"].push_back({{"index", i}, {"message", message}, {"finish_reason", "stop"}});
    }
    out["usage"] = {{"prompt_tokens", 100}, {"completion_tokens", 20 * choices}};
    finish(200, out);
  });
  server_->Get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"id":"mock-model"}]})", "application/json");
  });
  port_ = server_->bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockLlm::~MockLlm() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockLlm::base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

json MockLlm::last_request() const {
  std::lock_guard lock(mu_);
  return last_;
}

std::string perfect_reply(const detoxr::LabelVector& labels) {
  return detoxr::render_completion(labels, std::string("Findings reviewed against each class."));
}

Responder constant(std::string content) {
  return [content = std::move(content)](const json&, int) { return content; };
}

}  // namespace mock
