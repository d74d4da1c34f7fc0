#ifndef DETOXR_SERVICE_HPP
#define DETOXR_SERVICE_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "json.hpp"

#include "detoxr/eval.hpp"

namespace httplib {
class Server;
}

namespace detoxr {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string predictor = "toy";  // llm | toy | mlp | history
  std::optional<std::filesystem::path> gateway_config;
  std::filesystem::path audit_dir = "audit";
  std::uintmax_t audit_max_bytes = 16u << 20;  // rotate beyond this size
  std::optional<std::filesystem::path> toy_checkpoint;
  std::optional<std::filesystem::path> mlp_model;
  std::optional<std::filesystem::path> prompt_template;
  std::string cors_origin = "*";
  int http_threads = 8;

  static ServiceConfig from_json(const nlohmann::json& doc);
  static ServiceConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Append-only JSON-lines audit trail. The live file is audit.jsonl; once it
// grows past the size limit it is renamed to audit-<n>.jsonl. Existing files
// are indexed on construction.
class AuditLog {
 public:
  AuditLog(std::filesystem::path dir, std::uintmax_t max_bytes);

  void append(const nlohmann::json& record);
  std::optional<nlohmann::json> find(const std::string& request_id) const;
  std::size_t count() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  void rotate_locked();

  std::filesystem::path dir_;
  std::uintmax_t max_bytes_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> index_;
  std::uintmax_t current_bytes_ = 0;
  int next_rotation_ = 1;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

using PredictorRegistry = std::map<std::string, std::shared_ptr<const Predictor>>;

// Builds the predictors named by the config: history always, toy (from the
// checkpoint or zero weights), mlp when a model path is given, llm when a
// gateway config file or the environment names an endpoint.
PredictorRegistry make_predictors(const ServiceConfig& config);

// Transport-independent request handling.
class PredictionService {
 public:
  PredictionService(ServiceConfig config, PredictorRegistry predictors);

  HttpResponse predict(std::string_view body);
  HttpResponse toxins() const;
  HttpResponse health() const;
  HttpResponse audit_record(const std::string& request_id) const;

  const ServiceConfig& config() const noexcept { return config_; }
  const AuditLog& audit() const noexcept { return audit_; }
  const PromptTemplate& prompt_template() const noexcept { return *template_; }

 private:
  std::string next_request_id();

  ServiceConfig config_;
  PredictorRegistry predictors_;
  std::shared_ptr<const PromptTemplate> template_;
  AuditLog audit_;
  std::chrono::steady_clock::time_point started_;
  std::uint64_t id_base_;
  std::atomic<std::uint64_t> id_counter_{0};
};

// httplib front end for PredictionService, CORS headers included.
class HttpServer {
 public:
  explicit HttpServer(PredictionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds to config().port, or to a free port when that is 0. Returns the port.
  int bind();
  // Blocks until stop().
  void listen();
  // Serves on a background thread; returns the bound port.
  int start();
  void stop();

 private:
  PredictionService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace detoxr

#endif  // DETOXR_SERVICE_HPP
