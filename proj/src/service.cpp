#include "detoxr/service.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>
#include <set>

#include "httplib.h"

#include "detoxr/errors.hpp"
#include "detoxr/record.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFallbackWarning =
    "model output could not be parsed; predictions fall back to the reported substance history";

json label_map(const LabelVector& labels) {
  json out = json::object();
  for (std::size_t k = 0; k < kNumToxins; ++k) out[std::string(key_of(toxin_at(k)))] = labels.test(k);
  return out;
}

HttpResponse validation_error(const std::string& field, const std::string& message) {
  return {422, {{"error", "validation_error"}, {"fields", json::array({{{"field", field}, {"message", message}}})}}};
}

HttpResponse error_response(int status, std::string_view kind, const std::string& message) {
  return {status, {{"error", kind}, {"message", message}}};
}

std::optional<fs::path> optional_path(const json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return fs::path(doc[key].get<std::string>());
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("service config must be a JSON object");
  static const std::set<std::string> known{"host",         "port",           "predictor",     "gateway_config",
                                           "audit_dir",    "audit_max_bytes", "toy_checkpoint", "mlp_model",
                                           "prompt_template", "cors_origin", "http_threads"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown service config field '" + key + "'");
  }
  try {
    ServiceConfig c;
    c.host = doc.value("host", c.host);
    c.port = doc.value("port", c.port);
    c.predictor = doc.value("predictor", c.predictor);
    c.gateway_config = optional_path(doc, "gateway_config");
    if (doc.contains("audit_dir")) c.audit_dir = doc["audit_dir"].get<std::string>();
    c.audit_max_bytes = doc.value("audit_max_bytes", c.audit_max_bytes);
    c.toy_checkpoint = optional_path(doc, "toy_checkpoint");
    c.mlp_model = optional_path(doc, "mlp_model");
    c.prompt_template = optional_path(doc, "prompt_template");
    c.cors_origin = doc.value("cors_origin", c.cors_origin);
    c.http_threads = doc.value("http_threads", c.http_threads);
    if (c.port < 0 || c.port > 65535) throw ConfigError("port out of range");
    if (c.http_threads < 1) throw ConfigError("http_threads must be at least 1");
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  return from_json(doc);
}

json ServiceConfig::to_json() const {
  auto opt = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  return {{"host", host},
          {"port", port},
          {"predictor", predictor},
          {"gateway_config", opt(gateway_config)},
          {"audit_dir", audit_dir.string()},
          {"audit_max_bytes", audit_max_bytes},
          {"toy_checkpoint", opt(toy_checkpoint)},
          {"mlp_model", opt(mlp_model)},
          {"prompt_template", opt(prompt_template)},
          {"cors_origin", cors_origin},
          {"http_threads", http_threads}};
}

AuditLog::AuditLog(fs::path dir, std::uintmax_t max_bytes) : dir_(std::move(dir)), max_bytes_(max_bytes) {
  fs::create_directories(dir_);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("audit", 0) == 0 && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    while (std::getline(in, line)) {
      json rec = json::parse(line, nullptr, false);
      if (rec.is_object() && rec.contains("request_id")) index_[rec["request_id"].get<std::string>()] = rec;
    }
    std::smatch m;
    const auto name = f.filename().string();
    static const std::regex rotated("audit-(\\d+)\\.jsonl");
    if (std::regex_match(name, m, rotated)) next_rotation_ = std::max(next_rotation_, std::stoi(m[1]) + 1);
  }
  const fs::path live = dir_ / "audit.jsonl";
  if (fs::exists(live)) current_bytes_ = fs::file_size(live);
}

void AuditLog::rotate_locked() {
  char name[32];
  std::snprintf(name, sizeof name, "audit-%06d.jsonl", next_rotation_++);
  fs::rename(dir_ / "audit.jsonl", dir_ / name);
  current_bytes_ = 0;
}

void AuditLog::append(const json& record) {
  std::string line = record.dump();
  line += '\n';
  std::lock_guard lock(mu_);
  if (current_bytes_ > 0 && current_bytes_ + line.size() > max_bytes_) rotate_locked();
  std::ofstream out(dir_ / "audit.jsonl", std::ios::app | std::ios::binary);
  out << line;
  out.flush();
  if (!out) throw Error("failed to write audit record to '" + dir_.string() + "'");
  current_bytes_ += line.size();
  index_[record.at("request_id").get<std::string>()] = record;
}

std::optional<json> AuditLog::find(const std::string& request_id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(request_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t AuditLog::count() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

PredictorRegistry make_predictors(const ServiceConfig& config) {
  PredictorRegistry r;
  r["history"] = std::make_shared<HistoryPredictor>();
  r["toy"] = std::make_shared<ToyPredictor>(config.toy_checkpoint ? ToyPolicy::load(*config.toy_checkpoint)
                                                                  : ToyPolicy());
  if (config.mlp_model) r["mlp"] = std::make_shared<MlpPredictor>(load_mlp(*config.mlp_model));
  GatewayConfig gw;
  if (config.gateway_config) {
    json doc = json::parse(read_text_file(*config.gateway_config), nullptr, false);
    if (doc.is_discarded()) throw ConfigError("gateway config is not valid JSON");
    gw = GatewayConfig::from_json(doc);
  }
  gw = GatewayConfig::from_environment(gw);
  if (!gw.base_url.empty() && !gw.model_name.empty()) r["llm"] = std::make_shared<LlmPredictor>(gw);
  return r;
}

PredictionService::PredictionService(ServiceConfig config, PredictorRegistry predictors)
    : config_(std::move(config)),
      predictors_(std::move(predictors)),
      template_(config_.prompt_template
                    ? std::make_shared<const PromptTemplate>(PromptTemplate::load(*config_.prompt_template))
                    : std::shared_ptr<const PromptTemplate>(&PromptTemplate::builtin(), [](const PromptTemplate*) {})),
      audit_(config_.audit_dir, config_.audit_max_bytes),
      started_(std::chrono::steady_clock::now()),
      id_base_(std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32)) {
  static const std::set<std::string> kinds{"llm", "toy", "mlp", "history"};
  if (!kinds.count(config_.predictor)) throw ConfigError("unknown predictor '" + config_.predictor + "'");
}

std::string PredictionService::next_request_id() {
  // splitmix64 is a bijection, so distinct counters give distinct ids.
  return "req-" + hex64(splitmix64(id_base_ + id_counter_++));
}

HttpResponse PredictionService::predict(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) return validation_error("body", "request body is not valid JSON");
  if (!doc.is_object()) return validation_error("body", "request body must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "case" && key != "predictor" && key != "include_reasoning") {
      return validation_error(key, "unknown field");
    }
  }
  if (!doc.contains("case")) return validation_error("case", "required");
  const json& case_json = doc["case"];
  if (case_json.is_object() && case_json.contains("labels") && !case_json["labels"].is_null()) {
    return validation_error("labels", "labels must not be submitted for prediction");
  }

  std::string predictor_name = config_.predictor;
  if (doc.contains("predictor") && !doc["predictor"].is_null()) {
    if (!doc["predictor"].is_string()) return validation_error("predictor", "expected a string");
    predictor_name = doc["predictor"].get<std::string>();
    if (predictor_name != "llm" && predictor_name != "toy" && predictor_name != "mlp" && predictor_name != "history") {
      return validation_error("predictor", "must be one of llm, toy, mlp, history");
    }
  }
  bool include_reasoning = true;
  if (doc.contains("include_reasoning") && !doc["include_reasoning"].is_null()) {
    if (!doc["include_reasoning"].is_boolean()) return validation_error("include_reasoning", "expected a boolean");
    include_reasoning = doc["include_reasoning"].get<bool>();
  }

  Case c;
  try {
    c = parse_case_json(case_json);
  } catch (const ValidationError& e) {
    return validation_error(e.field(), e.what());
  }

  RenderedPrompt prompt;
  try {
    prompt = prepare_prompt(c, *template_);
  } catch (const BudgetError& e) {
    return validation_error("case", e.what());
  }

  auto it = predictors_.find(predictor_name);
  if (it == predictors_.end()) {
    return error_response(503, "predictor_unavailable", "predictor '" + predictor_name + "' is not configured");
  }
  const Predictor& predictor = *it->second;

  const std::string request_id = next_request_id();
  const std::string prompt_hash = hex64(fnv1a64(prompt.system + "\n" + prompt.text));
  const LabelVector history = history_baseline(c).labels;
  json audit_record = {{"request_id", request_id},
                       {"timestamp", utc_timestamp()},
                       {"case", case_json},
                       {"predictor", predictor_name},
                       {"model_name", predictor.model_name()},
                       {"prompt_hash", prompt_hash}};

  const auto started = std::chrono::steady_clock::now();
  std::string raw;
  try {
    raw = predictor.complete(c, &prompt);
  } catch (const GatewayError& e) {
    auto latency = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    audit_record["raw_completion"] = nullptr;
    audit_record["predictions"] = nullptr;
    audit_record["error"] = e.what();
    audit_record["latency_ms"] = latency;
    audit_.append(audit_record);
    return {502, {{"error", "upstream_failure"}, {"message", e.what()}, {"request_id", request_id}}};
  }
  const double latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  CompletionParse parse = parse_completion(raw);
  const bool format_ok = parse.components.has_valid_json && parse.components.has_all_keys;
  const LabelVector predicted = format_ok ? parse.parsed.predicted_labels() : history;

  json response = {{"request_id", request_id},
                   {"predictions", label_map(predicted)},
                   {"history_baseline", label_map(history)},
                   {"format_ok", format_ok},
                   {"format_score", parse.components.score()},
                   {"model_info",
                    {{"predictor", predictor_name},
                     {"model_name", predictor.model_name()},
                     {"template_hash", template_->hash()}}},
                   {"latency_ms", latency}};
  response["reasoning"] = include_reasoning && parse.parsed.reasoning ? json(*parse.parsed.reasoning) : json(nullptr);
  if (!format_ok) response["warning"] = kFallbackWarning;

  audit_record["raw_completion"] = raw;
  audit_record["predictions"] = response["predictions"];
  audit_record["format_ok"] = format_ok;
  audit_record["latency_ms"] = latency;
  audit_.append(audit_record);
  return {200, std::move(response)};
}

HttpResponse PredictionService::toxins() const {
  json list = json::array();
  for (const auto& t : kToxinClasses) list.push_back({{"key", t.key}, {"display_name", t.display_name}});
  return {200, list};
}

HttpResponse PredictionService::health() const {
  const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  bool ready = false;
  auto it = predictors_.find(config_.predictor);
  if (it != predictors_.end()) {
    if (auto llm = std::dynamic_pointer_cast<const LlmPredictor>(it->second)) {
      ready = llm->gateway().ping();
    } else {
      ready = true;
    }
  }
  return {ready ? 200 : 503,
          {{"status", ready ? "ok" : "unavailable"}, {"predictor", config_.predictor}, {"uptime", uptime}}};
}

HttpResponse PredictionService::audit_record(const std::string& request_id) const {
  auto rec = audit_.find(request_id);
  if (!rec) return error_response(404, "not_found", "no audit record for '" + request_id + "'");
  return {200, *rec};
}

HttpServer::HttpServer(PredictionService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  const int threads = service_.config().http_threads;
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  srv.set_payload_max_length(1u << 20);

  const std::string origin = service_.config().cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});

  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Post("/v1/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.predict(req.body));
  });
  srv.Get("/v1/toxins", [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.toxins()); });
  srv.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.health()); });
  srv.Get(R"(/v1/audit/([A-Za-z0-9\-]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.audit_record(req.matches[1]));
  });
  srv.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "internal_error", message));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  const auto& cfg = service_.config();
  if (cfg.port == 0) {
    int port = server_->bind_to_any_port(cfg.host);
    if (port < 0) throw Error("cannot bind to " + cfg.host);
    return port;
  }
  if (!server_->bind_to_port(cfg.host, cfg.port)) {
    throw Error("cannot bind to " + cfg.host + ":" + std::to_string(cfg.port));
  }
  return cfg.port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

int HttpServer::start() {
  int port = bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace detoxr
