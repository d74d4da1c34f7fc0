#include "doctest.h"

#include "detoxr/errors.hpp"
#include "detoxr/record.hpp"
#include "detoxr/service.hpp"
#include "fixtures.hpp"
#include "mock_llm.hpp"

// After Eigen: <resolv.h> defines an _res macro.
#include "httplib.h"

using namespace detoxr;
using nlohmann::json;

namespace {

json request_for(Case c) {
  c.labels.reset();
  return {{"case", case_to_json(c)}};
}

ServiceConfig config_in(const std::string& name) {
  ServiceConfig cfg;
  cfg.audit_dir = fixtures::scratch_dir(name);
  cfg.predictor = "history";
  return cfg;
}

PredictorRegistry with_llm(const mock::MockLlm& llm) {
  GatewayConfig g;
  g.base_url = llm.base_url();
  g.model_name = "mock-model";
  g.max_retries = 0;
  g.request_timeout = std::chrono::milliseconds(5000);
  PredictorRegistry r;
  r["history"] = std::make_shared<HistoryPredictor>();
  r["llm"] = std::make_shared<LlmPredictor>(g);
  return r;
}

}  // namespace

TEST_CASE("predict with the history predictor") {
  auto cfg = config_in("svc-history");
  PredictionService svc(cfg, make_predictors(cfg));
  auto res = svc.predict(request_for(fixtures::sample_case()).dump());
  REQUIRE(res.status == 200);
  CHECK(res.body["predictions"].size() == 14);
  CHECK(res.body["predictions"]["opiates"] == true);
  CHECK(res.body["predictions"]["lsd"] == false);
  CHECK(res.body["history_baseline"] == res.body["predictions"]);
  CHECK(res.body["format_ok"] == true);
  CHECK(res.body["model_info"]["predictor"] == "history");
  CHECK(res.body["model_info"]["template_hash"] == PromptTemplate::builtin().hash());
  CHECK(res.body["reasoning"].is_null());

  const std::string id = res.body["request_id"];
  auto rec = svc.audit_record(id);
  REQUIRE(rec.status == 200);
  CHECK(rec.body["request_id"] == id);
  CHECK(rec.body["predictions"] == res.body["predictions"]);
  CHECK(rec.body.contains("prompt_hash"));
  CHECK(rec.body.contains("raw_completion"));
  CHECK(svc.audit_record("req-unknown").status == 404);

  auto second = svc.predict(request_for(fixtures::sample_case()).dump());
  CHECK(second.body["request_id"] != res.body["request_id"]);
  CHECK(svc.audit().count() == 2);
}

TEST_CASE("request validation") {
  auto cfg = config_in("svc-validation");
  PredictionService svc(cfg, make_predictors(cfg));
  auto field_of = [](const HttpResponse& r) { return r.body["fields"][0]["field"].get<std::string>(); };

  json bad = request_for(fixtures::sample_case());
  bad["case"]["structured"]["vitals"]["spo2"] = 140;
  auto r = svc.predict(bad.dump());
  CHECK(r.status == 422);
  CHECK(field_of(r) == "structured.vitals.spo2");

  CHECK(svc.predict("not json").status == 422);
  CHECK(svc.predict("[]").status == 422);
  CHECK(field_of(svc.predict("{}")) == "case");

  json extra = request_for(fixtures::sample_case());
  extra["surprise"] = 1;
  CHECK(field_of(svc.predict(extra.dump())) == "surprise");

  json labelled = {{"case", case_to_json(fixtures::sample_case())}};
  CHECK(field_of(svc.predict(labelled.dump())) == "labels");

  json wrong_predictor = request_for(fixtures::sample_case());
  wrong_predictor["predictor"] = "oracle";
  CHECK(svc.predict(wrong_predictor.dump()).status == 422);

  json unconfigured = request_for(fixtures::sample_case());
  unconfigured["predictor"] = "mlp";
  CHECK(svc.predict(unconfigured.dump()).status == 503);

  CHECK(svc.audit().count() == 0);
}

TEST_CASE("unparseable model output falls back to the history baseline") {
  mock::Behaviour b;
  b.respond = mock::constant("Probably heroin, maybe benzodiazepines.");
  mock::MockLlm llm(b);
  auto cfg = config_in("svc-fallback");
  cfg.predictor = "llm";
  PredictionService svc(cfg, with_llm(llm));
  auto res = svc.predict(request_for(fixtures::sample_case()).dump());
  REQUIRE(res.status == 200);
  CHECK(res.body["format_ok"] == false);
  CHECK(res.body["predictions"] == res.body["history_baseline"]);
  CHECK(res.body.contains("warning"));
  CHECK(res.body["model_info"]["model_name"] == "mock-model");
  auto rec = svc.audit_record(res.body["request_id"]);
  CHECK(rec.body["raw_completion"] == "Probably heroin, maybe benzodiazepines.");
  CHECK(rec.body["format_ok"] == false);
}

TEST_CASE("well-formed model output is used") {
  mock::Behaviour b;
  b.respond = mock::constant(mock::perfect_reply(LabelVector::from_set({Toxin::pregabalin})));
  mock::MockLlm llm(b);
  auto cfg = config_in("svc-llm");
  cfg.predictor = "llm";
  PredictionService svc(cfg, with_llm(llm));
  auto res = svc.predict(request_for(fixtures::sample_case()).dump());
  CHECK(res.body["format_ok"] == true);
  CHECK(res.body["predictions"]["pregabalin"] == true);
  CHECK(res.body["predictions"]["opiates"] == false);
  CHECK(res.body["reasoning"].is_string());
  CHECK(svc.health().status == 200);

  json quiet = request_for(fixtures::sample_case());
  quiet["include_reasoning"] = false;
  CHECK(svc.predict(quiet.dump()).body["reasoning"].is_null());
}

TEST_CASE("upstream failure is a 502 and is audited") {
  mock::Behaviour b;
  b.respond = mock::constant("x");
  b.always_status = 500;
  mock::MockLlm llm(b);
  auto cfg = config_in("svc-502");
  cfg.predictor = "llm";
  PredictionService svc(cfg, with_llm(llm));
  auto res = svc.predict(request_for(fixtures::sample_case()).dump());
  CHECK(res.status == 502);
  CHECK(svc.audit().count() == 1);
  auto rec = svc.audit_record(res.body["request_id"]);
  CHECK(rec.body.contains("error"));
}

TEST_CASE("audit log rotation and reload") {
  auto dir = fixtures::scratch_dir("svc-audit");
  {
    AuditLog log(dir, 300);
    for (int i = 0; i < 10; ++i) log.append({{"request_id", "req-" + std::to_string(i)}, {"pad", std::string(80, 'x')}});
    CHECK(log.count() == 10);
  }
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".jsonl" ? 1 : 0;
  CHECK(files > 1);
  AuditLog reloaded(dir, 300);
  CHECK(reloaded.count() == 10);
  CHECK(reloaded.find("req-3").has_value());
}

TEST_CASE("service config") {
  auto cfg = ServiceConfig::from_json({{"port", 9000}, {"predictor", "history"}});
  CHECK(cfg.port == 9000);
  CHECK(ServiceConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  CHECK_THROWS_AS(ServiceConfig::from_json({{"bogus", true}}), ConfigError);
}

TEST_CASE("HTTP endpoints") {
  auto cfg = config_in("svc-http");
  cfg.port = 0;
  cfg.cors_origin = "http://ui.local";
  PredictionService svc(cfg, make_predictors(cfg));
  HttpServer server(svc);
  int port = server.start();
  httplib::Client cli("127.0.0.1", port);

  auto toxins = cli.Get("/v1/toxins");
  REQUIRE(toxins);
  CHECK(toxins->status == 200);
  CHECK(json::parse(toxins->body).size() == 14);
  CHECK(toxins->get_header_value("Access-Control-Allow-Origin") == "http://ui.local");

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");

  auto pred = cli.Post("/v1/predict", request_for(fixtures::sample_case()).dump(), "application/json");
  REQUIRE(pred);
  CHECK(pred->status == 200);
  auto body = json::parse(pred->body);
  CHECK(body["predictions"].size() == 14);

  auto audit = cli.Get("/v1/audit/" + body["request_id"].get<std::string>());
  REQUIRE(audit);
  CHECK(audit->status == 200);
  CHECK(cli.Get("/v1/audit/req-missing")->status == 404);

  auto bad = cli.Post("/v1/predict", "{\"case\": 5}", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 422);

  auto pre = cli.Options("/v1/predict");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  server.stop();
}
