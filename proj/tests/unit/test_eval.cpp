#include "doctest.h"

#include "detoxr/errors.hpp"
#include "detoxr/eval.hpp"
#include "detoxr/stratify.hpp"
#include "detoxr/synth.hpp"
#include "fixtures.hpp"
#include "mock_llm.hpp"

using namespace detoxr;

namespace {

DatasetManifest split_dataset(std::size_t n, double omission) {
  SynthConfig sc;
  sc.n_cases = n;
  sc.seed = 9;
  sc.history_omission_rate = omission;
  sc.history_commission_rate = 0.0;
  auto ds = generate_synthetic(sc);
  ds.split_assignment = iterative_stratify(ds, SplitSpec{{0.5, 0.2, 0.3}, 4});
  return ds;
}

GatewayConfig mock_config(const mock::MockLlm& llm) {
  GatewayConfig g;
  g.base_url = llm.base_url();
  g.model_name = "mock-model";
  g.max_retries = 0;
  g.backoff_base = std::chrono::milliseconds(1);
  g.backoff_cap = std::chrono::milliseconds(2);
  g.request_timeout = std::chrono::milliseconds(5000);
  return g;
}

}  // namespace

TEST_CASE("history predictor with a complete history is perfect") {
  auto ds = split_dataset(120, 0.0);
  auto report = run_eval(ds, HistoryPredictor(), EvalOptions{});
  CHECK(report.rows.size() == ds.cases_in(Split::test).size());
  CHECK(report.metadata.split == "test");
  CHECK(report.metrics.micro.f1 == 1.0);
  CHECK(report.unparseable_count == 0);
  CHECK(report.rows[0].format.score() == 0.75);
  CHECK(report_is_consistent(report));
}

TEST_CASE("report serialisation round trip and reproducibility") {
  auto ds = split_dataset(120, 0.3);
  EvalOptions opts;
  opts.workers = 3;
  auto a = run_eval(ds, HistoryPredictor(), opts);
  auto b = run_eval(ds, HistoryPredictor(), EvalOptions{});
  auto ja = report_to_json(a);
  auto jb = report_to_json(b);
  ja["metadata"].erase("timestamp");
  jb["metadata"].erase("timestamp");
  CHECK(ja == jb);

  auto back = report_from_json(report_to_json(a));
  CHECK(report_is_consistent(back));
  back.rows[0].predicted.set(Toxin::lsd, !back.rows[0].predicted[Toxin::lsd]);
  CHECK_FALSE(report_is_consistent(back));
}

TEST_CASE("datasets without a split are evaluated whole") {
  auto ds = split_dataset(40, 0.3);
  ds.split_assignment.reset();
  auto report = run_eval(ds, HistoryPredictor(), EvalOptions{});
  CHECK(report.rows.size() == 40);
  CHECK(report.metadata.split == "all");
}

TEST_CASE("unlabelled cases are refused") {
  auto ds = split_dataset(40, 0.3);
  ds.split_assignment.reset();
  ds.cases[3].labels.reset();
  try {
    run_eval(ds, HistoryPredictor(), EvalOptions{});
    FAIL("expected MissingLabelsError");
  } catch (const MissingLabelsError& e) {
    CHECK(std::string(e.what()).find(ds.cases[3].case_id) != std::string::npos);
  }
}

TEST_CASE("all-negative completions give zero recall") {
  mock::Behaviour b;
  b.respond = mock::constant(mock::perfect_reply(LabelVector{}));
  mock::MockLlm llm(b);
  auto ds = split_dataset(60, 0.3);
  auto report = run_eval(ds, LlmPredictor(mock_config(llm)), EvalOptions{});
  CHECK(report.failed.empty());
  CHECK(report.metrics.micro.recall == 0.0);
  CHECK(report.rows[0].format.score() == 1.0);
  CHECK(llm.requests() == static_cast<int>(report.rows.size()));
}

TEST_CASE("prose completions are unparseable and count as all-negative") {
  mock::Behaviour b;
  b.respond = mock::constant("I think this is an opioid overdose.");
  mock::MockLlm llm(b);
  auto ds = split_dataset(60, 0.3);
  auto report = run_eval(ds, LlmPredictor(mock_config(llm)), EvalOptions{});
  CHECK(report.unparseable_count == static_cast<int>(report.rows.size()));
  CHECK(report.mean_reward == 0.0);
  CHECK(report.rows[0].predicted.none());
}

TEST_CASE("gateway failures are recorded and excluded") {
  mock::Behaviour b;
  b.respond = mock::constant(mock::perfect_reply(LabelVector{}));
  b.always_status = 500;
  mock::MockLlm llm(b);
  auto ds = split_dataset(40, 0.3);
  auto report = run_eval(ds, LlmPredictor(mock_config(llm)), EvalOptions{});
  CHECK(report.rows.empty());
  CHECK(report.failed.size() == ds.cases_in(Split::test).size());
  CHECK(report.case_count() == report.failed.size());
}

TEST_CASE("prediction files and the expert comparison") {
  auto ds = split_dataset(100, 0.3);
  ds.split_assignment.reset();
  auto hist = run_eval(ds, HistoryPredictor(), EvalOptions{}).prediction_matrix();
  PredictionMatrix perfect;
  for (const auto& c : ds.cases) perfect.rows.push_back({c.case_id, *c.labels, *c.labels});

  auto dir = fixtures::scratch_dir("eval");
  write_predictions(dir / "h.jsonl", hist);
  auto back = read_predictions(dir / "h.jsonl");
  REQUIRE(back.rows.size() == hist.rows.size());
  CHECK(back.rows[5].predicted == hist.rows[5].predicted);

  auto truths = truth_table(ds);
  auto cmp = expert_comparison(perfect, back, truths, 25, 1);
  CHECK(cmp.sampled_case_ids.size() == 25);
  CHECK(cmp.metrics_a.micro.f1 == 1.0);
  CHECK(cmp.comparison.grid.size() == 25 * kNumToxins);
  CHECK(cmp.micro_f1_pair().substr(0, 9) == "1.000 vs ");
  CHECK(expert_comparison(perfect, back, truths, 25, 1).sampled_case_ids == cmp.sampled_case_ids);
  auto doc = comparison_to_json(cmp);
  CHECK(doc.contains("sampled_case_ids"));
  auto csv = comparison_grid_csv(cmp);
  CHECK(csv.rfind("case_id,toxin,outcome\n", 0) == 0);

  PredictionMatrix partial = perfect;
  partial.rows.resize(10);
  CHECK_THROWS_AS(expert_comparison(partial, back, truths, 25, 1), CoverageError);
  CHECK_THROWS_AS(expert_comparison(perfect, back, truths, 1000, 1), CoverageError);
}
