#include "detoxr/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "detoxr/errors.hpp"
#include "detoxr/record.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

using json = nlohmann::json;

std::string HistoryPredictor::complete(const Case& c, const RenderedPrompt*) const {
  return render_completion(history_baseline(c, *lexicon_).labels, std::nullopt);
}

std::string MlpPredictor::complete(const Case& c, const RenderedPrompt*) const {
  return render_completion(mlp_predict(model_, c, model_.threshold), std::nullopt);
}

std::string ToyPredictor::complete(const Case& c, const RenderedPrompt* prompt) const {
  if (prompt) return policy_.greedy_completion(*prompt);
  return policy_.greedy_completion(prepare_prompt(c));
}

std::string LlmPredictor::complete(const Case& c, const RenderedPrompt* prompt) const {
  if (prompt) return gateway_.complete(*prompt).text;
  return gateway_.complete(prepare_prompt(c)).text;
}

PredictionMatrix EvalReport::prediction_matrix() const {
  PredictionMatrix m;
  m.rows.reserve(rows.size());
  for (const auto& r : rows) m.rows.push_back({r.case_id, r.predicted, r.truth});
  return m;
}

EvalReport run_eval(const DatasetManifest& dataset, const Predictor& predictor, const EvalOptions& options) {
  const PromptTemplate& tmpl = options.prompt_template ? *options.prompt_template : PromptTemplate::builtin();

  std::vector<const Case*> cases;
  std::string split_label = "all";
  if (dataset.split_assignment) {
    cases = dataset.cases_in(options.split);
    split_label = std::string(split_name(options.split));
  } else {
    for (const auto& c : dataset.cases) cases.push_back(&c);
  }
  if (cases.empty()) throw EmptyInputError("no cases in split '" + split_label + "'");
  for (const Case* c : cases) {
    if (!c->labels) throw MissingLabelsError(c->case_id);
  }

  struct Slot {
    std::optional<EvalCaseRow> row;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(cases.size());

  auto evaluate_one = [&](std::size_t i) {
    const Case& c = *cases[i];
    try {
      std::string raw;
      if (predictor.needs_prompt()) {
        RenderedPrompt prompt = prepare_prompt(c, tmpl, options.prompt_budget);
        raw = predictor.complete(c, &prompt);
      } else {
        raw = predictor.complete(c, nullptr);
      }
      CompletionParse parse = parse_completion(raw);
      EvalCaseRow row;
      row.case_id = c.case_id;
      row.truth = *c.labels;
      row.parseable = parse.parsed.predictions.has_value();
      row.predicted = row.parseable ? parse.parsed.predicted_labels() : LabelVector{};
      row.format = parse.components;
      row.reward = composite_reward(parse.parsed, parse.components, row.truth, options.reward_kind);
      row.raw_completion = std::move(raw);
      slots[i].row = std::move(row);
    } catch (const GatewayError& e) {
      slots[i].error = e.what();
    }
  };

  const int workers = std::max(1, options.workers);
  if (workers == 1 || cases.size() == 1) {
    for (std::size_t i = 0; i < cases.size(); ++i) evaluate_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mu;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cases.size(); i = next++) {
          try {
            evaluate_one(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  EvalReport report;
  report.metadata.predictor = predictor.kind();
  report.metadata.model_name = predictor.model_name();
  report.metadata.template_hash = tmpl.hash();
  report.metadata.split = split_label;
  report.metadata.reward_kind = std::string(reward_kind_name(options.reward_kind));
  report.metadata.seed = options.seed;
  report.metadata.timestamp = utc_timestamp();

  double reward_sum = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].row) {
      if (!slots[i].row->parseable) ++report.unparseable_count;
      reward_sum += slots[i].row->reward.total;
      report.rows.push_back(std::move(*slots[i].row));
    } else {
      report.failed.push_back({cases[i]->case_id, slots[i].error.value_or("unknown error")});
    }
  }
  if (!report.rows.empty()) {
    report.metrics = compute_metrics(report.prediction_matrix());
    report.mean_reward = reward_sum / static_cast<double>(report.rows.size());
  }
  return report;
}

json metrics_to_json(const MetricsReport& m) {
  auto averages = [](const Averages& a) {
    return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  json per_class = json::object();
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    const auto& c = m.per_class[k];
    per_class[std::string(key_of(toxin_at(k)))] = {{"tp", c.tp},         {"fp", c.fp},         {"fn", c.fn},
                                                   {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
  }
  return {{"micro", averages(m.micro)},
          {"macro", averages(m.macro)},
          {"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"per_class", per_class}};
}

namespace {

MetricsReport metrics_from_json(const json& doc) {
  MetricsReport m;
  auto averages = [](const json& a) {
    return Averages{a.at("precision").get<double>(), a.at("recall").get<double>(), a.at("f1").get<double>()};
  };
  m.micro = averages(doc.at("micro"));
  m.macro = averages(doc.at("macro"));
  m.tp = doc.at("tp").get<long>();
  m.fp = doc.at("fp").get<long>();
  m.fn = doc.at("fn").get<long>();
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    const json& c = doc.at("per_class").at(std::string(key_of(toxin_at(k))));
    m.per_class[k] = {c.at("tp").get<long>(),          c.at("fp").get<long>(),     c.at("fn").get<long>(),
                      c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>()};
  }
  return m;
}

bool same_metrics(const MetricsReport& a, const MetricsReport& b) {
  auto same = [](const Averages& x, const Averages& y) {
    return x.precision == y.precision && x.recall == y.recall && x.f1 == y.f1;
  };
  if (!same(a.micro, b.micro) || !same(a.macro, b.macro)) return false;
  if (a.tp != b.tp || a.fp != b.fp || a.fn != b.fn) return false;
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    const auto& x = a.per_class[k];
    const auto& y = b.per_class[k];
    if (x.tp != y.tp || x.fp != y.fp || x.fn != y.fn || x.precision != y.precision || x.recall != y.recall ||
        x.f1 != y.f1) {
      return false;
    }
  }
  return true;
}

}  // namespace

json report_to_json(const EvalReport& report, bool include_raw) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row = {{"case_id", r.case_id},
                {"predicted", label_vector_to_json(r.predicted)},
                {"truth", label_vector_to_json(r.truth)},
                {"parseable", r.parseable},
                {"format",
                 {{"has_reasoning_block", r.format.has_reasoning_block},
                  {"has_valid_json", r.format.has_valid_json},
                  {"has_all_keys", r.format.has_all_keys}}},
                {"reward",
                 {{"r_task", r.reward.r_task},
                  {"r_format", r.reward.r_format},
                  {"total", r.reward.total},
                  {"tp", r.reward.tp},
                  {"fp", r.reward.fp},
                  {"fn", r.reward.fn}}}};
    if (include_raw) row["raw_completion"] = r.raw_completion;
    rows.push_back(std::move(row));
  }
  json failed = json::array();
  for (const auto& f : report.failed) failed.push_back({{"case_id", f.case_id}, {"error", f.error}});
  const auto& md = report.metadata;
  return {{"metadata",
           {{"predictor", md.predictor},
            {"model_name", md.model_name},
            {"template_hash", md.template_hash},
            {"split", md.split},
            {"reward_kind", md.reward_kind},
            {"seed", md.seed},
            {"timestamp", md.timestamp}}},
          {"case_count", report.case_count()},
          {"evaluated_count", report.rows.size()},
          {"failed_count", report.failed.size()},
          {"unparseable_count", report.unparseable_count},
          {"mean_reward", report.mean_reward},
          {"metrics", metrics_to_json(report.metrics)},
          {"failed", failed},
          {"cases", rows}};
}

EvalReport report_from_json(const json& doc) {
  try {
    EvalReport report;
    const json& md = doc.at("metadata");
    report.metadata = {md.at("predictor").get<std::string>(),   md.at("model_name").get<std::string>(),
                       md.at("template_hash").get<std::string>(), md.at("split").get<std::string>(),
                       md.at("reward_kind").get<std::string>(),   md.at("seed").get<std::uint64_t>(),
                       md.at("timestamp").get<std::string>()};
    report.unparseable_count = doc.at("unparseable_count").get<int>();
    report.mean_reward = doc.at("mean_reward").get<double>();
    report.metrics = metrics_from_json(doc.at("metrics"));
    for (const auto& f : doc.at("failed")) {
      report.failed.push_back({f.at("case_id").get<std::string>(), f.at("error").get<std::string>()});
    }
    for (const auto& r : doc.at("cases")) {
      EvalCaseRow row;
      row.case_id = r.at("case_id").get<std::string>();
      row.predicted = label_vector_from_json(r.at("predicted"), "predicted");
      row.truth = label_vector_from_json(r.at("truth"), "truth");
      row.parseable = r.at("parseable").get<bool>();
      const json& f = r.at("format");
      row.format = {f.at("has_reasoning_block").get<bool>(), f.at("has_valid_json").get<bool>(),
                    f.at("has_all_keys").get<bool>()};
      const json& w = r.at("reward");
      row.reward = {w.at("r_task").get<double>(), w.at("r_format").get<double>(), w.at("total").get<double>(),
                    w.at("tp").get<int>(),        w.at("fp").get<int>(),         w.at("fn").get<int>()};
      row.raw_completion = r.value("raw_completion", "");
      report.rows.push_back(std::move(row));
    }
    return report;
  } catch (const json::exception& e) {
    throw SchemaError("report", e.what());
  }
}

bool report_is_consistent(const EvalReport& report) {
  if (report.rows.empty()) return true;
  int unparseable = 0;
  for (const auto& r : report.rows) {
    if (!r.parseable) {
      ++unparseable;
      if (!r.predicted.none()) return false;
    }
  }
  return unparseable == report.unparseable_count && same_metrics(compute_metrics(report.prediction_matrix()), report.metrics);
}

void write_predictions(const std::filesystem::path& path, const PredictionMatrix& matrix) {
  std::string out;
  for (const auto& r : matrix.rows) {
    json line = {{"case_id", r.case_id},
                 {"predicted", label_vector_to_json(r.predicted)},
                 {"truth", label_vector_to_json(r.truth)}};
    out += line.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

PredictionMatrix read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  PredictionMatrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw SchemaError(where, "not a JSON object");
    if (!doc.contains("case_id") || !doc["case_id"].is_string()) throw SchemaError(where + ".case_id", "missing");
    if (!doc.contains("predicted")) throw SchemaError(where + ".predicted", "missing");
    PredictionRow row;
    row.case_id = doc["case_id"].get<std::string>();
    row.predicted = label_vector_from_json(doc["predicted"], where + ".predicted");
    if (doc.contains("truth") && !doc["truth"].is_null()) {
      row.truth = label_vector_from_json(doc["truth"], where + ".truth");
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

TruthTable truth_table(const DatasetManifest& dataset) {
  TruthTable t;
  for (const auto& c : dataset.cases) {
    if (c.labels) t.emplace(c.case_id, *c.labels);
  }
  return t;
}

std::string ExpertComparisonReport::micro_f1_pair() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f vs %.3f", metrics_a.micro.f1, metrics_b.micro.f1);
  return buf;
}

ExpertComparisonReport expert_comparison(const PredictionMatrix& a, const PredictionMatrix& b,
                                         const TruthTable& truths, std::size_t sample_size, std::uint64_t seed) {
  if (sample_size == 0) throw CoverageError("sample size must be positive");
  // Sample among the labelled cases that both prediction files cover.
  std::set<std::string> in_a, in_b;
  for (const auto& r : a.rows) in_a.insert(r.case_id);
  for (const auto& r : b.rows) in_b.insert(r.case_id);
  std::vector<std::string> ids;
  for (const auto& [id, _] : truths) {
    if (in_a.count(id) && in_b.count(id)) ids.push_back(id);
  }
  if (ids.size() < sample_size) {
    throw CoverageError("only " + std::to_string(ids.size()) + " labelled cases are covered by both prediction files, " +
                        std::to_string(sample_size) + " requested");
  }
  std::mt19937_64 rng(derive_seed(seed, 0xe8e7));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(sample_size);
  std::sort(ids.begin(), ids.end());

  auto restrict = [&](const PredictionMatrix& m, const char* side) {
    std::map<std::string, const PredictionRow*> by_id;
    for (const auto& r : m.rows) by_id.emplace(r.case_id, &r);
    PredictionMatrix out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw CoverageError(std::string("prediction file ") + side + " does not cover case '" + id + "'");
      }
      out.rows.push_back({id, it->second->predicted, truths.at(id)});
    }
    return out;
  };

  ExpertComparisonReport report;
  PredictionMatrix ma = restrict(a, "a");
  PredictionMatrix mb = restrict(b, "b");
  report.sampled_case_ids = ids;
  report.metrics_a = compute_metrics(ma);
  report.metrics_b = compute_metrics(mb);
  report.comparison = case_comparison(ma, mb);
  return report;
}

json comparison_to_json(const ExpertComparisonReport& report) {
  const auto& s = report.comparison.summary;
  json outcomes = json::object();
  for (std::size_t i = 0; i < s.outcome_counts.size(); ++i) {
    outcomes[std::string(outcome_name(static_cast<Outcome>(i)))] = s.outcome_counts[i];
  }
  return {{"labels", {{"a", report.label_a}, {"b", report.label_b}}},
          {"sample_size", report.sampled_case_ids.size()},
          {"sampled_case_ids", report.sampled_case_ids},
          {"micro_f1", report.micro_f1_pair()},
          {"metrics_a", metrics_to_json(report.metrics_a)},
          {"metrics_b", metrics_to_json(report.metrics_b)},
          {"summary",
           {{"cases", s.cases},
            {"perfect_a", s.perfect_a},
            {"perfect_b", s.perfect_b},
            {"found_by_a_missed_by_b", s.found_by_a_missed_by_b},
            {"found_by_b_missed_by_a", s.found_by_b_missed_by_a},
            {"false_alarm_a_only", s.false_alarm_a_only},
            {"false_alarm_b_only", s.false_alarm_b_only},
            {"outcomes", outcomes}}}};
}

std::string comparison_grid_csv(const ExpertComparisonReport& report) {
  std::ostringstream out;
  out << "case_id,toxin,outcome\n";
  for (const auto& cell : report.comparison.grid) {
    out << cell.case_id << ',' << key_of(cell.toxin) << ',' << outcome_name(cell.outcome) << '\n';
  }
  return out.str();
}

}  // namespace detoxr
