#include "detoxr/cli.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "detoxr/errors.hpp"
#include "detoxr/eval.hpp"
#include "detoxr/record.hpp"
#include "detoxr/service.hpp"
#include "detoxr/stratify.hpp"
#include "detoxr/synth.hpp"
#include "detoxr/util.hpp"

namespace detoxr::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class LogLevel { error, warn, info, debug };

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string log_level = "info";
  bool pretty = false;
  std::string template_path;
};

class Context {
 public:
  Context(const Globals& g, std::ostream& out, std::ostream& err) : globals(g), out(out), err(err) {
    static const std::map<std::string, LogLevel> levels{
        {"error", LogLevel::error}, {"warn", LogLevel::warn}, {"info", LogLevel::info}, {"debug", LogLevel::debug}};
    level_ = levels.at(g.log_level);
  }

  void log(LogLevel level, const std::string& message) const {
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (level <= level_) err << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
  }

  fs::path output(const std::string& name) const {
    fs::create_directories(globals.out_dir);
    return fs::path(globals.out_dir) / name;
  }

  // An explicit --out wins; otherwise the default name under --out-dir.
  fs::path output_or(const std::string& explicit_path, const std::string& default_name) const {
    if (explicit_path.empty()) return output(default_name);
    fs::path p(explicit_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }

  const PromptTemplate& prompt_template() {
    if (globals.template_path.empty()) return PromptTemplate::builtin();
    if (!custom_template_) custom_template_ = PromptTemplate::load(globals.template_path);
    return *custom_template_;
  }

  void emit(const json& summary) const {
    if (!globals.pretty) out << summary.dump() << '\n';
  }

  const Globals& globals;
  std::ostream& out;
  std::ostream& err;

 private:
  LogLevel level_;
  std::optional<PromptTemplate> custom_template_;
};

// Every subcommand records its resolved options (defaults included) so the
// run can be repeated exactly.
void write_resolved_config(const Context& ctx, const CLI::App& root, const CLI::App& sub) {
  auto options_of = [](const CLI::App& app) {
    json opts = json::object();
    for (const CLI::Option* opt : app.get_options()) {
      if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
      std::string name = opt->get_single_name();
      std::vector<std::string> values = opt->results();
      if (values.empty()) {
        if (!opt->get_default_str().empty()) values.push_back(opt->get_default_str());
      }
      if (opt->get_type_size() == 0) {
        opts[name] = opt->count() > 0;
      } else if (values.empty()) {
        opts[name] = nullptr;
      } else if (values.size() == 1) {
        opts[name] = values.front();
      } else {
        opts[name] = values;
      }
    }
    return opts;
  };
  json doc = {{"command", sub.get_name()},
              {"global", options_of(root)},
              {"options", options_of(sub)},
              {"template_hash", PromptTemplate::builtin().hash()},
              {"written_at", utc_timestamp()}};
  if (!ctx.globals.template_path.empty()) doc["template_hash"] = PromptTemplate::load(ctx.globals.template_path).hash();
  write_text_file(ctx.output(sub.get_name() + "_config.json"), doc.dump(2) + "\n");
}

DatasetManifest load_dataset(const std::string& dataset, const std::string& split_file) {
  DatasetManifest m = read_dataset(dataset);
  if (!split_file.empty()) m.split_assignment = read_split_assignment(split_file);
  validate_manifest(m);
  return m;
}

std::string format_table(const MetricsReport& m) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(30) << "class" << std::right << std::setw(6) << "tp" << std::setw(6) << "fp"
      << std::setw(6) << "fn" << std::setw(10) << "precision" << std::setw(10) << "recall" << std::setw(10) << "f1"
      << '\n';
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    const auto& c = m.per_class[k];
    out << std::left << std::setw(30) << display_name_of(toxin_at(k)) << std::right << std::setw(6) << c.tp
        << std::setw(6) << c.fp << std::setw(6) << c.fn << std::setw(10) << c.precision << std::setw(10) << c.recall
        << std::setw(10) << c.f1 << '\n';
  }
  out << std::left << std::setw(48) << "micro" << std::right << std::setw(10) << m.micro.precision << std::setw(10)
      << m.micro.recall << std::setw(10) << m.micro.f1 << '\n';
  out << std::left << std::setw(48) << "macro" << std::right << std::setw(10) << m.macro.precision << std::setw(10)
      << m.macro.recall << std::setw(10) << m.macro.f1 << '\n';
  return out.str();
}

std::array<double, 3> parse_ratios(const std::string& text) {
  std::array<double, 3> r{};
  std::stringstream in(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i == 3) throw ConfigError("--ratios needs exactly three values");
    try {
      r[i++] = std::stod(item);
    } catch (const std::exception&) {
      throw ConfigError("--ratios: '" + item + "' is not a number");
    }
  }
  if (i != 3) throw ConfigError("--ratios needs exactly three values");
  return r;
}

LabelVector truth_from_json(const json& value) {
  if (value.is_array() && !value.empty() && value.front().is_string()) {
    LabelVector labels;
    for (const auto& key : value) {
      auto t = toxin_from_key(key.get<std::string>());
      if (!t) throw LabelError("truth", "unknown class key '" + key.get<std::string>() + "'");
      labels.set(*t);
    }
    return labels;
  }
  if (value.is_array() && value.empty()) return LabelVector{};
  return label_vector_from_json(value, "truth");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 870;
  double omission = 0.3;
  double commission = 0.05;
  double noise = 0.15;
  double missing = 0.05;
  std::string out;
};

void run_synth(Context& ctx, const SynthArgs& a) {
  SynthConfig cfg;
  cfg.n_cases = a.n;
  cfg.seed = ctx.globals.seed;
  cfg.history_omission_rate = a.omission;
  cfg.history_commission_rate = a.commission;
  cfg.noise_rate = a.noise;
  cfg.missing_rate = a.missing;
  DatasetManifest m = generate_synthetic(cfg);
  fs::path path = ctx.output_or(a.out, "dataset.jsonl");
  write_dataset(path, m);
  write_text_file(ctx.output("synth_generator.json"), cfg.to_json().dump(2) + "\n");
  ctx.log(LogLevel::info, "wrote " + std::to_string(m.cases.size()) + " cases to " + path.string());
  if (ctx.globals.pretty) {
    ctx.out << "cases: " << m.cases.size() << "\n";
    std::array<long, kNumToxins> counts{};
    for (const auto& c : m.cases) {
      for (std::size_t k = 0; k < kNumToxins; ++k) counts[k] += c.labels->test(k);
    }
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      ctx.out << std::left << std::setw(30) << display_name_of(toxin_at(k)) << counts[k] << "\n";
    }
  }
  ctx.emit({{"dataset", path.string()}, {"cases", m.cases.size()}});
}

struct SplitArgs {
  std::string dataset;
  std::string ratios = "0.5,0.2,0.3";
  std::string out;
};

void run_split(Context& ctx, const SplitArgs& a) {
  DatasetManifest m = load_dataset(a.dataset, "");
  SplitSpec spec{parse_ratios(a.ratios), ctx.globals.seed};
  SplitAssignment assignment = iterative_stratify(m, spec);
  fs::path path = ctx.output_or(a.out, "split.json");
  json doc = {{"ratios", spec.ratios}, {"seed", spec.seed}, {"assignment", split_assignment_to_json(assignment)}};
  write_text_file(path, doc.dump(2) + "\n");

  StratificationReport r = stratification_report(m, assignment, spec);
  json per_class = json::object();
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    per_class[std::string(key_of(toxin_at(k)))] = {{"positives", r.positives[k]},
                                                   {"max_fraction_deviation", r.max_fraction_deviation[k]}};
  }
  json report = {{"sizes", {{"train", r.sizes[0]}, {"val", r.sizes[1]}, {"test", r.sizes[2]}}},
                 {"target_sizes", {{"train", r.target_sizes[0]}, {"val", r.target_sizes[1]}, {"test", r.target_sizes[2]}}},
                 {"per_class", per_class},
                 {"max_pair_fraction_deviation", r.max_pair_fraction_deviation},
                 {"pairs_considered", r.pairs_considered}};
  write_text_file(ctx.output("split_report.json"), report.dump(2) + "\n");
  if (ctx.globals.pretty) {
    ctx.out << "train " << r.sizes[0] << " / val " << r.sizes[1] << " / test " << r.sizes[2] << "\n";
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      ctx.out << std::left << std::setw(30) << display_name_of(toxin_at(k)) << r.positives[k][0] << " / "
              << r.positives[k][1] << " / " << r.positives[k][2] << "\n";
    }
  }
  ctx.emit({{"split", path.string()}, {"sizes", report["sizes"]}});
}

struct ScoreArgs {
  std::string input;
  std::string completion;
  std::string truth;
  std::string reward = "f1";
  std::string out;
};

json score_json(const std::string& completion, const LabelVector& truth, RewardKind kind) {
  CompletionParse p = parse_completion(completion);
  RewardBreakdown r = composite_reward(p.parsed, p.components, truth, kind);
  return {{"r_task", r.r_task},
          {"r_format", r.r_format},
          {"total", r.total},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"has_reasoning_block", p.components.has_reasoning_block},
          {"has_valid_json", p.components.has_valid_json},
          {"has_all_keys", p.components.has_all_keys},
          {"parseable", p.parsed.predictions.has_value()}};
}

void run_score(Context& ctx, const ScoreArgs& a) {
  auto kind = reward_kind_from_name(a.reward);
  if (!kind) throw ConfigError("unknown reward kind '" + a.reward + "'");
  std::vector<json> results;
  if (!a.input.empty()) {
    std::ifstream in(a.input);
    if (!in) throw Error("cannot open '" + a.input + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      json doc = json::parse(line, nullptr, false);
      const std::string where = a.input + ":" + std::to_string(line_no);
      if (!doc.is_object() || !doc.contains("completion") || !doc["completion"].is_string() || !doc.contains("truth")) {
        throw SchemaError(where, "expected {\"completion\": string, \"truth\": labels}");
      }
      json r = score_json(doc["completion"].get<std::string>(), truth_from_json(doc["truth"]), *kind);
      if (doc.contains("case_id")) r["case_id"] = doc["case_id"];
      results.push_back(std::move(r));
    }
  } else {
    if (a.completion.empty()) throw ConfigError("score needs --input or --completion");
    json truth = json::array();
    std::stringstream in(a.truth);
    std::string key;
    while (std::getline(in, key, ',')) {
      if (!trim(key).empty()) truth.push_back(std::string(trim(key)));
    }
    results.push_back(score_json(a.completion, truth_from_json(truth), *kind));
  }
  std::string text;
  double total = 0.0;
  for (const auto& r : results) {
    text += r.dump() + "\n";
    total += r["total"].get<double>();
  }
  fs::path path = ctx.output_or(a.out, "scores.jsonl");
  write_text_file(path, text);
  double mean = results.empty() ? 0.0 : total / static_cast<double>(results.size());
  if (ctx.globals.pretty) ctx.out << "scored " << results.size() << " completions, mean reward " << mean << "\n";
  ctx.emit({{"scores", path.string()}, {"count", results.size()}, {"mean_reward", mean}});
}

struct EvalArgs {
  std::string dataset;
  std::string split_file;
  std::string split = "test";
  std::string predictor = "history";
  std::string reward = "f1";
  std::string toy_checkpoint;
  std::string mlp_model;
  std::string gateway_config;
  int workers = 1;
  std::string out;
};

std::unique_ptr<Predictor> build_predictor(const EvalArgs& a, std::uint64_t seed) {
  if (a.predictor == "history") return std::make_unique<HistoryPredictor>();
  if (a.predictor == "toy") {
    if (a.toy_checkpoint.empty()) throw ConfigError("--predictor toy needs --toy-checkpoint");
    return std::make_unique<ToyPredictor>(ToyPolicy::load(a.toy_checkpoint));
  }
  if (a.predictor == "mlp") {
    if (a.mlp_model.empty()) throw ConfigError("--predictor mlp needs --mlp-model");
    return std::make_unique<MlpPredictor>(load_mlp(a.mlp_model));
  }
  GatewayConfig gw;
  if (!a.gateway_config.empty()) {
    json doc = json::parse(read_text_file(a.gateway_config), nullptr, false);
    if (doc.is_discarded()) throw ConfigError("'" + a.gateway_config + "' is not valid JSON");
    gw = GatewayConfig::from_json(doc);
  }
  gw = GatewayConfig::from_environment(gw);
  gw.seed = seed;
  return std::make_unique<LlmPredictor>(gw);
}

void run_eval_command(Context& ctx, const EvalArgs& a) {
  DatasetManifest m = load_dataset(a.dataset, a.split_file);
  auto kind = reward_kind_from_name(a.reward);
  if (!kind) throw ConfigError("unknown reward kind '" + a.reward + "'");
  auto split = split_from_name(a.split);
  if (!split) throw ConfigError("unknown split '" + a.split + "'");
  if (!m.split_assignment) ctx.log(LogLevel::warn, "no split file given; evaluating every case");

  auto predictor = build_predictor(a, ctx.globals.seed);
  EvalOptions opts;
  opts.split = *split;
  opts.reward_kind = *kind;
  opts.seed = ctx.globals.seed;
  opts.workers = a.workers;
  opts.prompt_template = &ctx.prompt_template();
  EvalReport report = run_eval(m, *predictor, opts);

  fs::path path = ctx.output_or(a.out, "report.json");
  write_text_file(path, report_to_json(report).dump(2) + "\n");
  fs::path preds = path.parent_path() / "predictions.jsonl";
  write_predictions(preds, report.prediction_matrix());
  if (!report.failed.empty()) {
    ctx.log(LogLevel::warn, std::to_string(report.failed.size()) + " cases failed and are excluded from the metrics");
  }
  if (report.unparseable_count > 0) {
    ctx.log(LogLevel::warn, std::to_string(report.unparseable_count) + " outputs were unparseable (scored all-negative)");
  }
  if (ctx.globals.pretty) {
    ctx.out << "predictor " << report.metadata.predictor << ", " << report.rows.size() << " cases evaluated, "
            << report.failed.size() << " failed, " << report.unparseable_count << " unparseable\n";
    ctx.out << format_table(report.metrics);
  }
  ctx.emit({{"report", path.string()},
            {"predictions", preds.string()},
            {"cases", report.case_count()},
            {"failed", report.failed.size()},
            {"unparseable", report.unparseable_count},
            {"micro_f1", report.metrics.micro.f1},
            {"macro_f1", report.metrics.macro.f1},
            {"mean_reward", report.mean_reward}});
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string dataset;
  std::size_t sample_size = 25;
  std::string label_a = "a";
  std::string label_b = "b";
  std::string out;
};

void run_compare(Context& ctx, const CompareArgs& a) {
  DatasetManifest m = read_dataset(a.dataset);
  ExpertComparisonReport r =
      expert_comparison(read_predictions(a.a), read_predictions(a.b), truth_table(m), a.sample_size, ctx.globals.seed);
  r.label_a = a.label_a;
  r.label_b = a.label_b;
  fs::path path = ctx.output_or(a.out, "comparison.json");
  write_text_file(path, comparison_to_json(r).dump(2) + "\n");
  fs::path csv = path.parent_path() / "comparison.csv";
  write_text_file(csv, comparison_grid_csv(r));
  const auto& s = r.comparison.summary;
  if (ctx.globals.pretty) {
    ctx.out << r.label_a << " vs " << r.label_b << " on " << s.cases << " cases: micro-F1 " << r.micro_f1_pair() << "\n"
            << "perfect cases: " << s.perfect_a << " vs " << s.perfect_b << "\n"
            << "found by " << r.label_a << " missed by " << r.label_b << ": " << s.found_by_a_missed_by_b << "\n"
            << "found by " << r.label_b << " missed by " << r.label_a << ": " << s.found_by_b_missed_by_a << "\n";
  }
  ctx.emit({{"comparison", path.string()}, {"grid", csv.string()}, {"micro_f1", r.micro_f1_pair()}});
}

struct TrainToyArgs {
  std::string dataset;
  std::string split_file;
  long steps = 2000;
  double lr = 0.5;
  int batch = 16;
  int group = 4;
  long eval_every = 200;
  double clip_low = 0.2;
  double clip_high = 0.28;
  std::string reward = "f1";
  double init_scale = 0.01;
  double format_corruption = 0.0;
  std::string out;
};

void run_train_toy(Context& ctx, const TrainToyArgs& a) {
  DatasetManifest m = load_dataset(a.dataset, a.split_file);
  GrpoConfig cfg;
  cfg.max_steps = a.steps;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.group_size = a.group;
  cfg.eval_every = a.eval_every;
  cfg.clip_eps_low = a.clip_low;
  cfg.clip_eps_high = a.clip_high;
  cfg.seed = ctx.globals.seed;
  cfg.format_corruption_rate = a.format_corruption;
  auto kind = reward_kind_from_name(a.reward);
  if (!kind) throw ConfigError("unknown reward kind '" + a.reward + "'");
  cfg.reward_kind = *kind;
  cfg.validate();

  ToyPolicy policy = ToyPolicy::random_init(a.init_scale, derive_seed(ctx.globals.seed, 0x707));
  TrainResult result = train_loop(policy, m, cfg, ctx.prompt_template());

  fs::path path = ctx.output_or(a.out, "toy_checkpoint.json");
  policy.save(path);
  std::ostringstream csv;
  csv << "step,mean_reward,loss,val_micro_f1\n";
  for (const auto& h : result.history) {
    csv << h.step << ',' << h.mean_reward << ',' << h.loss << ',';
    if (h.val_micro_f1) csv << *h.val_micro_f1;
    csv << '\n';
  }
  fs::path history = path.parent_path() / "history.csv";
  write_text_file(history, csv.str());
  json summary = {{"checkpoint", path.string()},
                  {"history", history.string()},
                  {"steps", result.history.size()},
                  {"best_val_micro_f1", result.best_val_micro_f1},
                  {"best_step", result.best_step ? json(*result.best_step) : json(nullptr)}};
  if (ctx.globals.pretty) {
    ctx.out << "trained " << result.history.size() << " steps, best val micro-F1 " << result.best_val_micro_f1
            << "\n";
  }
  ctx.emit(summary);
}

struct TrainMlpArgs {
  std::string dataset;
  std::string split_file;
  int epochs = 200;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 32;
  int patience = 20;
  bool no_history = false;
  double threshold = 0.5;
  std::string out;
};

void run_train_mlp(Context& ctx, const TrainMlpArgs& a) {
  DatasetManifest m = load_dataset(a.dataset, a.split_file);
  if (!m.split_assignment) throw ConfigError("train-mlp needs --split-file");
  MlpHyperparams hp;
  hp.max_epochs = a.epochs;
  hp.learning_rate = a.lr;
  hp.momentum = a.momentum;
  hp.batch_size = a.batch;
  hp.patience = a.patience;
  hp.include_history = !a.no_history;
  hp.threshold = a.threshold;
  hp.seed = ctx.globals.seed;
  MlpTrainResult result = mlp_train(m, hp);
  fs::path path = ctx.output_or(a.out, "mlp_model.json");
  save_mlp(result.model, path);
  std::ostringstream csv;
  csv << "epoch,train_loss,val_micro_f1\n";
  for (const auto& h : result.history) csv << h.epoch << ',' << h.train_loss << ',' << h.val_micro_f1 << '\n';
  fs::path history = path.parent_path() / "mlp_history.csv";
  write_text_file(history, csv.str());
  double best = 0.0;
  for (const auto& h : result.history) {
    if (h.epoch == result.best_epoch) best = h.val_micro_f1;
  }
  if (ctx.globals.pretty) ctx.out << "best epoch " << result.best_epoch << ", val micro-F1 " << best << "\n";
  ctx.emit({{"model", path.string()},
            {"history", history.string()},
            {"best_epoch", result.best_epoch},
            {"best_val_micro_f1", best}});
}

struct ServeArgs {
  std::string config;
  int port = -1;
  std::string predictor;
  std::string audit_dir;
};

HttpServer* g_server = nullptr;

void run_serve(Context& ctx, const ServeArgs& a) {
  ServiceConfig cfg = a.config.empty() ? ServiceConfig{} : ServiceConfig::load(a.config);
  if (a.port >= 0) cfg.port = a.port;
  if (!a.predictor.empty()) cfg.predictor = a.predictor;
  if (!a.audit_dir.empty()) cfg.audit_dir = a.audit_dir;
  if (!ctx.globals.template_path.empty()) cfg.prompt_template = ctx.globals.template_path;
  PredictionService service(cfg, make_predictors(cfg));
  HttpServer server(service);
  int port = server.bind();
  ctx.log(LogLevel::info, "serving on " + cfg.host + ":" + std::to_string(port) + " with predictor " + cfg.predictor);
  ctx.emit({{"host", cfg.host}, {"port", port}, {"predictor", cfg.predictor}});
  ctx.out.flush();
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.listen();
  g_server = nullptr;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Toxin prediction toolkit: synthetic data, splits, rewards, evaluation, training and serving",
               "detoxr"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Base random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for all outputs")->capture_default_str();
  app.add_option("--log-level", g.log_level, "error, warn, info or debug")
      ->capture_default_str()
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  app.add_flag("--pretty", g.pretty, "Human-readable tables instead of JSON summaries");
  app.add_option("--template", g.template_path, "Prompt template file (default: built-in)");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  s_synth->add_option("--n", synth.n, "Number of cases")->capture_default_str();
  s_synth->add_option("--omission", synth.omission, "History omission rate")->capture_default_str();
  s_synth->add_option("--commission", synth.commission, "History commission rate")->capture_default_str();
  s_synth->add_option("--noise", synth.noise, "Symptom and clue noise rate")->capture_default_str();
  s_synth->add_option("--missing", synth.missing, "Missing-vital rate")->capture_default_str();
  s_synth->add_option("--out", synth.out, "Dataset path (default: <out-dir>/dataset.jsonl)");

  SplitArgs split;
  auto* s_split = app.add_subcommand("split", "Stratified train/val/test assignment");
  s_split->add_option("--dataset", split.dataset, "Dataset JSON-lines file")->required();
  s_split->add_option("--ratios", split.ratios, "train,val,test ratios")->capture_default_str();
  s_split->add_option("--out", split.out, "Split path (default: <out-dir>/split.json)");

  ScoreArgs score;
  auto* s_score = app.add_subcommand("score", "Score completions with the composite reward");
  s_score->add_option("--input", score.input, "JSON lines with completion and truth");
  s_score->add_option("--completion", score.completion, "A single completion text");
  s_score->add_option("--truth", score.truth, "Comma-separated positive class keys for --completion");
  s_score->add_option("--reward", score.reward, "f1 or iou")->capture_default_str()->check(CLI::IsMember({"f1", "iou"}));
  s_score->add_option("--out", score.out, "Scores path (default: <out-dir>/scores.jsonl)");

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "Evaluate a predictor on a dataset split");
  s_eval->add_option("--dataset", eval.dataset, "Dataset JSON-lines file")->required();
  s_eval->add_option("--split-file", eval.split_file, "Split assignment");
  s_eval->add_option("--split", eval.split, "train, val or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));
  s_eval->add_option("--predictor", eval.predictor, "history, mlp, toy or llm")
      ->capture_default_str()
      ->check(CLI::IsMember({"history", "mlp", "toy", "llm"}));
  s_eval->add_option("--reward", eval.reward, "f1 or iou")->capture_default_str()->check(CLI::IsMember({"f1", "iou"}));
  s_eval->add_option("--toy-checkpoint", eval.toy_checkpoint, "Toy policy checkpoint");
  s_eval->add_option("--mlp-model", eval.mlp_model, "MLP model file");
  s_eval->add_option("--gateway-config", eval.gateway_config, "Gateway JSON config");
  s_eval->add_option("--workers", eval.workers, "Concurrent cases")->capture_default_str()->check(CLI::PositiveNumber);
  s_eval->add_option("--out", eval.out, "Report path (default: <out-dir>/report.json)");

  CompareArgs compare;
  auto* s_compare = app.add_subcommand("compare", "Compare two prediction files on a random case sample");
  s_compare->add_option("--a", compare.a, "Prediction file A")->required();
  s_compare->add_option("--b", compare.b, "Prediction file B")->required();
  s_compare->add_option("--dataset", compare.dataset, "Dataset holding the truths")->required();
  s_compare->add_option("--sample-size", compare.sample_size, "Cases to sample")->capture_default_str();
  s_compare->add_option("--label-a", compare.label_a, "Name of side A")->capture_default_str();
  s_compare->add_option("--label-b", compare.label_b, "Name of side B")->capture_default_str();
  s_compare->add_option("--out", compare.out, "Report path (default: <out-dir>/comparison.json)");

  TrainToyArgs toy;
  auto* s_toy = app.add_subcommand("train-toy", "Train the toy policy with GRPO");
  s_toy->add_option("--dataset", toy.dataset, "Dataset JSON-lines file")->required();
  s_toy->add_option("--split-file", toy.split_file, "Split assignment")->required();
  s_toy->add_option("--steps", toy.steps, "Maximum steps")->capture_default_str();
  s_toy->add_option("--lr", toy.lr, "Learning rate")->capture_default_str();
  s_toy->add_option("--batch", toy.batch, "Prompts per step")->capture_default_str();
  s_toy->add_option("--group", toy.group, "Completions per prompt")->capture_default_str();
  s_toy->add_option("--eval-every", toy.eval_every, "Validation interval")->capture_default_str();
  s_toy->add_option("--clip-low", toy.clip_low, "Lower clip range")->capture_default_str();
  s_toy->add_option("--clip-high", toy.clip_high, "Upper clip range")->capture_default_str();
  s_toy->add_option("--reward", toy.reward, "f1 or iou")->capture_default_str()->check(CLI::IsMember({"f1", "iou"}));
  s_toy->add_option("--init-scale", toy.init_scale, "Initial weight scale")->capture_default_str();
  s_toy->add_option("--format-corruption", toy.format_corruption, "Completion corruption rate")
      ->capture_default_str();
  s_toy->add_option("--out", toy.out, "Checkpoint path (default: <out-dir>/toy_checkpoint.json)");

  TrainMlpArgs mlp;
  auto* s_mlp = app.add_subcommand("train-mlp", "Train the MLP baseline");
  s_mlp->add_option("--dataset", mlp.dataset, "Dataset JSON-lines file")->required();
  s_mlp->add_option("--split-file", mlp.split_file, "Split assignment")->required();
  s_mlp->add_option("--epochs", mlp.epochs, "Maximum epochs")->capture_default_str();
  s_mlp->add_option("--lr", mlp.lr, "Learning rate")->capture_default_str();
  s_mlp->add_option("--momentum", mlp.momentum, "Momentum")->capture_default_str();
  s_mlp->add_option("--batch", mlp.batch, "Mini-batch size, 0 for full batch")->capture_default_str();
  s_mlp->add_option("--patience", mlp.patience, "Early-stopping patience")->capture_default_str();
  s_mlp->add_flag("--no-history", mlp.no_history, "Exclude the reported history from the features");
  s_mlp->add_option("--threshold", mlp.threshold, "Decision threshold")->capture_default_str();
  s_mlp->add_option("--out", mlp.out, "Model path (default: <out-dir>/mlp_model.json)");

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "Run the HTTP prediction service");
  s_serve->add_option("--config", serve.config, "Service JSON config");
  s_serve->add_option("--port", serve.port, "Port override (0: any free port)");
  s_serve->add_option("--predictor", serve.predictor, "Predictor override")
      ->check(CLI::IsMember({"history", "mlp", "toy", "llm"}));
  s_serve->add_option("--audit-dir", serve.audit_dir, "Audit directory override");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    Context ctx(g, out, err);
    CLI::App* sub = app.get_subcommands().front();
    if (sub->get_name() != "serve") write_resolved_config(ctx, app, *sub);
    if (sub == s_synth) run_synth(ctx, synth);
    else if (sub == s_split) run_split(ctx, split);
    else if (sub == s_score) run_score(ctx, score);
    else if (sub == s_eval) run_eval_command(ctx, eval);
    else if (sub == s_compare) run_compare(ctx, compare);
    else if (sub == s_toy) run_train_toy(ctx, toy);
    else if (sub == s_mlp) run_train_mlp(ctx, mlp);
    else if (sub == s_serve) {
      write_resolved_config(ctx, app, *sub);
      run_serve(ctx, serve);
    }
    return kOk;
  } catch (const MissingLabelsError& e) {
    err << "error: " << e.what() << " (first unlabelled case: " << e.case_id() << ")\n";
  } catch (const ValidationError& e) {
    err << "error: validation failed: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kDomainError;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace detoxr::cli
